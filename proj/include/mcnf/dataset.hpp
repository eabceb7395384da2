#ifndef MCNF_DATASET_HPP
#define MCNF_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mcnf/linalg.hpp"
#include "mcnf/rng.hpp"

namespace mcnf {

// Feature matrix + target vector with split indices and the train-only
// standardization statistics.
struct Dataset {
  Matrix X;                       // N x d
  std::vector<double> y;          // N
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::vector<double> x_mean, x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
  bool standardized = false;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return X.cols(); }
};

struct SyntheticParams {
  double delta = 0.1;       // Poisson rate offset
  double beta = 0.05;       // heteroskedastic slope scale
  double b = 0.0;           // linear effect size
  double u_bar = 0.0;       // outlier threshold, P(outlier) = u_bar
  double gamma = 25.0;      // outlier magnitude
  double x_min = 0.0;
  double x_max = 10.0;
  bool squared_sine = false;  // sin^2(x) variant of the rate

  static SyntheticParams romano_original() { return SyntheticParams{}; }
  static SyntheticParams romano_mod() {
    SyntheticParams p;
    p.b = 2.0;
    return p;
  }
};

// y = Poisson(max(sin x + delta, 0)) + (beta*e1 + b)*x + 1(u <= u_bar)*gamma*e2
inline Dataset generate_romano(const SyntheticParams& p, std::size_t n,
                               std::uint64_t seed) {
  Dataset ds;
  ds.X = Matrix(n, 1);
  ds.y.resize(n);
  Rng rng = make_rng(seed, 0x5ddb);
  std::uniform_real_distribution<double> ux(p.x_min, p.x_max);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    const double s = p.squared_sine ? std::sin(x) * std::sin(x) : std::sin(x);
    const double rate = std::max(s + p.delta, 0.0);
    double pois = 0.0;
    if (rate > 0.0)
      pois = double(std::poisson_distribution<long>(rate)(rng));
    const double e1 = gaussian(rng);
    const double u = uniform01(rng);
    double outlier = 0.0;
    if (u <= p.u_bar) outlier = p.gamma * gaussian(rng);
    ds.X(i, 0) = x;
    ds.y[i] = pois + (p.beta * e1 + p.b) * x + outlier;
  }
  return ds;
}

// Outlier robustness study generator (1% outliers by default).
inline Dataset generate_outlier_study(double b, double gamma, std::size_t n,
                                      std::uint64_t seed,
                                      double outlier_rate = 0.01) {
  SyntheticParams p;
  p.b = b;
  p.gamma = gamma;
  p.u_bar = outlier_rate;
  return generate_romano(p, n, seed);
}

// Seeded shuffle, ratio split, then z-score standardization of features and
// target, fit on the train partition only.
inline void split_standardize(Dataset& ds, double ratio, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 5) throw std::invalid_argument("split_standardize: need N >= 5");
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("split_standardize: ratio must be in (0,1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, 0x51u);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t ntrain = std::size_t(std::floor(ratio * double(n)));
  ds.train_idx.assign(idx.begin(), idx.begin() + ntrain);
  ds.test_idx.assign(idx.begin() + ntrain, idx.end());

  const std::size_t d = ds.dim();
  ds.x_mean.assign(d, 0.0);
  ds.x_std.assign(d, 0.0);
  for (std::size_t i : ds.train_idx)
    for (std::size_t j = 0; j < d; ++j) ds.x_mean[j] += ds.X(i, j);
  for (auto& v : ds.x_mean) v /= double(ntrain);
  for (std::size_t i : ds.train_idx)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = ds.X(i, j) - ds.x_mean[j];
      ds.x_std[j] += diff * diff;
    }
  for (auto& v : ds.x_std) v = std::max(std::sqrt(v / double(ntrain)), 1e-12);

  ds.y_mean = 0.0;
  for (std::size_t i : ds.train_idx) ds.y_mean += ds.y[i];
  ds.y_mean /= double(ntrain);
  double yv = 0.0;
  for (std::size_t i : ds.train_idx) {
    const double diff = ds.y[i] - ds.y_mean;
    yv += diff * diff;
  }
  ds.y_std = std::max(std::sqrt(yv / double(ntrain)), 1e-12);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      ds.X(i, j) = (ds.X(i, j) - ds.x_mean[j]) / ds.x_std[j];
    ds.y[i] = (ds.y[i] - ds.y_mean) / ds.y_std;
  }
  ds.standardized = true;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline bool cell_empty(const std::string& s) {
  return s.find_first_not_of(" \t") == std::string::npos;
}

}  // namespace detail

// CSV ingestion: UTF-8, comma-delimited, header row. Rows with missing
// (empty) cells are dropped; non-numeric cells are an error.
inline Dataset load_csv(const std::string& path,
                        const std::string& target_column) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_csv: cannot open file " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_csv: empty file " + path);
  const auto header = detail::split_csv_line(line);
  std::size_t target = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target = j;
  if (target == header.size()) {
    std::string cols;
    for (const auto& h : header) cols += (cols.empty() ? "" : ", ") + h;
    throw std::runtime_error("load_csv: target column '" + target_column +
                             "' not found; available columns: " + cols);
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: row " + std::to_string(lineno) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(header.size()));
    bool missing = false;
    for (const auto& c : cells)
      if (detail::cell_empty(c)) missing = true;
    if (missing) continue;  // rows with missing values are dropped, not imputed
    std::vector<double> feats;
    double yv = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() ||
          std::string(end).find_first_not_of(" \t") != std::string::npos)
        throw std::runtime_error("load_csv: non-numeric cell '" + cells[j] +
                                 "' at row " + std::to_string(lineno) +
                                 ", column '" + header[j] + "'");
      if (j == target)
        yv = v;
      else
        feats.push_back(v);
    }
    rows.push_back(std::move(feats));
    targets.push_back(yv);
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no usable rows");

  Dataset ds;
  ds.X = Matrix(rows.size(), rows.front().size());
  ds.y = targets;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) ds.X(i, j) = rows[i][j];
  return ds;
}

// Export in the same CSV schema the loader accepts (for audit).
inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& target_column = "y") {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < ds.dim(); ++j) os << "x" << j << ",";
  os << target_column << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) os << ds.X(i, j) << ",";
    os << ds.y[i] << "\n";
  }
}

}  // namespace mcnf

#endif

#ifndef MCNF_STATS_HPP
#define MCNF_STATS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mcnf {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Unbiased (n-1) sample variance.
inline double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need n >= 2");
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / double(v.size() - 1);
}

// Empirical quantile with linear interpolation between order statistics:
// position p*(n-1) on the sorted sample. This is the single quantile rule
// used everywhere in the repo (MCD intervals, interval-size quantiles).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty vector");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double pos = p * double(sorted.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const double frac = pos - double(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

inline double gaussian_log_pdf(double x, double mu, double var) {
  static const double log2pi = std::log(2.0 * std::acos(-1.0));
  const double d = x - mu;
  return -0.5 * (log2pi + std::log(var) + d * d / var);
}

// Silverman's rule-of-thumb bandwidth for a Gaussian kernel.
inline double silverman_bandwidth(std::vector<double> v) {
  if (v.size() < 2) return 1.0;
  const double sd = std::sqrt(sample_variance(v));
  std::sort(v.begin(), v.end());
  const double iqr =
      quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (spread <= 0.0) spread = sd > 0.0 ? sd : 1.0;
  return 0.9 * spread * std::pow(double(v.size()), -0.2);
}

inline std::vector<double> kde_gaussian(const std::vector<double>& samples,
                                        const std::vector<double>& grid,
                                        double bandwidth) {
  if (bandwidth <= 0.0) throw std::invalid_argument("kde: bandwidth <= 0");
  std::vector<double> out(grid.size(), 0.0);
  const double norm =
      1.0 / (double(samples.size()) * bandwidth * std::sqrt(2.0 * std::acos(-1.0)));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : samples) {
      const double u = (grid[g] - s) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

}  // namespace mcnf

#endif

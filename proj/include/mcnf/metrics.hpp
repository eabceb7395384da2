#ifndef MCNF_METRICS_HPP
#define MCNF_METRICS_HPP

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcnf/stats.hpp"

namespace mcnf {

// Fraction of points covered by the closed interval [lo, hi].
inline double coverage(const std::vector<double>& y,
                       const std::vector<double>& lo,
                       const std::vector<double>& hi) {
  if (y.size() != lo.size() || y.size() != hi.size())
    throw std::invalid_argument("coverage: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] >= lo[i] && y[i] <= hi[i]) ++hits;
  return double(hits) / double(y.size());
}

// Empirical v-quantiles of the interval widths hi - lo.
inline std::vector<double> interval_size_quantiles(
    const std::vector<double>& lo, const std::vector<double>& hi,
    const std::vector<double>& v_set) {
  std::vector<double> widths(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) widths[i] = hi[i] - lo[i];
  std::sort(widths.begin(), widths.end());
  std::vector<double> out;
  out.reserve(v_set.size());
  for (double v : v_set) out.push_back(quantile_sorted(widths, v));
  return out;
}

inline double mae(const std::vector<double>& y,
                  const std::vector<double>& median_pred) {
  if (y.size() != median_pred.size())
    throw std::invalid_argument("mae: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += std::fabs(y[i] - median_pred[i]);
  return acc / double(y.size());
}

// Quantile MAE: mean of |y - lo| + |y - hi|.
inline double mae_q(const std::vector<double>& y,
                    const std::vector<double>& lo,
                    const std::vector<double>& hi) {
  if (y.size() != lo.size() || y.size() != hi.size())
    throw std::invalid_argument("mae_q: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += std::fabs(y[i] - lo[i]) + std::fabs(y[i] - hi[i]);
  return acc / double(y.size());
}

inline const std::vector<double>& delta_v_levels() {
  static const std::vector<double> v{0.05, 0.25, 0.5, 0.75, 0.95};
  return v;
}

struct ReportPoint {
  double y = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double median = 0.0;
};

struct ReportSummary {
  double coverage = 0.0;
  double delta_median = 0.0;
  std::vector<double> delta_v;  // at delta_v_levels()
  double mae = 0.0;
  double mae_q = 0.0;
};

// Per-method predicted intervals for one run, plus derived statistics.
struct IntervalReport {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<ReportPoint> points;

  ReportSummary summarize() const {
    if (points.empty()) throw std::runtime_error("empty report");
    std::vector<double> y, lo, hi, med;
    for (const auto& p : points) {
      y.push_back(p.y);
      lo.push_back(p.lo);
      hi.push_back(p.hi);
      med.push_back(p.median);
    }
    ReportSummary s;
    s.coverage = mcnf::coverage(y, lo, hi);
    s.delta_v = interval_size_quantiles(lo, hi, delta_v_levels());
    s.delta_median = s.delta_v[2];
    s.mae = mcnf::mae(y, med);
    s.mae_q = mcnf::mae_q(y, lo, hi);
    return s;
  }
};

inline void write_report_csv(const IntervalReport& r, std::ostream& os) {
  os << "y,lo,hi,median,covered\n";
  os.precision(17);
  for (const auto& p : r.points)
    os << p.y << "," << p.lo << "," << p.hi << "," << p.median << ","
       << ((p.y >= p.lo && p.y <= p.hi) ? 1 : 0) << "\n";
}

inline nlohmann::json report_summary_json(const IntervalReport& r) {
  const ReportSummary s = r.summarize();
  nlohmann::json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["coverage"] = s.coverage;
  j["delta_median"] = s.delta_median;
  j["delta_v_levels"] = delta_v_levels();
  j["delta_v"] = s.delta_v;
  j["mae"] = s.mae;
  j["mae_q"] = s.mae_q;
  j["n_points"] = r.points.size();
  return j;
}

inline void write_report_json(const IntervalReport& r, std::ostream& os) {
  os << report_summary_json(r).dump(2) << "\n";
}

}  // namespace mcnf

#endif

#ifndef MCNF_CONFORMAL_HPP
#define MCNF_CONFORMAL_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcnf/mc_dropout.hpp"

namespace mcnf {

struct CalibrationSplit {
  std::vector<std::size_t> cal_idx;   // indices into the test partition
  std::vector<std::size_t> eval_idx;  // the remaining test indices
};

// Carve the calibration set out of the test partition (seeded).
inline CalibrationSplit make_calibration_split(
    const std::vector<std::size_t>& test_idx, double cal_fraction,
    std::uint64_t seed) {
  if (cal_fraction <= 0.0 || cal_fraction >= 1.0)
    throw std::invalid_argument("cal_fraction must be in (0,1)");
  std::vector<std::size_t> idx = test_idx;
  Rng rng = make_rng(seed, 0xca);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t ncal =
      std::size_t(std::floor(cal_fraction * double(idx.size())));
  CalibrationSplit s;
  s.cal_idx.assign(idx.begin(), idx.begin() + ncal);
  s.eval_idx.assign(idx.begin() + ncal, idx.end());
  return s;
}

// CQR nonconformity score; negative iff y lies strictly inside [lo, hi].
inline double cqr_score(double y, double lo, double hi) {
  return std::max(lo - y, y - hi);
}

struct ConformalAdjustment {
  double q_hat = 0.0;
};

// q_hat = the ceil((n+1)(1-alpha))-th smallest score.
inline ConformalAdjustment calibrate(std::vector<double> scores, double alpha) {
  const std::size_t n = scores.size();
  const std::size_t k =
      std::size_t(std::ceil(double(n + 1) * (1.0 - alpha)));
  if (k < 1 || k > n)
    throw std::runtime_error(
        "calibrate: need at least ceil(1/alpha)-1 = " +
        std::to_string(std::size_t(std::ceil(1.0 / alpha)) - 1) +
        " calibration scores, got " + std::to_string(n));
  std::sort(scores.begin(), scores.end());
  return {scores[k - 1]};
}

// Homogeneous symmetric widening (q_hat may be negative and shrink the
// interval; crossed endpoints are clamped into sorted order).
inline Interval conformalize(const Interval& iv,
                             const ConformalAdjustment& adj) {
  const double lo = iv.lo - adj.q_hat;
  const double hi = iv.hi + adj.q_hat;
  return {std::min(lo, hi), std::max(lo, hi), iv.median};
}

struct ConformalConfig {
  double alpha = 0.1;
  double cal_fraction = 0.2;
};

struct ConformalRun {
  CalibrationSplit split;
  ConformalAdjustment adjustment;
  std::vector<std::size_t> eval_idx;       // dataset indices evaluated
  std::vector<Interval> intervals;         // adjusted, one per eval index
};

namespace detail {

template <typename IntervalFn>
ConformalRun run_split_conformal(const Dataset& ds, const ConformalConfig& cfg,
                                 std::uint64_t seed, IntervalFn&& base_interval) {
  ConformalRun run;
  run.split = make_calibration_split(ds.test_idx, cfg.cal_fraction, seed);
  std::vector<double> scores;
  scores.reserve(run.split.cal_idx.size());
  for (std::size_t i : run.split.cal_idx) {
    const Interval iv = base_interval(i);
    scores.push_back(cqr_score(ds.y[i], iv.lo, iv.hi));
  }
  run.adjustment = calibrate(std::move(scores), cfg.alpha);
  run.eval_idx = run.split.eval_idx;
  run.intervals.reserve(run.eval_idx.size());
  for (std::size_t i : run.eval_idx)
    run.intervals.push_back(conformalize(base_interval(i), run.adjustment));
  return run;
}

}  // namespace detail

// CQR: conformalize the deterministic DQR q05/q95 heads.
inline ConformalRun run_cqr(QuantileNet& net, const Dataset& ds,
                            const ConformalConfig& cfg, std::uint64_t seed) {
  return detail::run_split_conformal(ds, cfg, seed, [&](std::size_t i) {
    const auto q = net.predict_quantiles(ds.X.row_vec(i), false);
    return Interval{q[0], q[2], q[1]};
  });
}

// MCCP: the same pipeline with MCQR intervals as the base.
inline ConformalRun run_mccp(QuantileNet& net, const Dataset& ds,
                             const ConformalConfig& cfg,
                             std::size_t n_resamples, std::uint64_t seed) {
  return detail::run_split_conformal(ds, cfg, seed, [&](std::size_t i) {
    return mcqr_intervals(net, ds.X.row_vec(i), n_resamples,
                          mix_seed(seed, 0xcc00 + i));
  });
}

}  // namespace mcnf

#endif

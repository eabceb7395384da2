#ifndef MCNF_MC_DROPOUT_HPP
#define MCNF_MC_DROPOUT_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcnf/quantile_net.hpp"
#include "mcnf/stats.hpp"

namespace mcnf {

constexpr double kVarianceFloor = 1e-12;

// Per-observation MC Dropout sample set and its summary statistics.
struct McdSummary {
  std::vector<double> samples;  // q50 draws with dropout active
  double mean = 0.0;
  double log_var = 0.0;         // log of the floored unbiased sample variance
  std::vector<double> proxy;    // averaged hidden proxy h(x)
  std::size_t n_mcd = 0;

  double variance() const { return std::exp(log_var); }
};

struct McdConfig {
  std::size_t n_samples = 50;
  std::size_t baseline_resamples = 1000;
};

inline McdSummary mcd_sample(QuantileNet& net, const std::vector<double>& x,
                             std::size_t n_mcd, std::uint64_t seed) {
  if (n_mcd < 2)
    throw std::invalid_argument("mcd_sample: n_MCD must be >= 2");
  McdSummary s;
  s.n_mcd = n_mcd;
  s.samples.reserve(n_mcd);
  s.proxy.assign(net.proxy_width(), 0.0);
  Rng rng = make_rng(seed, 0x4d);
  std::vector<double> proxy;
  for (std::size_t i = 0; i < n_mcd; ++i) {
    const auto q = net.predict_quantiles(x, true, &rng, &proxy);
    s.samples.push_back(q[1]);
    for (std::size_t j = 0; j < proxy.size(); ++j) s.proxy[j] += proxy[j];
  }
  for (auto& v : s.proxy) v /= double(n_mcd);
  s.mean = mean(s.samples);
  const double var = std::max(sample_variance(s.samples), kVarianceFloor);
  s.log_var = std::log(var);
  return s;
}

// Context vector c = { mean, log variance, averaged proxy }.
inline std::vector<double> build_context(const McdSummary& s) {
  std::vector<double> c;
  c.reserve(s.proxy.size() + 2);
  c.push_back(s.mean);
  c.push_back(s.log_var);
  c.insert(c.end(), s.proxy.begin(), s.proxy.end());
  return c;
}

// Gaussian prior density from the MCD summary statistics.
inline double prior_log_density(const McdSummary& s, double y) {
  return gaussian_log_pdf(y, s.mean, std::max(s.variance(), kVarianceFloor));
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double median = 0.0;
};

// Conventional MCD baseline: empirical quantiles of dropout-resampled q50.
inline Interval mcd_predictive_intervals(QuantileNet& net,
                                         const std::vector<double>& x,
                                         std::size_t n_resamples,
                                         double alpha, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x4e);
  std::vector<double> draws(n_resamples);
  for (auto& d : draws) d = net.predict_quantiles(x, true, &rng)[1];
  std::sort(draws.begin(), draws.end());
  return {quantile_sorted(draws, alpha), quantile_sorted(draws, 1.0 - alpha),
          quantile_sorted(draws, 0.5)};
}

// MCQR baseline: averages of the q05/q95 (and q50) heads over dropout passes.
inline Interval mcqr_intervals(QuantileNet& net, const std::vector<double>& x,
                               std::size_t n_resamples, std::uint64_t seed) {
  if (net.config().dropout_rate == 0.0) {
    // every pass is identical; MCQR collapses to the deterministic DQR heads
    const auto q = net.predict_quantiles(x, false);
    return {q[0], q[2], q[1]};
  }
  Rng rng = make_rng(seed, 0x4f);
  double lo = 0.0, hi = 0.0, med = 0.0;
  for (std::size_t i = 0; i < n_resamples; ++i) {
    const auto q = net.predict_quantiles(x, true, &rng);
    lo += q[0];
    med += q[1];
    hi += q[2];
  }
  const double n = double(n_resamples);
  return {lo / n, hi / n, med / n};
}

}  // namespace mcnf

#endif

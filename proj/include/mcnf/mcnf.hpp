#ifndef MCNF_MCNF_HPP
#define MCNF_MCNF_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mcnf/adam.hpp"
#include "mcnf/flow.hpp"
#include "mcnf/mc_dropout.hpp"
#include "mcnf/quantile_net.hpp"

namespace mcnf {

struct McnfConfig {
  double tau = 1e10;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t n_nf = 500;
  std::size_t n_mcd = 50;
};

// MCNF: a frozen quantile-regression base plus a conditional flow over
// prediction errors delta = y - y_MCD. The base is never touched here.
class McnfModel {
 public:
  McnfModel(QuantileNet& base, FlowConfig flow_cfg, McnfConfig cfg,
            std::uint64_t seed)
      : base_(&base), flow_(flow_cfg, seed), cfg_(cfg) {}

  QuantileNet& base() { return *base_; }
  ConditionalFlow& flow() { return flow_; }
  const McnfConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  QuantileNet* base_;
  ConditionalFlow flow_;
  McnfConfig cfg_;
  bool trained_ = false;
};

struct BootstrapEntry {
  std::size_t obs;         // index into the training observations
  std::size_t mcd_sample;  // which retained MCD draw realizes delta
};
using BootstrapBatch = std::vector<BootstrapEntry>;

// MCD summaries (with the raw draws retained) for every training observation.
inline std::vector<McdSummary> precompute_summaries(
    QuantileNet& net, const Dataset& ds, std::size_t n_mcd,
    std::uint64_t seed) {
  std::vector<McdSummary> out;
  out.reserve(ds.train_idx.size());
  for (std::size_t k = 0; k < ds.train_idx.size(); ++k) {
    const std::size_t i = ds.train_idx[k];
    out.push_back(mcd_sample(net, ds.X.row_vec(i), n_mcd,
                             mix_seed(seed, 0x100 + i)));
  }
  return out;
}

// One epoch of mini-batches: a shuffled partition of the observation
// indices, with a fresh uniformly drawn MCD sample index per observation.
inline std::vector<BootstrapBatch> build_epoch_batches(std::size_t n_obs,
                                                       std::size_t n_mcd,
                                                       std::size_t batch_size,
                                                       Rng& rng) {
  std::vector<std::size_t> order(n_obs);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, n_mcd - 1);
  std::vector<BootstrapBatch> batches;
  for (std::size_t start = 0; start < n_obs; start += batch_size) {
    BootstrapBatch b;
    const std::size_t end = std::min(start + batch_size, n_obs);
    for (std::size_t k = start; k < end; ++k)
      b.push_back({order[k], pick(rng)});
    batches.push_back(std::move(b));
  }
  return batches;
}

// Temperature-scaled softmax of the prior log-densities over one batch.
// Observations with low prior density (outliers) are down-weighted; as
// tau -> infinity the weights become uniform 1/|batch|.
inline std::vector<double> batch_weights(const std::vector<double>& prior_logp,
                                         double tau) {
  if (tau <= 0.0) throw std::invalid_argument("batch_weights: tau must be > 0");
  std::vector<double> w(prior_logp.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double lp : prior_logp) mx = std::max(mx, lp / tau);
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(prior_logp[i] / tau - mx);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Weighted forward-KL training of the flow head. The base model is frozen;
// every epoch re-realizes delta_n from a fresh bootstrap draw.
inline std::vector<double> train_mcnf(McnfModel& model, const Dataset& ds,
                                      const std::vector<McdSummary>& summaries,
                                      std::uint64_t seed) {
  const McnfConfig& cfg = model.config();
  const std::size_t n_obs = ds.train_idx.size();
  if (summaries.size() != n_obs)
    throw std::invalid_argument("train_mcnf: one summary per training obs required");

  std::vector<std::vector<double>> contexts(n_obs);
  std::vector<double> prior_lp(n_obs);
  for (std::size_t k = 0; k < n_obs; ++k) {
    contexts[k] = build_context(summaries[k]);
    prior_lp[k] = prior_log_density(summaries[k], ds.y[ds.train_idx[k]]);
  }

  ConditionalFlow& flow = model.flow();
  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
  Rng batch_rng = make_rng(seed, 0x7);
  std::vector<double> trace;
  trace.reserve(cfg.epochs);
  std::vector<double> gbuf;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches =
        build_epoch_batches(n_obs, cfg.n_mcd, cfg.batch_size, batch_rng);
    double epoch_loss = 0.0;
    for (const auto& batch : batches) {
      std::vector<double> deltas, lps, ws;
      std::vector<std::vector<double>> ctxs;
      for (const auto& e : batch) {
        const std::size_t i = ds.train_idx[e.obs];
        deltas.push_back(ds.y[i] - summaries[e.obs].samples[e.mcd_sample]);
        ctxs.push_back(contexts[e.obs]);
        lps.push_back(prior_lp[e.obs]);
      }
      ws = batch_weights(lps, cfg.tau);
      const double loss = flow.batch_gradient(deltas, ctxs, ws, gbuf);
      const auto params = flow.parameters();
      std::vector<double*> gptrs(gbuf.size());
      for (std::size_t i = 0; i < gbuf.size(); ++i) gptrs[i] = &gbuf[i];
      opt.step(params, gptrs);
      epoch_loss += loss;
    }
    trace.push_back(epoch_loss / double(batches.size()));
  }
  model.mark_trained();
  return trace;
}

struct McnfSamples {
  std::vector<double> y;         // predictive samples
  std::vector<double> log_dens;  // per-sample predictive log-densities
  McdSummary summary;            // the warm-up prior draws behind them
};

namespace detail {

inline McnfSamples mcnf_infer_impl(McnfModel& model,
                                   const std::vector<double>& x,
                                   std::size_t n_nf, std::uint64_t seed,
                                   bool resample_prior) {
  if (!model.trained())
    throw std::logic_error("infer: flow head has not been trained");
  if (n_nf < 1) throw std::invalid_argument("infer: n_NF must be >= 1");
  McnfSamples out;
  out.summary =
      mcd_sample(model.base(), x, model.config().n_mcd, mix_seed(seed, 0x9));
  const auto c = build_context(out.summary);
  model.flow().sample(c, n_nf, mix_seed(seed, 0xa), out.y, out.log_dens);
  Rng jrng = make_rng(seed, 0xb);
  std::uniform_int_distribution<std::size_t> pick(0, out.summary.n_mcd - 1);
  for (std::size_t k = 0; k < n_nf; ++k) {
    const double prior =
        resample_prior ? out.summary.samples[pick(jrng)] : out.summary.mean;
    out.y[k] = prior + out.y[k];  // y = y_MCD + delta
  }
  return out;
}

}  // namespace detail

// Full hierarchical inference: warm-up MCD draws, flow residual samples,
// prior resampling to propagate epistemic uncertainty.
inline McnfSamples infer(McnfModel& model, const std::vector<double>& x,
                         std::size_t n_nf, std::uint64_t seed) {
  return detail::mcnf_infer_impl(model, x, n_nf, seed, true);
}

// Ablation: residuals are added to the single prior mean instead of
// resampled prior draws (no epistemic propagation).
inline McnfSamples infer_nf_ablation(McnfModel& model,
                                     const std::vector<double>& x,
                                     std::size_t n_nf, std::uint64_t seed) {
  return detail::mcnf_infer_impl(model, x, n_nf, seed, false);
}

inline Interval predictive_interval(McnfModel& model,
                                    const std::vector<double>& x,
                                    double alpha, std::size_t n_nf,
                                    std::uint64_t seed) {
  auto s = infer(model, x, n_nf, seed);
  std::sort(s.y.begin(), s.y.end());
  return {quantile_sorted(s.y, alpha), quantile_sorted(s.y, 1.0 - alpha),
          quantile_sorted(s.y, 0.5)};
}

}  // namespace mcnf

#endif

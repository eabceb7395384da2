#ifndef MCNF_FLOW_HPP
#define MCNF_FLOW_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcnf/layers.hpp"
#include "mcnf/spline.hpp"
#include "mcnf/stats.hpp"

namespace mcnf {

struct FlowConfig {
  std::size_t layers = 2;
  std::size_t knots = 16;
  double tail_bound = 5.0;
  std::size_t conditioner_hidden = 64;
  std::size_t context_dim = 0;
  double min_bin_frac = 1e-3;
  double min_deriv = 1e-3;
};

// Conditional normalizing flow for a scalar variable: a stack of
// rational-quadratic spline bijections whose knot parameters come from
// per-layer conditioner MLPs fed the context vector, over a trainable
// Gaussian base.
//
// Sampling runs z ~ N(mu, sigma) forward through layer 0 then 1;
// density evaluation inverts in the opposite order.
class ConditionalFlow {
 public:
  ConditionalFlow(FlowConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.context_dim == 0)
      throw std::invalid_argument("flow: context_dim must be set");
    const std::size_t out = RqSplineParams::raw_size(cfg.knots);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      // zero-init head: the flow starts as the identity map
      conditioners_.push_back(
          make_mlp(cfg.context_dim,
                   {cfg.conditioner_hidden, cfg.conditioner_hidden}, out,
                   mix_seed(seed, 0xf0 + l), true));
    }
  }

  const FlowConfig& config() const { return cfg_; }
  double base_mu() const { return base_mu_; }
  double base_log_sigma() const { return base_log_sigma_; }
  void set_base(double mu, double log_sigma) {
    base_mu_ = mu;
    base_log_sigma_ = log_sigma;
  }
  Network& conditioner(std::size_t l) { return conditioners_[l]; }

  std::vector<double*> parameters() {
    std::vector<double*> out;
    for (auto& c : conditioners_)
      for (double* p : c.parameters()) out.push_back(p);
    out.push_back(&base_mu_);
    out.push_back(&base_log_sigma_);
    return out;
  }

  // Spline parameters for every layer at one context.
  std::vector<RqSplineParams> condition(const std::vector<double>& c) {
    if (c.size() != cfg_.context_dim)
      throw std::invalid_argument("flow: context width mismatch");
    std::vector<RqSplineParams> out;
    out.reserve(conditioners_.size());
    const Matrix cm = Matrix::from_row(c);
    for (auto& cond : conditioners_) {
      Matrix raw = cond.forward(cm, Mode{false, false});
      out.push_back(RqSplineParams::from_raw(raw.row(0), cfg_.knots,
                                             cfg_.tail_bound,
                                             cfg_.min_bin_frac,
                                             cfg_.min_deriv));
    }
    return out;
  }

  double log_prob_conditioned(const std::vector<RqSplineParams>& splines,
                              double delta) const {
    double logp = 0.0;
    double cur = delta;
    for (auto it = splines.rbegin(); it != splines.rend(); ++it) {
      const SplineResult r = spline_inverse(*it, cur);
      logp += r.log_abs_det;
      cur = r.value;
    }
    const double sigma2 = std::exp(2.0 * base_log_sigma_);
    return logp + gaussian_log_pdf(cur, base_mu_, sigma2);
  }

  double log_prob(double delta, const std::vector<double>& c) {
    return log_prob_conditioned(condition(c), delta);
  }

  // Draw n samples for one context; log-probs are assessed in the same
  // forward pass from the accumulated Jacobian.
  void sample(const std::vector<double>& c, std::size_t n, std::uint64_t seed,
              std::vector<double>& samples, std::vector<double>& log_probs) {
    const auto splines = condition(c);
    samples.resize(n);
    log_probs.resize(n);
    Rng rng = make_rng(seed, 0xf1);
    const double sigma = std::exp(base_log_sigma_);
    for (std::size_t i = 0; i < n; ++i) {
      double z = base_mu_ + sigma * gaussian(rng);
      double logp = gaussian_log_pdf(z, base_mu_, sigma * sigma);
      for (const auto& sp : splines) {
        const SplineResult r = spline_forward(sp, z);
        logp -= r.log_abs_det;
        z = r.value;
      }
      samples[i] = z;
      log_probs[i] = logp;
    }
  }

  // One weighted NLL mini-batch: accumulates parameter gradients (aligned
  // with parameters()) and returns the batch loss
  //   L = -sum_n w_n (log base(inv(delta_n)) + inverse log-dets).
  double batch_gradient(const std::vector<double>& deltas,
                        const std::vector<std::vector<double>>& contexts,
                        const std::vector<double>& weights,
                        std::vector<double>& grad_out) {
    const std::size_t b = deltas.size();
    if (contexts.size() != b || weights.size() != b)
      throw std::invalid_argument("flow batch: misaligned inputs");
    const std::size_t L = conditioners_.size();
    const std::size_t raw_n = RqSplineParams::raw_size(cfg_.knots);

    Matrix cm(b, cfg_.context_dim);
    for (std::size_t r = 0; r < b; ++r) {
      if (contexts[r].size() != cfg_.context_dim)
        throw std::invalid_argument("flow batch: context width mismatch");
      for (std::size_t j = 0; j < cfg_.context_dim; ++j)
        cm(r, j) = contexts[r][j];
    }

    std::vector<Matrix> raws;
    raws.reserve(L);
    for (auto& cond : conditioners_) {
      cond.zero_grad();
      raws.push_back(cond.forward(cm, Mode{true, false}));
    }

    std::vector<Matrix> gouts(L, Matrix(b, raw_n));
    double loss = 0.0;
    double g_mu = 0.0, g_log_sigma = 0.0;
    const double sigma2 = std::exp(2.0 * base_log_sigma_);

    for (std::size_t r = 0; r < b; ++r) {
      // invert through the stack, top layer first, carrying d(logp)/d(state)
      double cur = deltas[r];
      std::vector<SplineInvGrad> inv(L);
      std::vector<double> entry(L);  // value fed into each layer's inverse
      for (std::size_t li = L; li-- > 0;) {
        entry[li] = cur;
        RqSplineParams sp = RqSplineParams::from_raw(
            raws[li].row(r), cfg_.knots, cfg_.tail_bound, cfg_.min_bin_frac,
            cfg_.min_deriv);
        inv[li] = spline_inverse_with_grad(sp, cur);
        cur = inv[li].z;
      }
      const double z0 = cur;
      const double lb = gaussian_log_pdf(z0, base_mu_, sigma2);
      double logp = lb;
      for (const auto& g : inv) logp += g.log_abs_det;
      loss -= weights[r] * logp;
      if (!std::isfinite(loss))
        throw std::runtime_error("flow batch: non-finite loss at delta=" +
                                 std::to_string(deltas[r]));

      const double dlb_dz = -(z0 - base_mu_) / sigma2;
      g_mu += -weights[r] * ((z0 - base_mu_) / sigma2);
      g_log_sigma += -weights[r] * ((z0 - base_mu_) * (z0 - base_mu_) / sigma2 - 1.0);

      // chain d(logp)/d(raw_l): the base term enters through z, the log-det
      // terms of deeper (earlier-inverted) layers enter through their input.
      double g_in = dlb_dz;  // d(logp)/d(output of layer li's inverse)
      for (std::size_t li = 0; li < L; ++li) {
        const auto& g = inv[li];
        for (std::size_t j = 0; j < raw_n; ++j)
          gouts[li](r, j) =
              -weights[r] * (g_in * g.dz_draw[j] + g.dld_draw[j]);
        g_in = g_in * g.dz_dx + g.dld_dx;
      }
    }

    // backprop the conditioners and collect everything in parameter order
    grad_out.clear();
    for (std::size_t li = 0; li < L; ++li) {
      conditioners_[li].backward(gouts[li]);
      for (double* g : conditioners_[li].gradients()) grad_out.push_back(*g);
    }
    grad_out.push_back(g_mu);
    grad_out.push_back(g_log_sigma);
    return loss;
  }

 private:
  FlowConfig cfg_;
  std::vector<Network> conditioners_;
  double base_mu_ = 0.0;
  double base_log_sigma_ = 0.0;
};

}  // namespace mcnf

#endif

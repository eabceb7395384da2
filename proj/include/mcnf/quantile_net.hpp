#ifndef MCNF_QUANTILE_NET_HPP
#define MCNF_QUANTILE_NET_HPP

#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mcnf/adam.hpp"
#include "mcnf/dataset.hpp"
#include "mcnf/layers.hpp"

namespace mcnf {

struct QuantileNetConfig {
  std::size_t hidden_width = 64;
  double dropout_rate = 0.1;
  std::size_t proxy_tap = 2;  // 1-based hidden block whose ReLU output is h(x)
  std::array<double, 3> levels = {0.05, 0.5, 0.95};
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
};

// Pinball loss summed over the quantile levels.
inline double pinball_loss(double y, const std::array<double, 3>& q_hat,
                           const std::array<double, 3>& levels) {
  double loss = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double e = y - q_hat[k];
    loss += std::max(levels[k] * e, (levels[k] - 1.0) * e);
  }
  return loss;
}

// Deep Quantile Regressor: BatchNorm input, two Dense+ReLU+Dropout blocks,
// 3-unit linear head bound to levels {0.05, 0.5, 0.95}.
class QuantileNet {
 public:
  QuantileNet(std::size_t input_dim, QuantileNetConfig cfg, std::uint64_t seed)
      : cfg_(cfg), input_dim_(input_dim), seed_(seed) {
    if (cfg.proxy_tap < 1 || cfg.proxy_tap > 2)
      throw std::invalid_argument("proxy_tap must be 1 or 2 for this layer plan");
    Rng rng = make_rng(seed, 0x1);
    net_.add<BatchNormLayer>(input_dim);
    net_.add<DenseLayer>(input_dim, cfg.hidden_width, rng);
    net_.add<ReluLayer>();                      // layer 2: block-1 tap
    net_.add<DropoutLayer>(cfg.dropout_rate);
    net_.add<DenseLayer>(cfg.hidden_width, cfg.hidden_width, rng);
    net_.add<ReluLayer>();                      // layer 5: block-2 tap
    net_.add<DropoutLayer>(cfg.dropout_rate);
    net_.add<DenseLayer>(cfg.hidden_width, 3, rng);
  }

  const QuantileNetConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t proxy_width() const { return cfg_.hidden_width; }
  std::uint64_t seed() const { return seed_; }
  Network& network() { return net_; }

  void set_dropout_rate(double r) {
    cfg_.dropout_rate = r;
    dynamic_cast<DropoutLayer&>(net_.layer(3)).set_rate(r);
    dynamic_cast<DropoutLayer&>(net_.layer(6)).set_rate(r);
  }

  // One forward pass; returns the three quantile heads, optionally the
  // hidden proxy h(x) from the same pass.
  std::array<double, 3> predict_quantiles(const std::vector<double>& x,
                                          bool dropout_active,
                                          Rng* rng = nullptr,
                                          std::vector<double>* proxy = nullptr) {
    if (x.size() != input_dim_)
      throw std::invalid_argument("predict_quantiles: input width mismatch");
    Matrix out = net_.forward(Matrix::from_row(x),
                              Mode{false, dropout_active}, rng);
    if (proxy != nullptr) *proxy = net_.activation(tap_layer_index()).row_vec(0);
    return {out(0, 0), out(0, 1), out(0, 2)};
  }

  std::vector<double> hidden_proxy(const std::vector<double>& x,
                                   bool dropout_active, Rng* rng = nullptr) {
    std::vector<double> proxy;
    predict_quantiles(x, dropout_active, rng, &proxy);
    return proxy;
  }

  std::size_t tap_layer_index() const { return cfg_.proxy_tap == 1 ? 2 : 5; }

  std::uint64_t parameter_hash() {
    // FNV-1a over the raw parameter bytes; used for freeze assertions.
    std::uint64_t h = 1469598103934665603ULL;
    for (double* p : net_.parameters()) {
      const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < sizeof(double); ++i)
        h = (h ^ bytes[i]) * 1099511628211ULL;
    }
    return h;
  }

 private:
  QuantileNetConfig cfg_;
  std::size_t input_dim_;
  std::uint64_t seed_;
  Network net_;
};

// Mini-batch pinball training with Adam + decoupled weight decay.
// Returns the per-epoch mean training loss.
inline std::vector<double> train(QuantileNet& qnet, const Dataset& ds,
                                 const TrainConfig& cfg) {
  if (!ds.standardized)
    throw std::invalid_argument("train: dataset must be split and standardized");
  Network& net = qnet.network();
  const auto& levels = qnet.config().levels;
  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng shuffle_rng = make_rng(cfg.seed, 0x2);
  Rng dropout_rng = make_rng(cfg.seed, 0x3);
  const auto params = net.parameters();
  const auto grads = net.gradients();

  std::vector<std::size_t> order = ds.train_idx;
  std::vector<double> trace;
  trace.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
      Matrix xb(bsz, ds.dim());
      std::vector<double> yb(bsz);
      for (std::size_t r = 0; r < bsz; ++r) {
        const std::size_t i = order[start + r];
        for (std::size_t j = 0; j < ds.dim(); ++j) xb(r, j) = ds.X(i, j);
        yb[r] = ds.y[i];
      }
      net.zero_grad();
      Matrix out = net.forward(xb, Mode{true, true}, &dropout_rng);
      Matrix gout(bsz, 3);
      double batch_loss = 0.0;
      for (std::size_t r = 0; r < bsz; ++r) {
        for (std::size_t k = 0; k < 3; ++k) {
          const double e = yb[r] - out(r, k);
          batch_loss += std::max(levels[k] * e, (levels[k] - 1.0) * e);
          gout(r, k) = (e > 0.0 ? -levels[k] : 1.0 - levels[k]) / double(bsz);
        }
      }
      batch_loss /= double(bsz);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error(
            "train: non-finite pinball loss at epoch " +
            std::to_string(epoch) + ", batch offset " + std::to_string(start));
      net.backward(gout);
      opt.step(params, grads);
      epoch_loss += batch_loss * double(bsz);
      seen += bsz;
    }
    trace.push_back(epoch_loss / double(seen ? seen : 1));
  }
  return trace;
}

}  // namespace mcnf

#endif

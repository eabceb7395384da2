#ifndef MCNF_LAYERS_HPP
#define MCNF_LAYERS_HPP

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mcnf/linalg.hpp"
#include "mcnf/rng.hpp"

namespace mcnf {

// Forward-pass mode. train drives both caching and batch statistics;
// dropout can be switched on independently for MC Dropout inference.
struct Mode {
  bool train = false;
  bool dropout = false;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x, Mode mode, Rng* rng) = 0;
  virtual Matrix backward(const Matrix& gout) = 0;
  virtual std::size_t out_width(std::size_t in_width) const = 0;
  virtual std::string plan() const = 0;

  // Trainable parameter blocks and their gradient blocks, same order.
  virtual std::vector<std::vector<double>*> param_blocks() { return {}; }
  virtual std::vector<std::vector<double>*> grad_blocks() { return {}; }
  // Non-trainable state that still belongs in a checkpoint.
  virtual std::vector<std::vector<double>*> state_blocks() { return {}; }

  void zero_grad() {
    for (auto* g : grad_blocks()) std::fill(g->begin(), g->end(), 0.0);
  }

 protected:
  void require_cache(bool have) const {
    if (!have)
      throw std::logic_error("backward called without a cached forward pass");
  }
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Rng& rng, bool zero_init = false)
      : in_(in), out_(out), w_(in * out, 0.0), b_(out, 0.0),
        gw_(in * out, 0.0), gb_(out, 0.0) {
    if (!zero_init) {
      // Kaiming-style uniform fan-in init for ReLU stacks.
      const double bound = std::sqrt(6.0 / double(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : w_) v = u(rng);
    }
  }

  std::size_t out_width(std::size_t in_width) const override {
    if (in_width != in_)
      throw std::invalid_argument("dense: fan-in mismatch");
    return out_;
  }

  std::string plan() const override {
    return "dense " + std::to_string(in_) + " " + std::to_string(out_);
  }

  Matrix forward(const Matrix& x, Mode mode, Rng*) override {
    check_width(x, in_, "dense forward");
    Matrix y(x.rows(), out_);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double* xr = x.row(r);
      double* yr = y.row(r);
      for (std::size_t o = 0; o < out_; ++o) {
        double acc = b_[o];
        const double* wo = &w_[o * in_];
        for (std::size_t i = 0; i < in_; ++i) acc += wo[i] * xr[i];
        yr[o] = acc;
      }
    }
    if (mode.train) {
      cached_input_ = x;
      has_cache_ = true;
    }
    return y;
  }

  Matrix backward(const Matrix& gout) override {
    require_cache(has_cache_);
    const Matrix& x = cached_input_;
    Matrix gin(x.rows(), in_);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double* gr = gout.row(r);
      const double* xr = x.row(r);
      double* gi = gin.row(r);
      for (std::size_t o = 0; o < out_; ++o) {
        const double g = gr[o];
        gb_[o] += g;
        double* gwo = &gw_[o * in_];
        const double* wo = &w_[o * in_];
        for (std::size_t i = 0; i < in_; ++i) {
          gwo[i] += g * xr[i];
          gi[i] += g * wo[i];
        }
      }
    }
    return gin;
  }

  std::vector<std::vector<double>*> param_blocks() override { return {&w_, &b_}; }
  std::vector<std::vector<double>*> grad_blocks() override { return {&gw_, &gb_}; }

  std::size_t fan_in() const { return in_; }
  std::size_t fan_out() const { return out_; }
  std::vector<double>& weights() { return w_; }
  std::vector<double>& bias() { return b_; }

 private:
  std::size_t in_, out_;
  std::vector<double> w_, b_, gw_, gb_;
  Matrix cached_input_;
  bool has_cache_ = false;
};

class ReluLayer : public Layer {
 public:
  std::size_t out_width(std::size_t in_width) const override { return in_width; }
  std::string plan() const override { return "relu"; }

  Matrix forward(const Matrix& x, Mode mode, Rng*) override {
    Matrix y = x;
    for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;  // subgradient at 0 is 0
    if (mode.train) {
      cached_input_ = x;
      has_cache_ = true;
    }
    return y;
  }

  Matrix backward(const Matrix& gout) override {
    require_cache(has_cache_);
    Matrix gin = gout;
    for (std::size_t i = 0; i < gin.data().size(); ++i)
      if (!(cached_input_.data()[i] > 0.0)) gin.data()[i] = 0.0;
    return gin;
  }

 private:
  Matrix cached_input_;
  bool has_cache_ = false;
};

class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0)
      throw std::invalid_argument("dropout rate must be in [0,1)");
  }

  std::size_t out_width(std::size_t in_width) const override { return in_width; }
  std::string plan() const override {
    std::ostringstream os;
    os << "dropout " << rate_;
    return os.str();
  }

  double rate() const { return rate_; }
  void set_rate(double r) { rate_ = r; }
  const std::vector<double>& last_mask() const { return mask_.data(); }

  Matrix forward(const Matrix& x, Mode mode, Rng* rng) override {
    const bool active = mode.dropout && rate_ > 0.0;
    if (!active) {
      if (mode.train) {
        mask_ = Matrix(x.rows(), x.cols(), 1.0);
        has_cache_ = true;
      }
      return x;
    }
    if (rng == nullptr)
      throw std::invalid_argument("dropout active but no rng supplied");
    const double keep = 1.0 - rate_;
    const double scale = 1.0 / keep;
    Matrix y = x;
    mask_ = Matrix(x.rows(), x.cols(), 0.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < y.data().size(); ++i) {
      if (u(*rng) < keep) {
        mask_.data()[i] = scale;
        y.data()[i] *= scale;
      } else {
        y.data()[i] = 0.0;
      }
    }
    has_cache_ = mode.train;
    return y;
  }

  Matrix backward(const Matrix& gout) override {
    require_cache(has_cache_);
    Matrix gin = gout;
    for (std::size_t i = 0; i < gin.data().size(); ++i)
      gin.data()[i] *= mask_.data()[i];
    return gin;
  }

 private:
  double rate_;
  Matrix mask_;
  bool has_cache_ = false;
};

class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(std::size_t width, double momentum = 0.1,
                          double eps = 1e-5)
      : width_(width), momentum_(momentum), eps_(eps),
        gamma_(width, 1.0), beta_(width, 0.0),
        run_mean_(width, 0.0), run_var_(width, 1.0),
        ggamma_(width, 0.0), gbeta_(width, 0.0) {}

  std::size_t out_width(std::size_t in_width) const override {
    if (in_width != width_)
      throw std::invalid_argument("batchnorm: width mismatch");
    return width_;
  }

  std::string plan() const override {
    std::ostringstream os;
    os << "batchnorm " << width_ << " " << momentum_ << " " << eps_;
    return os.str();
  }

  Matrix forward(const Matrix& x, Mode mode, Rng*) override {
    check_width(x, width_, "batchnorm forward");
    const std::size_t m = x.rows();
    Matrix y(m, width_);
    if (mode.train) {
      batch_mean_.assign(width_, 0.0);
      batch_var_.assign(width_, 0.0);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < width_; ++j) batch_mean_[j] += x(r, j);
      for (auto& v : batch_mean_) v /= double(m);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < width_; ++j) {
          const double d = x(r, j) - batch_mean_[j];
          batch_var_[j] += d * d;
        }
      for (auto& v : batch_var_) v /= double(m);
      inv_std_.assign(width_, 0.0);
      for (std::size_t j = 0; j < width_; ++j)
        inv_std_[j] = 1.0 / std::sqrt(batch_var_[j] + eps_);
      xhat_ = Matrix(m, width_);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < width_; ++j) {
          xhat_(r, j) = (x(r, j) - batch_mean_[j]) * inv_std_[j];
          y(r, j) = gamma_[j] * xhat_(r, j) + beta_[j];
        }
      for (std::size_t j = 0; j < width_; ++j) {
        run_mean_[j] = (1.0 - momentum_) * run_mean_[j] + momentum_ * batch_mean_[j];
        run_var_[j] = (1.0 - momentum_) * run_var_[j] + momentum_ * batch_var_[j];
      }
      has_cache_ = true;
      cached_train_ = true;
    } else {
      // Inference: deterministic affine map from running statistics.
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < width_; ++j) {
          const double inv = 1.0 / std::sqrt(run_var_[j] + eps_);
          y(r, j) = gamma_[j] * (x(r, j) - run_mean_[j]) * inv + beta_[j];
        }
    }
    return y;
  }

  Matrix backward(const Matrix& gout) override {
    require_cache(has_cache_ && cached_train_);
    const std::size_t m = gout.rows();
    Matrix gin(m, width_);
    for (std::size_t j = 0; j < width_; ++j) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        sum_g += gout(r, j);
        sum_gx += gout(r, j) * xhat_(r, j);
      }
      gbeta_[j] += sum_g;
      ggamma_[j] += sum_gx;
      const double gmean = sum_g / double(m);
      const double gxmean = sum_gx / double(m);
      for (std::size_t r = 0; r < m; ++r) {
        gin(r, j) = gamma_[j] * inv_std_[j] *
                    (gout(r, j) - gmean - xhat_(r, j) * gxmean);
      }
    }
    return gin;
  }

  std::vector<std::vector<double>*> param_blocks() override {
    return {&gamma_, &beta_};
  }
  std::vector<std::vector<double>*> grad_blocks() override {
    return {&ggamma_, &gbeta_};
  }
  std::vector<std::vector<double>*> state_blocks() override {
    return {&run_mean_, &run_var_};
  }

 private:
  std::size_t width_;
  double momentum_, eps_;
  std::vector<double> gamma_, beta_, run_mean_, run_var_, ggamma_, gbeta_;
  std::vector<double> batch_mean_, batch_var_, inv_std_;
  Matrix xhat_;
  bool has_cache_ = false;
  bool cached_train_ = false;
};

// A plain layer stack. Caches per-layer outputs of the last forward pass so
// hidden activations can be tapped (MCNF proxy).
class Network {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Matrix forward(const Matrix& x, Mode mode, Rng* rng = nullptr) {
    acts_.clear();
    acts_.reserve(layers_.size());
    Matrix cur = x;
    for (auto& l : layers_) {
      cur = l->forward(cur, mode, rng);
      acts_.push_back(cur);
    }
    trained_forward_ = mode.train;
    return cur;
  }

  // Gradient of the scalar loss w.r.t. the input; parameter gradients are
  // accumulated inside the layers.
  Matrix backward(const Matrix& gout) {
    if (!trained_forward_)
      throw std::logic_error("backward called without a training forward pass");
    Matrix cur = gout;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      cur = (*it)->backward(cur);
    return cur;
  }

  const Matrix& activation(std::size_t layer_index) const {
    if (layer_index >= acts_.size())
      throw std::out_of_range("activation: no cached output for layer");
    return acts_[layer_index];
  }

  void zero_grad() {
    for (auto& l : layers_) l->zero_grad();
  }

  std::vector<double*> parameters() {
    std::vector<double*> out;
    for (auto& l : layers_)
      for (auto* blk : l->param_blocks())
        for (auto& v : *blk) out.push_back(&v);
    return out;
  }

  std::vector<double*> gradients() {
    std::vector<double*> out;
    for (auto& l : layers_)
      for (auto* blk : l->grad_blocks())
        for (auto& v : *blk) out.push_back(&v);
    return out;
  }

  std::vector<std::string> plan() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) out.push_back(l->plan());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Matrix> acts_;
  bool trained_forward_ = false;
};

// MLP builder used by the flow conditioner and tests.
inline Network make_mlp(std::size_t in, const std::vector<std::size_t>& hidden,
                        std::size_t out, std::uint64_t seed,
                        bool zero_init_head = false) {
  Network net;
  Rng rng = make_rng(seed, 0x11);
  std::size_t cur = in;
  for (std::size_t h : hidden) {
    net.add<DenseLayer>(cur, h, rng);
    net.add<ReluLayer>();
    cur = h;
  }
  net.add<DenseLayer>(cur, out, rng, zero_init_head);
  return net;
}

}  // namespace mcnf

#endif

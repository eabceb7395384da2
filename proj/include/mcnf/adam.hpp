#ifndef MCNF_ADAM_HPP
#define MCNF_ADAM_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcnf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied as shrinkage before the update
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step(const std::vector<double*>& params,
            const std::vector<double*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("adam: params/grads misaligned");
    if (m_.empty()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    } else if (m_.size() != params.size()) {
      throw std::invalid_argument("adam: parameter count changed");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = *grads[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient at parameter " +
                                 std::to_string(i) + " (step " +
                                 std::to_string(t_) + ")");
      double& p = *params[i];
      if (cfg_.weight_decay != 0.0) p *= 1.0 - cfg_.lr * cfg_.weight_decay;
      double& m = m_[i];
      double& v = v_[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      p -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace mcnf

#endif

#ifndef IFRP_OPTIM_HPP
#define IFRP_OPTIM_HPP

#include "ifrp/nn/layers.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace ifrp {

struct RMSpropConfig {
  double learning_rate = 1e-3;
  double rho = 0.99;  // squared-gradient averaging coefficient (1 - decay)
  double eps = 1e-8;
};

// v <- rho v + (1 - rho) g^2;  w <- w - lr g / (sqrt(v) + eps)
template <typename Scalar>
class RMSprop {
 public:
  RMSprop(std::vector<nn::Param<Scalar>*> params, RMSpropConfig config) : params_(std::move(params)), config_(config) {
    if (!(config_.learning_rate >= 0)) throw std::invalid_argument("RMSprop: learning_rate must be >= 0");
    if (!(config_.rho >= 0 && config_.rho < 1)) throw std::invalid_argument("RMSprop: rho must lie in [0,1)");
    for (auto* p : params_) {
      Tensor<Scalar> t(p->value.shape());
      square_avg_.push_back(std::move(t));
    }
  }

  void step() {
    const Scalar lr = Scalar(config_.learning_rate), rho = Scalar(config_.rho), eps = Scalar(config_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& v = square_avg_[i].vec();
      const auto& g = params_[i]->grad.vec();
      v = rho * v + (Scalar(1) - rho) * g.cwiseAbs2();
      if (lr == Scalar(0)) continue;
      params_[i]->value.vec().array() -= lr * g.array() / (v.array().sqrt() + eps);
    }
  }

  void zero_grad() { nn::zero_grad(params_); }

  const std::vector<nn::Param<Scalar>*>& params() const { return params_; }
  const RMSpropConfig& config() const { return config_; }
  std::vector<Tensor<Scalar>>& state() { return square_avg_; }
  const std::vector<Tensor<Scalar>>& state() const { return square_avg_; }

 private:
  std::vector<nn::Param<Scalar>*> params_;
  RMSpropConfig config_;
  std::vector<Tensor<Scalar>> square_avg_;
};

}  // namespace ifrp

#endif  // IFRP_OPTIM_HPP

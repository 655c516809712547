#ifndef IFRP_LOSSES_HPP
#define IFRP_LOSSES_HPP

#include "ifrp/extractor.hpp"
#include "ifrp/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ifrp {

struct LossWeights {
  double lambda0 = 1e-2;
  double eta0 = 1e-3;
  double decay_rate = 0.995;
};

template <typename Scalar>
struct LossValue {
  Scalar value = 0;
  Tensor<Scalar> grad;  // w.r.t. the (first) differentiable argument
};

template <typename Scalar>
struct PairLossValue {
  Scalar value = 0;
  Tensor<Scalar> grad_real;
  Tensor<Scalar> grad_fake;
};

inline constexpr double kProbClamp = 1e-7;

// Batch mean of per-sample squared Frobenius distances, normalized by the
// number of elements per sample.
template <typename Scalar>
LossValue<Scalar> mean_squared_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_squared_distance");
  const Scalar norm = Scalar(a.size());
  LossValue<Scalar> out;
  out.grad = Tensor<Scalar>(a.shape());
  out.grad.vec() = a.vec() - b.vec();
  out.value = out.grad.vec().squaredNorm() / norm;
  out.grad.vec() *= Scalar(2) / norm;
  return out;
}

template <typename Scalar>
LossValue<Scalar> pixel_loss(const Tensor<Scalar>& gen, const Tensor<Scalar>& gt) {
  return mean_squared_distance(gen, gt);
}

// The ground-truth branch is treated as constant data.
template <typename Scalar>
LossValue<Scalar> identity_loss(const Tensor<Scalar>& gen, const Tensor<Scalar>& gt,
                                FeatureExtractor<Scalar>& psi) {
  require_same_shape(gen.shape(), gt.shape(), "identity_loss");
  const Tensor<Scalar> target = psi.forward(gt);
  const Tensor<Scalar> features = psi.forward(gen);
  LossValue<Scalar> feat = mean_squared_distance(features, target);
  return {feat.value, psi.backward(feat.grad)};
}

namespace detail {
template <typename Scalar>
Scalar clamp_prob(Scalar p) {
  return std::clamp(p, Scalar(kProbClamp), Scalar(1 - kProbClamp));
}
template <typename Scalar>
bool inside_clamp(Scalar p) {
  return p > Scalar(kProbClamp) && p < Scalar(1 - kProbClamp);
}
}  // namespace detail

// mean(-log d_real - log(1 - d_fake))
template <typename Scalar>
PairLossValue<Scalar> discriminator_loss(const Tensor<Scalar>& d_real, const Tensor<Scalar>& d_fake) {
  require_same_shape(d_real.shape(), d_fake.shape(), "discriminator_loss");
  const Scalar n = Scalar(d_real.n());
  PairLossValue<Scalar> out{0, Tensor<Scalar>(d_real.shape()), Tensor<Scalar>(d_fake.shape())};
  for (Index i = 0; i < d_real.size(); ++i) {
    const Scalar r = detail::clamp_prob(d_real.data()[i]);
    const Scalar f = detail::clamp_prob(d_fake.data()[i]);
    out.value += -std::log(r) - std::log(Scalar(1) - f);
    out.grad_real.data()[i] = detail::inside_clamp(d_real.data()[i]) ? Scalar(-1) / (r * n) : Scalar(0);
    out.grad_fake.data()[i] = detail::inside_clamp(d_fake.data()[i]) ? Scalar(1) / ((Scalar(1) - f) * n) : Scalar(0);
  }
  out.value /= n;
  return out;
}

// Non-saturating generator term mean(-log d_fake).
template <typename Scalar>
LossValue<Scalar> generator_adversarial_loss(const Tensor<Scalar>& d_fake) {
  const Scalar n = Scalar(d_fake.n());
  LossValue<Scalar> out{0, Tensor<Scalar>(d_fake.shape())};
  for (Index i = 0; i < d_fake.size(); ++i) {
    const Scalar f = detail::clamp_prob(d_fake.data()[i]);
    out.value += -std::log(f);
    out.grad.data()[i] = detail::inside_clamp(d_fake.data()[i]) ? Scalar(-1) / (f * n) : Scalar(0);
  }
  out.value /= n;
  return out;
}

template <typename Scalar>
Scalar srn_total_loss(Scalar pix, Scalar adv, Scalar id, Scalar lambda_n, Scalar eta_n) {
  return pix + lambda_n * adv + eta_n * id;
}

// max(base * rate^n, base / 2)
inline double decay_schedule(double base, long long epoch, double rate = 0.995) {
  if (epoch < 0) throw std::invalid_argument("decay_schedule: negative epoch");
  return std::max(base * std::pow(rate, static_cast<double>(epoch)), base / 2);
}

}  // namespace ifrp

#endif  // IFRP_LOSSES_HPP

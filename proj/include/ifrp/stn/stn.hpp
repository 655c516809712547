#ifndef IFRP_STN_STN_HPP
#define IFRP_STN_STN_HPP

#include "ifrp/nn/layers.hpp"
#include "ifrp/stn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ifrp::stn {

struct LocConv {
  Index channels;
  bool pool;  // 2x2 max pooling after the ReLU
};

// Localization network layout: 3x3 stride-1 convolutions with ReLU, optional
// 2x2 pooling, then FC(features, hidden) + ReLU and FC(hidden, 4).
//
// Pooled convolutions use "same" padding. The final convolution is unpadded
// when its input is at least 3x3, which collapses the 4x4 maps of the
// reference inputs to 2x2x20 = 80 features for the first FC layer. Pooling is
// skipped once a map is 1 pixel wide so reduced-size networks stay valid.
struct LocNetSpec {
  Index height = 0, width = 0, channels = 0;
  std::vector<LocConv> convs;
  Index hidden = 20;

  struct Resolved {
    Index height, width, channels;
    Index pad;
    bool pool;
  };

  // Per-conv output geometry (after pooling).
  std::vector<Resolved> resolve() const {
    std::vector<Resolved> out;
    Index h = height, w = width, c = channels;
    for (size_t i = 0; i < convs.size(); ++i) {
      const bool last = i + 1 == convs.size();
      Index pad = 1;
      if (last && !convs[i].pool && h >= 3 && w >= 3) pad = 0;
      h = h + 2 * pad - 2;
      w = w + 2 * pad - 2;
      c = convs[i].channels;
      const bool pool = convs[i].pool && h >= 2 && w >= 2;
      if (pool) {
        h /= 2;
        w /= 2;
      }
      out.push_back({h, w, c, pad, pool});
    }
    return out;
  }

  Index flattened_features() const {
    const auto r = resolve();
    if (r.empty()) return height * width * channels;
    return r.back().height * r.back().width * r.back().channels;
  }

  // Layer lists of the four reference localization networks, keyed 1..4.
  // `width_scale` multiplies the 64/128/256-wide layers (1.0 reproduces them).
  static LocNetSpec reference(int which, Index height, Index width, Index channels,
                              double width_scale = 1.0) {
    auto sc = [&](Index c) {
      return std::max<Index>(4, static_cast<Index>(std::lround(static_cast<double>(c) * width_scale)));
    };
    LocNetSpec s;
    s.height = height;
    s.width = width;
    s.channels = channels;
    switch (which) {
      case 1:
        s.convs = {{sc(64), true}, {sc(128), true}, {sc(256), true}, {20, true}, {20, false}};
        break;
      case 2:
        s.convs = {{sc(128), true}, {sc(256), true}, {20, true}, {20, false}};
        break;
      case 3:
        s.convs = {{sc(256), true}, {20, true}, {20, false}};
        break;
      case 4:
        s.convs = {{sc(64), true}, {sc(128), true}, {sc(256), true}, {20, false}};
        break;
      default:
        throw std::invalid_argument("LocNetSpec::reference: unknown network " + std::to_string(which));
    }
    return s;
  }
};

template <typename Scalar>
class LocalizationNet final : public nn::Layer<Scalar> {
 public:
  LocalizationNet(const std::string& name, LocNetSpec spec) : spec_(std::move(spec)) {
    const auto geom = spec_.resolve();
    Index in = spec_.channels;
    for (size_t i = 0; i < spec_.convs.size(); ++i) {
      const std::string ln = name + ".conv" + std::to_string(i + 1);
      convs_.push_back(&body_.template add<nn::Conv2d<Scalar>>(ln, in, spec_.convs[i].channels, 3,
                                                               1, geom[i].pad));
      body_.template add<nn::ReLU<Scalar>>();
      if (geom[i].pool) body_.template add<nn::MaxPool2x2<Scalar>>();
      in = spec_.convs[i].channels;
    }
    fc1_ = &body_.template add<nn::Linear<Scalar>>(name + ".fc1", spec_.flattened_features(),
                                                   spec_.hidden);
    body_.template add<nn::ReLU<Scalar>>();
    fc2_ = &body_.template add<nn::Linear<Scalar>>(name + ".fc2", spec_.hidden, 4);
  }

  const LocNetSpec& spec() const { return spec_; }
  nn::Linear<Scalar>& output_layer() { return *fc2_; }

  // He-normal hidden layers; the output layer starts at zero so the initial
  // transform is the identity.
  void initialize(std::uint64_t seed) {
    for (auto* c : convs_) {
      nn::init_normal(c->weight(), Scalar(std::sqrt(2.0 / (9.0 * c->in_channels()))), seed);
      c->bias().value.set_zero();
    }
    nn::init_normal(fc1_->weight(), Scalar(std::sqrt(2.0 / static_cast<double>(fc1_->in_features()))), seed);
    fc1_->bias().value.set_zero();
    fc2_->weight().value.set_zero();
    fc2_->bias().value.set_zero();
  }

  // N x 4 x 1 x 1 transform parameters (log_scale, rotation, tx, ty).
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (x.c() != spec_.channels || x.h() != spec_.height || x.w() != spec_.width) {
      throw ShapeError("LocalizationNet: input " + x.shape().str() + " does not match spec " +
                       std::to_string(spec_.channels) + "x" + std::to_string(spec_.height) + "x" +
                       std::to_string(spec_.width));
    }
    return body_.forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return body_.backward(g); }
  void parameters(std::vector<nn::Param<Scalar>*>& out) override { body_.parameters(out); }
  void set_training(bool t) override {
    this->training_ = t;
    body_.set_training(t);
  }

 private:
  LocNetSpec spec_;
  nn::Sequential<Scalar> body_;
  std::vector<nn::Conv2d<Scalar>*> convs_;
  nn::Linear<Scalar>* fc1_ = nullptr;
  nn::Linear<Scalar>* fc2_ = nullptr;
};

template <typename Scalar>
std::vector<TransformParams> localize(LocalizationNet<Scalar>& net, const Tensor<Scalar>& x) {
  const Tensor<Scalar> theta = net.forward(x);
  std::vector<TransformParams> out;
  for (Index n = 0; n < theta.n(); ++n) {
    const Scalar* t = theta.sample_data(n);
    out.push_back({static_cast<double>(t[0]), static_cast<double>(t[1]), static_cast<double>(t[2]),
                   static_cast<double>(t[3])});
  }
  return out;
}

// Localization net + grid generator + bilinear sampler. In identity mode the
// localization output is ignored and the layer passes its input through.
template <typename Scalar>
class SpatialTransformer final : public nn::Layer<Scalar> {
 public:
  SpatialTransformer(const std::string& name, LocNetSpec spec) : loc_(name + ".loc", std::move(spec)) {}

  LocalizationNet<Scalar>& localization() { return loc_; }
  void set_identity_mode(bool on) { identity_mode_ = on; }
  bool identity_mode() const { return identity_mode_; }
  const Tensor<Scalar>& last_params() const { return theta_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (identity_mode_) return x;
    input_ = x;
    theta_ = loc_.forward(x);
    std::vector<Affine2x3<Scalar>> transforms;
    transforms.reserve(static_cast<size_t>(x.n()));
    for (Index n = 0; n < x.n(); ++n) {
      const Scalar* t = theta_.sample_data(n);
      transforms.push_back(params_to_affine<Scalar>(t[0], t[1], t[2], t[3]));
    }
    grid_ = generate_grid<Scalar>(transforms, x.h(), x.w());
    return bilinear_sample(x, grid_);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    if (identity_mode_) return g;
    auto sg = bilinear_sample_backward(input_, grid_, g);
    const auto dm = generate_grid_backward(sg.grid);
    Tensor<Scalar> dtheta(theta_.shape());
    for (Index n = 0; n < theta_.n(); ++n) {
      const Scalar* t = theta_.sample_data(n);
      const auto d = affine_to_params_grad<Scalar>(t[0], t[1], dm[static_cast<size_t>(n)]);
      for (int i = 0; i < 4; ++i) dtheta.sample_data(n)[i] = d[i];
    }
    Tensor<Scalar> dx = loc_.backward(dtheta);
    dx.vec() += sg.input.vec();
    return dx;
  }

  void parameters(std::vector<nn::Param<Scalar>*>& out) override { loc_.parameters(out); }
  void set_training(bool t) override {
    this->training_ = t;
    loc_.set_training(t);
  }

 private:
  LocalizationNet<Scalar> loc_;
  bool identity_mode_ = false;
  Tensor<Scalar> input_, theta_;
  SamplingGrid<Scalar> grid_;
};

}  // namespace ifrp::stn

#endif  // IFRP_STN_STN_HPP

#ifndef IFRP_NETWORKS_HPP
#define IFRP_NETWORKS_HPP

#include "ifrp/nn/layers.hpp"
#include "ifrp/stn/stn.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifrp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SRNConfig {
  Index image_size = 128;
  Index base_channels = 32;
  Index depth = 5;                // number of 4x4/s2 encoder layers
  Index residual_blocks = 3;      // per skip connection
  bool use_stn = true;
  bool skip_connections = true;
  double negative_slope = 0.2;
  double bn_momentum = 0.9;

  // Channels produced by encoder level `level` (level 0 is the RGB input).
  Index channels(Index level) const { return level == 0 ? 3 : base_channels << (level - 1); }
  double loc_width_scale() const { return static_cast<double>(base_channels) / 32.0; }

  void validate() const {
    if (depth < 3) throw ConfigError("SRNConfig: depth must be >= 3");
    if (base_channels < 1) throw ConfigError("SRNConfig: base_channels must be >= 1");
    if (residual_blocks < 0) throw ConfigError("SRNConfig: residual_blocks must be >= 0");
    if (image_size < 1 || image_size % (Index{1} << depth) != 0) {
      throw ConfigError("SRNConfig: image_size " + std::to_string(image_size) +
                        " is not divisible by 2^" + std::to_string(depth));
    }
  }
};

// y = x + f(x), f = conv3x3 - BN - leakyReLU - conv3x3 - BN.
template <typename Scalar>
class ResidualBlock final : public nn::Layer<Scalar> {
 public:
  ResidualBlock(const std::string& name, Index channels, Scalar slope, Scalar momentum) {
    conv1_ = &body_.template add<nn::Conv2d<Scalar>>(name + ".conv1", channels, channels, 3, 1, 1, false);
    body_.template add<nn::BatchNorm2d<Scalar>>(name + ".bn1", channels, momentum);
    body_.template add<nn::LeakyReLU<Scalar>>(slope);
    conv2_ = &body_.template add<nn::Conv2d<Scalar>>(name + ".conv2", channels, channels, 3, 1, 1, false);
    body_.template add<nn::BatchNorm2d<Scalar>>(name + ".bn2", channels, momentum);
  }

  nn::Conv2d<Scalar>& conv1() { return *conv1_; }
  nn::Conv2d<Scalar>& conv2() { return *conv2_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    Tensor<Scalar> y = body_.forward(x);
    y.vec() += x.vec();
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx = body_.backward(g);
    dx.vec() += g.vec();
    return dx;
  }
  void parameters(std::vector<nn::Param<Scalar>*>& out) override { body_.parameters(out); }
  void buffers(std::vector<nn::NamedTensor<Scalar>>& out) override { body_.buffers(out); }
  void set_training(bool t) override {
    this->training_ = t;
    body_.set_training(t);
  }

 private:
  nn::Sequential<Scalar> body_;
  nn::Conv2d<Scalar>* conv1_ = nullptr;
  nn::Conv2d<Scalar>* conv2_ = nullptr;
};

// Style removal network: 4x4/s2 conv encoder, mirrored 4x4/s2 deconv decoder,
// residual-block skip connections from the two highest-resolution encoder
// levels, spatial transformers after encoder levels 1-3 and on the decoder
// features at a quarter of the input resolution.
template <typename Scalar>
class StyleRemovalNetwork final : public nn::Layer<Scalar> {
 public:
  static constexpr int kSkipLevels = 2;

  StyleRemovalNetwork(const SRNConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const Index D = config_.depth;
    const Scalar slope = Scalar(config_.negative_slope);
    const Scalar mom = Scalar(config_.bn_momentum);
    Index res = config_.image_size;
    for (Index i = 1; i <= D; ++i) {
      auto stage = std::make_unique<nn::Sequential<Scalar>>();
      const std::string n = "srn.enc" + std::to_string(i);
      stage->template add<nn::Conv2d<Scalar>>(n + ".conv", config_.channels(i - 1), config_.channels(i), 4, 2, 1, false);
      stage->template add<nn::BatchNorm2d<Scalar>>(n + ".bn", config_.channels(i), mom);
      stage->template add<nn::LeakyReLU<Scalar>>(slope);
      enc_.push_back(std::move(stage));
      res /= 2;
      if (config_.use_stn && i <= 3) {
        enc_stn_.push_back(std::make_unique<stn::SpatialTransformer<Scalar>>(
            "srn.stn" + std::to_string(i),
            stn::LocNetSpec::reference(static_cast<int>(i), res, res, config_.channels(i),
                                       config_.loc_width_scale())));
      }
    }
    if (config_.skip_connections) {
      for (int level = 1; level <= kSkipLevels; ++level) {
        auto path = std::make_unique<nn::Sequential<Scalar>>();
        for (Index b = 1; b <= config_.residual_blocks; ++b) {
          path->template add<ResidualBlock<Scalar>>(
              "srn.skip" + std::to_string(level) + ".rb" + std::to_string(b), config_.channels(level), slope, mom);
        }
        skip_.push_back(std::move(path));
      }
    }
    for (Index j = 1; j <= D; ++j) {
      auto stage = std::make_unique<nn::Sequential<Scalar>>();
      const std::string n = "srn.dec" + std::to_string(j);
      const Index cin = config_.channels(D - j + 1), cout = config_.channels(D - j);
      const bool last = j == D;
      stage->template add<nn::ConvTranspose2d<Scalar>>(n + ".deconv", cin, cout, 4, 2, 1, last);
      if (last) {
        stage->template add<nn::Tanh<Scalar>>();
      } else {
        stage->template add<nn::BatchNorm2d<Scalar>>(n + ".bn", cout, mom);
        stage->template add<nn::LeakyReLU<Scalar>>(slope);
      }
      dec_.push_back(std::move(stage));
    }
    if (config_.use_stn) {
      const Index r = config_.image_size / 4;
      dec_stn_ = std::make_unique<stn::SpatialTransformer<Scalar>>(
          "srn.stn4", stn::LocNetSpec::reference(4, r, r, config_.channels(2), config_.loc_width_scale()));
    }
    initialize(seed);
  }

  const SRNConfig& config() const { return config_; }

  // Transformers in placement order (encoder 1-3, then decoder).
  std::vector<stn::SpatialTransformer<Scalar>*> transformers() {
    std::vector<stn::SpatialTransformer<Scalar>*> out;
    for (auto& s : enc_stn_) out.push_back(s.get());
    if (dec_stn_) out.push_back(dec_stn_.get());
    return out;
  }

  void set_stn_identity_mode(bool on) {
    for (auto* s : transformers()) s->set_identity_mode(on);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    const Index S = config_.image_size;
    if (x.c() != 3 || x.h() != S || x.w() != S) {
      throw ShapeError("SRN: expected Nx3x" + std::to_string(S) + "x" + std::to_string(S) +
                       ", got " + x.shape().str());
    }
    const Index D = config_.depth;
    std::vector<Tensor<Scalar>> skips;
    Tensor<Scalar> h = x;
    for (Index i = 1; i <= D; ++i) {
      h = enc_[static_cast<size_t>(i - 1)]->forward(h);
      if (i <= static_cast<Index>(enc_stn_.size())) h = enc_stn_[static_cast<size_t>(i - 1)]->forward(h);
      if (i <= static_cast<Index>(skip_.size())) skips.push_back(skip_[static_cast<size_t>(i - 1)]->forward(h));
    }
    for (Index j = 1; j <= D; ++j) {
      h = dec_[static_cast<size_t>(j - 1)]->forward(h);
      const Index level = D - j;  // encoder level with matching resolution
      if (level == 2 && dec_stn_) h = dec_stn_->forward(h);
      if (level >= 1 && level <= static_cast<Index>(skips.size())) {
        h.vec() += skips[static_cast<size_t>(level - 1)].vec();
      }
    }
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    const Index D = config_.depth;
    std::vector<Tensor<Scalar>> skip_grads(skip_.size());
    Tensor<Scalar> g = grad_out;
    for (Index j = D; j >= 1; --j) {
      const Index level = D - j;
      if (level >= 1 && level <= static_cast<Index>(skip_.size())) skip_grads[static_cast<size_t>(level - 1)] = g;
      if (level == 2 && dec_stn_) g = dec_stn_->backward(g);
      g = dec_[static_cast<size_t>(j - 1)]->backward(g);
    }
    for (Index i = D; i >= 1; --i) {
      if (i <= static_cast<Index>(skip_.size())) {
        g.vec() += skip_[static_cast<size_t>(i - 1)]->backward(skip_grads[static_cast<size_t>(i - 1)]).vec();
      }
      if (i <= static_cast<Index>(enc_stn_.size())) g = enc_stn_[static_cast<size_t>(i - 1)]->backward(g);
      g = enc_[static_cast<size_t>(i - 1)]->backward(g);
    }
    return g;
  }

  void parameters(std::vector<nn::Param<Scalar>*>& out) override {
    for (auto& s : enc_) s->parameters(out);
    for (auto& s : enc_stn_) s->parameters(out);
    for (auto& s : skip_) s->parameters(out);
    for (auto& s : dec_) s->parameters(out);
    if (dec_stn_) dec_stn_->parameters(out);
  }
  std::vector<nn::Param<Scalar>*> parameters() {
    std::vector<nn::Param<Scalar>*> out;
    parameters(out);
    return out;
  }
  void buffers(std::vector<nn::NamedTensor<Scalar>>& out) override {
    for (auto& s : enc_) s->buffers(out);
    for (auto& s : skip_) s->buffers(out);
    for (auto& s : dec_) s->buffers(out);
  }
  void set_training(bool t) override {
    this->training_ = t;
    for (auto& s : enc_) s->set_training(t);
    for (auto& s : enc_stn_) s->set_training(t);
    for (auto& s : skip_) s->set_training(t);
    for (auto& s : dec_) s->set_training(t);
    if (dec_stn_) dec_stn_->set_training(t);
  }

 private:
  void initialize(std::uint64_t seed) {
    for (auto* p : parameters()) {
      const std::string& n = p->name;
      if (n.ends_with(".gamma")) {
        p->value.vec().setOnes();
      } else if (n.ends_with(".beta") || n.ends_with(".bias")) {
        p->value.set_zero();
      } else {
        nn::init_normal(*p, Scalar(0.02), seed);
      }
    }
    for (auto* s : transformers()) s->localization().initialize(seed);
  }

  SRNConfig config_;
  std::vector<std::unique_ptr<nn::Sequential<Scalar>>> enc_;
  std::vector<std::unique_ptr<stn::SpatialTransformer<Scalar>>> enc_stn_;
  std::vector<std::unique_ptr<nn::Sequential<Scalar>>> skip_;
  std::vector<std::unique_ptr<nn::Sequential<Scalar>>> dec_;
  std::unique_ptr<stn::SpatialTransformer<Scalar>> dec_stn_;
};

// Discriminator: 4x4/s2 convolutions (BN on all but the first, leakyReLU)
// down to 4x4, then FC -> 1 and a sigmoid. Output is N x 1 x 1 x 1.
template <typename Scalar>
class Discriminator final : public nn::Layer<Scalar> {
 public:
  Discriminator(const SRNConfig& config, std::uint64_t seed) : config_(config) {
    const Index layers = conv_layers(config_.image_size);
    const Scalar slope = Scalar(config_.negative_slope);
    Index in = 3;
    for (Index i = 1; i <= layers; ++i) {
      const std::string n = "dn.conv" + std::to_string(i);
      const Index out = config_.base_channels << (i - 1);
      body_.template add<nn::Conv2d<Scalar>>(n, in, out, 4, 2, 1, i == 1);
      if (i > 1) body_.template add<nn::BatchNorm2d<Scalar>>("dn.bn" + std::to_string(i), out, Scalar(config_.bn_momentum));
      body_.template add<nn::LeakyReLU<Scalar>>(slope);
      in = out;
    }
    fc_ = &body_.template add<nn::Linear<Scalar>>("dn.fc", in * 16, 1);
    body_.template add<nn::Sigmoid<Scalar>>();
    std::vector<nn::Param<Scalar>*> ps;
    parameters(ps);
    for (auto* p : ps) {
      if (p->name.ends_with(".gamma")) p->value.vec().setOnes();
      else if (p->name.ends_with(".beta") || p->name.ends_with(".bias")) p->value.set_zero();
      else nn::init_normal(*p, Scalar(0.02), seed);
    }
  }

  static Index conv_layers(Index image_size) {
    Index layers = 0, s = image_size;
    while (s > 4) {
      if (s % 2 != 0) break;
      s /= 2;
      ++layers;
    }
    if (s != 4 || layers < 1) {
      throw ConfigError("Discriminator: image_size " + std::to_string(image_size) +
                        " must be 4 * 2^k with k >= 1");
    }
    return layers;
  }

  // Closed-form parameter count: first conv 48*b + b, conv i>1 16*c_{i-1}*c_i + 2*c_i
  // (no bias, BN affine), FC 16*c_L + 1.
  static Index expected_parameter_count(Index image_size, Index base) {
    const Index layers = conv_layers(image_size);
    Index total = 48 * base + base;
    Index prev = base;
    for (Index i = 2; i <= layers; ++i) {
      const Index c = base << (i - 1);
      total += 16 * prev * c + 2 * c;
      prev = c;
    }
    return total + 16 * prev + 1;
  }

  nn::Linear<Scalar>& output_layer() { return *fc_; }
  const SRNConfig& config() const { return config_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    const Index S = config_.image_size;
    if (x.c() != 3 || x.h() != S || x.w() != S) {
      throw ShapeError("DN: expected Nx3x" + std::to_string(S) + "x" + std::to_string(S) +
                       ", got " + x.shape().str());
    }
    return body_.forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return body_.backward(g); }
  void parameters(std::vector<nn::Param<Scalar>*>& out) override { body_.parameters(out); }
  std::vector<nn::Param<Scalar>*> parameters() {
    std::vector<nn::Param<Scalar>*> out;
    parameters(out);
    return out;
  }
  void buffers(std::vector<nn::NamedTensor<Scalar>>& out) override { body_.buffers(out); }
  void set_training(bool t) override {
    this->training_ = t;
    body_.set_training(t);
  }
  void set_frozen(bool f) override {
    this->frozen_ = f;
    body_.set_frozen(f);
  }

 private:
  SRNConfig config_;
  nn::Sequential<Scalar> body_;
  nn::Linear<Scalar>* fc_ = nullptr;
};

template <typename Scalar>
StyleRemovalNetwork<Scalar> build_srn(const SRNConfig& config, std::uint64_t seed) {
  return StyleRemovalNetwork<Scalar>(config, seed);
}

template <typename Scalar>
Discriminator<Scalar> build_dn(const SRNConfig& config, std::uint64_t seed) {
  return Discriminator<Scalar>(config, seed);
}

template <typename Scalar>
Index parameter_count(const std::vector<nn::Param<Scalar>*>& params) {
  Index n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

}  // namespace ifrp

#endif  // IFRP_NETWORKS_HPP

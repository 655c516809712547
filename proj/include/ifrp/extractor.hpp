#ifndef IFRP_EXTRACTOR_HPP
#define IFRP_EXTRACTOR_HPP

#include "ifrp/nn/layers.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace ifrp {

// Fixed feature map psi used by the identity-preserving loss, the style
// selector and the retrieval protocols. Implementations are deterministic and
// their weights never change. forward() records what backward() needs, so one
// instance must not be shared between concurrent callers.
template <typename Scalar>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string kind() const = 0;
  // Features at the identity tap.
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& batch) = 0;
  // dL/dbatch for the last forward() call.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_features) = 0;
  // All tapped feature maps, shallowest first.
  virtual std::vector<Tensor<Scalar>> taps(const Tensor<Scalar>& batch) = 0;
  virtual std::vector<std::string> tap_names() const = 0;
};

// psi(x) = x.
template <typename Scalar>
class PixelExtractor final : public FeatureExtractor<Scalar> {
 public:
  std::string kind() const override { return "pixel"; }
  Tensor<Scalar> forward(const Tensor<Scalar>& batch) override { return batch; }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return g; }
  std::vector<Tensor<Scalar>> taps(const Tensor<Scalar>& batch) override { return {batch}; }
  std::vector<std::string> tap_names() const override { return {"pixel"}; }
};

// Frozen random-weight convolutional features:
//   relu1: conv3x3 (3 -> w)         + ReLU
//   relu2: conv4x4/s2 (w -> 2w)     + ReLU
//   relu3: conv3x3 (2w -> 2w)       + ReLU
template <typename Scalar>
class ConvFeatureExtractor final : public FeatureExtractor<Scalar> {
 public:
  explicit ConvFeatureExtractor(std::uint64_t seed, Index width = 8, std::string tap = "relu3")
      : seed_(seed), width_(width), tap_(std::move(tap)) {
    const Index specs[3][4] = {{3, width, 3, 1}, {width, 2 * width, 4, 2}, {2 * width, 2 * width, 3, 1}};
    for (int i = 0; i < 3; ++i) {
      auto stage = std::make_unique<nn::Sequential<Scalar>>();
      auto& conv = stage->template add<nn::Conv2d<Scalar>>("psi.conv" + std::to_string(i + 1), specs[i][0],
                                                           specs[i][1], specs[i][2], specs[i][3], 1);
      stage->template add<nn::ReLU<Scalar>>();
      nn::init_normal(conv.weight(), Scalar(std::sqrt(2.0 / static_cast<double>(specs[i][0] * specs[i][2] * specs[i][2]))), seed);
      nn::init_normal(conv.bias(), Scalar(0.01), seed);
      stage->set_frozen(true);
      stages_.push_back(std::move(stage));
    }
    const auto names = tap_names();
    tap_index_ = -1;
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == tap_) tap_index_ = static_cast<int>(i);
    if (tap_index_ < 0) throw std::invalid_argument("ConvFeatureExtractor: unknown tap '" + tap_ + "'");
  }

  std::string kind() const override { return "conv"; }
  std::uint64_t seed() const { return seed_; }
  Index width() const { return width_; }
  const std::string& tap() const { return tap_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& batch) override {
    Tensor<Scalar> h = batch;
    for (int i = 0; i <= tap_index_; ++i) h = stages_[static_cast<size_t>(i)]->forward(h);
    return h;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> d = g;
    for (int i = tap_index_; i >= 0; --i) d = stages_[static_cast<size_t>(i)]->backward(d);
    return d;
  }
  std::vector<Tensor<Scalar>> taps(const Tensor<Scalar>& batch) override {
    std::vector<Tensor<Scalar>> out;
    Tensor<Scalar> h = batch;
    for (auto& s : stages_) {
      h = s->forward(h);
      out.push_back(h);
    }
    return out;
  }
  std::vector<std::string> tap_names() const override { return {"relu1", "relu2", "relu3"}; }

 private:
  std::uint64_t seed_;
  Index width_;
  std::string tap_;
  int tap_index_ = 2;
  std::vector<std::unique_ptr<nn::Sequential<Scalar>>> stages_;
};

// Declarative description used by configs and checkpoints.
struct ExtractorSpec {
  std::string kind = "conv";  // "conv" or "pixel"
  std::uint64_t seed = 7;
  Index width = 8;
  std::string tap = "relu3";
};

template <typename Scalar>
std::unique_ptr<FeatureExtractor<Scalar>> make_extractor(const ExtractorSpec& spec) {
  if (spec.kind == "pixel") return std::make_unique<PixelExtractor<Scalar>>();
  if (spec.kind == "conv") return std::make_unique<ConvFeatureExtractor<Scalar>>(spec.seed, spec.width, spec.tap);
  throw std::invalid_argument("unknown extractor kind '" + spec.kind + "'");
}

}  // namespace ifrp

#endif  // IFRP_EXTRACTOR_HPP

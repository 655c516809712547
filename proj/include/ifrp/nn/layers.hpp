#ifndef IFRP_NN_LAYERS_HPP
#define IFRP_NN_LAYERS_HPP

#include "ifrp/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ifrp::nn {

template <typename Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar>* tensor;
};

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// Each parameter draws from its own stream keyed by (seed, name), so the
// initial value of a layer does not depend on which other layers exist.
template <typename Scalar>
void init_normal(Param<Scalar>& p, Scalar stddev, std::uint64_t seed) {
  const std::uint64_t key = fnv1a(p.name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (Index i = 0; i < p.value.size(); ++i) p.value.vec()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x) = 0;
  // Accumulates parameter gradients and returns dL/dx for the last forward input.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) = 0;
  virtual void parameters(std::vector<Param<Scalar>*>&) {}
  virtual void buffers(std::vector<NamedTensor<Scalar>>&) {}
  virtual void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  // Frozen layers still propagate dL/dx but leave parameter gradients untouched.
  virtual void set_frozen(bool frozen) { frozen_ = frozen; }

 protected:
  bool training_ = true;
  bool frozen_ = false;
};

namespace detail {

inline Index conv_out(Index in, Index k, Index stride, Index pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col is (C*k*k) x (Ho*Wo), row-major.
template <typename Scalar>
void im2col(const Scalar* in, Index C, Index H, Index W, Index k, Index stride, Index pad,
            Index Ho, Index Wo, Scalar* col) {
  const Index cols = Ho * Wo;
  for (Index c = 0; c < C; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = col + ((c * k + ky) * k + kx) * cols;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          Scalar* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            for (Index ox = 0; ox < Wo; ++ox) dst[ox] = Scalar(0);
            continue;
          }
          const Scalar* src = in + (c * H + iy) * W;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* col, Index C, Index H, Index W, Index k, Index stride, Index pad,
            Index Ho, Index Wo, Scalar* out) {
  const Index cols = Ho * Wo;
  for (Index c = 0; c < C; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = col + ((c * k + ky) * k + kx) * cols;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          Scalar* dst = out + (c * H + iy) * W;
          const Scalar* src = row + oy * Wo;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(const std::string& name, Index in, Index out, Index kernel, Index stride, Index pad,
         bool bias = true)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", Shape{out, in, kernel, kernel}) {
    if (bias) bias_ = Param<Scalar>(name + ".bias", Shape{1, 1, 1, out});
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }
  bool has_bias() const { return !bias_.name.empty(); }
  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }

  Shape output_shape(const Shape& s) const {
    return {s.n, out_, detail::conv_out(s.h, k_, stride_, pad_),
            detail::conv_out(s.w, k_, stride_, pad_)};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (x.c() != in_) throw ShapeError("Conv2d " + weight_.name + ": input " + x.shape().str());
    input_ = x;
    const Shape os = output_shape(x.shape());
    if (os.h < 1 || os.w < 1) throw ShapeError("Conv2d " + weight_.name + ": input too small");
    Tensor<Scalar> y(os);
    RowMatrix<Scalar> col(in_ * k_ * k_, os.h * os.w);
    const auto wmat = weight_matrix();
    for (Index n = 0; n < x.n(); ++n) {
      detail::im2col(x.sample_data(n), in_, x.h(), x.w(), k_, stride_, pad_, os.h, os.w,
                     col.data());
      y.sample(n).noalias() = wmat * col;
      if (has_bias()) y.sample(n).colwise() += bias_.value.vec();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    const Tensor<Scalar>& x = input_;
    const Shape os = grad_out.shape();
    Tensor<Scalar> dx(x.shape());
    RowMatrix<Scalar> col(in_ * k_ * k_, os.h * os.w);
    RowMatrix<Scalar> dcol(in_ * k_ * k_, os.h * os.w);
    const auto wmat = weight_matrix();
    auto dw = typename Tensor<Scalar>::MatrixMap(weight_.grad.data(), out_, in_ * k_ * k_);
    for (Index n = 0; n < x.n(); ++n) {
      detail::im2col(x.sample_data(n), in_, x.h(), x.w(), k_, stride_, pad_, os.h, os.w,
                     col.data());
      const auto g = grad_out.sample(n);
      if (!this->frozen_) {
        dw.noalias() += g * col.transpose();
        if (has_bias()) bias_.grad.vec() += g.rowwise().sum();
      }
      dcol.noalias() = wmat.transpose() * g;
      detail::col2im(dcol.data(), in_, x.h(), x.w(), k_, stride_, pad_, os.h, os.w,
                     dx.sample_data(n));
    }
    return dx;
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias()) out.push_back(&bias_);
  }

 private:
  typename Tensor<Scalar>::ConstMatrixMap weight_matrix() const {
    return typename Tensor<Scalar>::ConstMatrixMap(weight_.value.data(), out_, in_ * k_ * k_);
  }

  Index in_, out_, k_, stride_, pad_;
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Tensor<Scalar> input_;
};

// Transposed convolution; weight layout (in, out, k, k).
template <typename Scalar>
class ConvTranspose2d final : public Layer<Scalar> {
 public:
  ConvTranspose2d(const std::string& name, Index in, Index out, Index kernel, Index stride,
                  Index pad, bool bias = true)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", Shape{in, out, kernel, kernel}) {
    if (bias) bias_ = Param<Scalar>(name + ".bias", Shape{1, 1, 1, out});
  }

  Param<Scalar>& weight() { return weight_; }
  bool has_bias() const { return !bias_.name.empty(); }

  Shape output_shape(const Shape& s) const {
    return {s.n, out_, (s.h - 1) * stride_ - 2 * pad_ + k_, (s.w - 1) * stride_ - 2 * pad_ + k_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (x.c() != in_) throw ShapeError("ConvTranspose2d " + weight_.name + ": input " + x.shape().str());
    input_ = x;
    const Shape os = output_shape(x.shape());
    Tensor<Scalar> y(os);
    RowMatrix<Scalar> col(out_ * k_ * k_, x.h() * x.w());
    const auto wmat = weight_matrix();
    for (Index n = 0; n < x.n(); ++n) {
      col.noalias() = wmat.transpose() * x.sample(n);
      detail::col2im(col.data(), out_, os.h, os.w, k_, stride_, pad_, x.h(), x.w(),
                     y.sample_data(n));
      if (has_bias()) y.sample(n).colwise() += bias_.value.vec();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    const Tensor<Scalar>& x = input_;
    Tensor<Scalar> dx(x.shape());
    RowMatrix<Scalar> dcol(out_ * k_ * k_, x.h() * x.w());
    const auto wmat = weight_matrix();
    auto dw = typename Tensor<Scalar>::MatrixMap(weight_.grad.data(), in_, out_ * k_ * k_);
    for (Index n = 0; n < x.n(); ++n) {
      detail::im2col(grad_out.sample_data(n), out_, grad_out.h(), grad_out.w(), k_, stride_,
                     pad_, x.h(), x.w(), dcol.data());
      if (!this->frozen_) {
        dw.noalias() += x.sample(n) * dcol.transpose();
        if (has_bias()) bias_.grad.vec() += grad_out.sample(n).rowwise().sum();
      }
      dx.sample(n).noalias() = wmat * dcol;
    }
    return dx;
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias()) out.push_back(&bias_);
  }

 private:
  typename Tensor<Scalar>::ConstMatrixMap weight_matrix() const {
    return typename Tensor<Scalar>::ConstMatrixMap(weight_.value.data(), in_, out_ * k_ * k_);
  }

  Index in_, out_, k_, stride_, pad_;
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Tensor<Scalar> input_;
};

// Spatial batch normalization. Running statistics follow
// running = momentum * running + (1 - momentum) * batch.
template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar> {
 public:
  static constexpr Scalar kEps = Scalar(1e-5);

  BatchNorm2d(const std::string& name, Index channels, Scalar momentum = Scalar(0.9))
      : channels_(channels), momentum_(momentum),
        gamma_(name + ".gamma", Shape{1, 1, 1, channels}),
        beta_(name + ".beta", Shape{1, 1, 1, channels}),
        running_mean_(Shape{1, 1, 1, channels}),
        running_var_(Tensor<Scalar>::constant(Shape{1, 1, 1, channels}, Scalar(1))),
        name_(name) {
    gamma_.value.vec().setOnes();
  }

  Param<Scalar>& gamma() { return gamma_; }
  Param<Scalar>& beta() { return beta_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (x.c() != channels_) throw ShapeError("BatchNorm2d " + name_ + ": input " + x.shape().str());
    const Index N = x.n(), P = x.h() * x.w();
    const Scalar count = Scalar(N * P);
    Vector<Scalar> mean(channels_), var(channels_);
    if (this->training_) {
      mean.setZero();
      var.setZero();
      for (Index n = 0; n < N; ++n) mean += x.sample(n).rowwise().sum();
      mean /= count;
      for (Index n = 0; n < N; ++n)
        var += (x.sample(n).colwise() - mean).array().square().matrix().rowwise().sum();
      var /= count;
      const Scalar unbias = count > 1 ? count / (count - 1) : Scalar(1);
      running_mean_.vec() = momentum_ * running_mean_.vec() + (1 - momentum_) * mean;
      running_var_.vec() = momentum_ * running_var_.vec() + (1 - momentum_) * unbias * var;
    } else {
      mean = running_mean_.vec();
      var = running_var_.vec();
    }
    inv_std_ = (var.array() + kEps).rsqrt().matrix();
    xhat_ = Tensor<Scalar>(x.shape());
    Tensor<Scalar> y(x.shape());
    for (Index n = 0; n < N; ++n) {
      xhat_.sample(n) = (x.sample(n).colwise() - mean).array().colwise() * inv_std_.array();
      y.sample(n) = (xhat_.sample(n).array().colwise() * gamma_.value.vec().array()).colwise() +
                    beta_.value.vec().array();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    const Index N = grad_out.n(), P = grad_out.h() * grad_out.w();
    const Scalar count = Scalar(N * P);
    Vector<Scalar> sum_dy = Vector<Scalar>::Zero(channels_);
    Vector<Scalar> sum_dy_xhat = Vector<Scalar>::Zero(channels_);
    for (Index n = 0; n < N; ++n) {
      sum_dy += grad_out.sample(n).rowwise().sum();
      sum_dy_xhat += grad_out.sample(n).cwiseProduct(xhat_.sample(n)).rowwise().sum();
    }
    if (!this->frozen_) {
      gamma_.grad.vec() += sum_dy_xhat;
      beta_.grad.vec() += sum_dy;
    }
    Tensor<Scalar> dx(grad_out.shape());
    const Vector<Scalar> scale = gamma_.value.vec().cwiseProduct(inv_std_);
    for (Index n = 0; n < N; ++n) {
      if (this->training_) {
        // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
        auto d = (grad_out.sample(n).colwise() - sum_dy / count).array() -
                 xhat_.sample(n).array().colwise() * (sum_dy_xhat / count).array();
        dx.sample(n) = d.colwise() * scale.array();
      } else {
        dx.sample(n) = grad_out.sample(n).array().colwise() * scale.array();
      }
    }
    return dx;
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void buffers(std::vector<NamedTensor<Scalar>>& out) override {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }

 private:
  Index channels_;
  Scalar momentum_;
  Param<Scalar> gamma_, beta_;
  Tensor<Scalar> running_mean_, running_var_;
  std::string name_;
  Vector<Scalar> inv_std_;
  Tensor<Scalar> xhat_;
};

template <typename Scalar>
class LeakyReLU final : public Layer<Scalar> {
 public:
  explicit LeakyReLU(Scalar slope) : slope_(slope) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    input_ = x;
    Tensor<Scalar> y(x.shape());
    y.vec() = (x.vec().array() > 0).select(x.vec().array(), slope_ * x.vec().array()).matrix();
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.shape());
    dx.vec() = (input_.vec().array() > 0).select(g.vec().array(), slope_ * g.vec().array()).matrix();
    return dx;
  }

 private:
  Scalar slope_;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    input_ = x;
    Tensor<Scalar> y(x.shape());
    y.vec() = x.vec().cwiseMax(Scalar(0));
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.shape());
    dx.vec() = (input_.vec().array() > 0).select(g.vec().array(), Scalar(0)).matrix();
    return dx;
  }

 private:
  Tensor<Scalar> input_;
};

template <typename Scalar>
class Tanh final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    output_ = Tensor<Scalar>(x.shape());
    output_.vec() = x.vec().array().tanh().matrix();
    return output_;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.shape());
    dx.vec() = (g.vec().array() * (Scalar(1) - output_.vec().array().square())).matrix();
    return dx;
  }

 private:
  Tensor<Scalar> output_;
};

template <typename Scalar>
class Sigmoid final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    output_ = Tensor<Scalar>(x.shape());
    output_.vec() = (Scalar(1) / (Scalar(1) + (-x.vec().array()).exp())).matrix();
    return output_;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.shape());
    const auto& p = output_.vec().array();
    dx.vec() = (g.vec().array() * p * (Scalar(1) - p)).matrix();
    return dx;
  }

 private:
  Tensor<Scalar> output_;
};

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
template <typename Scalar>
class MaxPool2x2 final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    in_shape_ = x.shape();
    const Index Ho = x.h() / 2, Wo = x.w() / 2;
    if (Ho < 1 || Wo < 1) throw ShapeError("MaxPool2x2: input " + x.shape().str());
    Tensor<Scalar> y(x.n(), x.c(), Ho, Wo);
    argmax_.assign(static_cast<size_t>(y.size()), 0);
    Index o = 0;
    for (Index n = 0; n < x.n(); ++n)
      for (Index c = 0; c < x.c(); ++c)
        for (Index oy = 0; oy < Ho; ++oy)
          for (Index ox = 0; ox < Wo; ++ox, ++o) {
            Index best = ((n * x.c() + c) * x.h() + 2 * oy) * x.w() + 2 * ox;
            for (Index dy = 0; dy < 2; ++dy)
              for (Index dx = 0; dx < 2; ++dx) {
                const Index i = ((n * x.c() + c) * x.h() + 2 * oy + dy) * x.w() + 2 * ox + dx;
                if (x.data()[i] > x.data()[best]) best = i;
              }
            argmax_[static_cast<size_t>(o)] = best;
            y.data()[o] = x.data()[best];
          }
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(in_shape_);
    for (Index o = 0; o < g.size(); ++o) dx.data()[argmax_[static_cast<size_t>(o)]] += g.data()[o];
    return dx;
  }

 private:
  Shape in_shape_{};
  std::vector<Index> argmax_;
};

// Fully connected layer over the flattened sample; output shape N x out x 1 x 1.
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(const std::string& name, Index in, Index out)
      : in_(in), out_(out), weight_(name + ".weight", Shape{1, 1, out, in}),
        bias_(name + ".bias", Shape{1, 1, 1, out}) {}

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }
  Index in_features() const { return in_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    if (x.shape().sample_size() != in_) {
      throw ShapeError("Linear " + weight_.name + ": input " + x.shape().str() + ", expected " +
                       std::to_string(in_) + " features");
    }
    input_ = x;
    Tensor<Scalar> y(x.n(), out_, 1, 1);
    y.rows().noalias() = x.rows() * weight_matrix().transpose();
    y.rows().rowwise() += bias_.value.vec().transpose();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    auto dw = typename Tensor<Scalar>::MatrixMap(weight_.grad.data(), out_, in_);
    if (!this->frozen_) {
      dw.noalias() += g.rows().transpose() * input_.rows();
      bias_.grad.vec() += g.rows().colwise().sum().transpose();
    }
    Tensor<Scalar> dx(input_.shape());
    dx.rows().noalias() = g.rows() * weight_matrix();
    return dx;
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  typename Tensor<Scalar>::ConstMatrixMap weight_matrix() const {
    return typename Tensor<Scalar>::ConstMatrixMap(weight_.value.data(), out_, in_);
  }

  Index in_, out_;
  Param<Scalar> weight_, bias_;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class Sequential final : public Layer<Scalar> {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
    Tensor<Scalar> h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }
  void parameters(std::vector<Param<Scalar>*>& out) override {
    for (auto& l : layers_) l->parameters(out);
  }
  void buffers(std::vector<NamedTensor<Scalar>>& out) override {
    for (auto& l : layers_) l->buffers(out);
  }
  void set_training(bool training) override {
    this->training_ = training;
    for (auto& l : layers_) l->set_training(training);
  }
  void set_frozen(bool frozen) override {
    this->frozen_ = frozen;
    for (auto& l : layers_) l->set_frozen(frozen);
  }
  size_t size() const { return layers_.size(); }
  Layer<Scalar>& at(size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

template <typename Scalar>
void zero_grad(const std::vector<Param<Scalar>*>& params) {
  for (auto* p : params) p->grad.set_zero();
}

}  // namespace ifrp::nn

#endif  // IFRP_NN_LAYERS_HPP

#ifndef IFRP_STN_SAMPLER_HPP
#define IFRP_STN_SAMPLER_HPP

#include "ifrp/tensor.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace ifrp {

// Similarity transform in normalized [-1,1] image coordinates.
struct TransformParams {
  double log_scale = 0.0;
  double rotation = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  bool is_identity() const { return log_scale == 0 && rotation == 0 && tx == 0 && ty == 0; }
  bool operator==(const TransformParams&) const = default;
};

template <typename Scalar>
using Affine2x3 = Eigen::Matrix<Scalar, 2, 3>;

template <typename Scalar>
Affine2x3<Scalar> params_to_affine(Scalar log_scale, Scalar rotation, Scalar tx, Scalar ty) {
  using std::cos;
  using std::exp;
  using std::sin;
  const Scalar s = exp(log_scale);
  const Scalar c = cos(rotation), sn = sin(rotation);
  Affine2x3<Scalar> m;
  m << s * c, -s * sn, tx, s * sn, s * c, ty;
  return m;
}

inline Affine2x3<double> params_to_affine(const TransformParams& p) {
  return params_to_affine<double>(p.log_scale, p.rotation, p.tx, p.ty);
}

// Parameters of the inverse similarity: x = M y  <=>  y = M^-1 x.
inline TransformParams inverse(const TransformParams& p) {
  const double inv_s = std::exp(-p.log_scale);
  const double c = std::cos(p.rotation), sn = std::sin(p.rotation);
  // -(1/s) R^T t
  const double tx = -inv_s * (c * p.tx + sn * p.ty);
  const double ty = -inv_s * (-sn * p.tx + c * p.ty);
  return {-p.log_scale, -p.rotation, tx, ty};
}

// Gradient of a scalar loss w.r.t. (log_scale, rotation, tx, ty) given its
// gradient w.r.t. the 2x3 matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> affine_to_params_grad(Scalar log_scale, Scalar rotation,
                                                  const Affine2x3<Scalar>& grad_m) {
  using std::cos;
  using std::exp;
  using std::sin;
  const Scalar s = exp(log_scale);
  const Scalar c = cos(rotation), sn = sin(rotation);
  Eigen::Matrix<Scalar, 4, 1> g;
  g[0] = s * (grad_m(0, 0) * c - grad_m(0, 1) * sn + grad_m(1, 0) * sn + grad_m(1, 1) * c);
  g[1] = s * (-grad_m(0, 0) * sn - grad_m(0, 1) * c + grad_m(1, 0) * c - grad_m(1, 1) * sn);
  g[2] = grad_m(0, 2);
  g[3] = grad_m(1, 2);
  return g;
}

// Normalized sampling coordinates, one row (x, y) per output location of
// each sample, row index (n * H + y) * W + x.
template <typename Scalar>
struct SamplingGrid {
  Index n = 0, h = 0, w = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor> coords;

  auto sample(Index i) { return coords.middleRows(i * h * w, h * w); }
  auto sample(Index i) const { return coords.middleRows(i * h * w, h * w); }
};

// Regular target grid in homogeneous form: rows (x_t, y_t, 1), corners at -1 and 1.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor> base_grid(Index h, Index w) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor> g(h * w, 3);
  auto norm = [](Index i, Index extent) -> Scalar {
    if (extent <= 1) return Scalar(0);
    return Scalar(2 * i - (extent - 1)) / Scalar(extent - 1);
  };
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) g.row(y * w + x) << norm(x, w), norm(y, h), Scalar(1);
  return g;
}

template <typename Scalar>
SamplingGrid<Scalar> generate_grid(const std::vector<Affine2x3<Scalar>>& transforms, Index h,
                                   Index w) {
  SamplingGrid<Scalar> grid;
  grid.n = static_cast<Index>(transforms.size());
  grid.h = h;
  grid.w = w;
  grid.coords.resize(grid.n * h * w, 2);
  const auto base = base_grid<Scalar>(h, w);
  for (Index i = 0; i < grid.n; ++i) {
    grid.sample(i).noalias() = base * transforms[static_cast<size_t>(i)].transpose();
  }
  return grid;
}

template <typename Scalar>
SamplingGrid<Scalar> generate_grid(const Affine2x3<Scalar>& m, Index h, Index w) {
  return generate_grid<Scalar>(std::vector<Affine2x3<Scalar>>{m}, h, w);
}

// dL/dM per sample from dL/dgrid.
template <typename Scalar>
std::vector<Affine2x3<Scalar>> generate_grid_backward(const SamplingGrid<Scalar>& grad_grid) {
  const auto base = base_grid<Scalar>(grad_grid.h, grad_grid.w);
  std::vector<Affine2x3<Scalar>> out(static_cast<size_t>(grad_grid.n));
  for (Index i = 0; i < grad_grid.n; ++i) {
    out[static_cast<size_t>(i)] = (base.transpose() * grad_grid.sample(i)).transpose();
  }
  return out;
}

namespace detail {

// Normalized coordinate to pixel coordinate (corners aligned). Values within a
// few ulps of an integer are snapped so that the identity grid is exact.
template <typename Scalar>
Scalar unnormalize(Scalar v, Index extent) {
  const Scalar half = Scalar(extent - 1) / Scalar(2);
  Scalar u = (v + Scalar(1)) * half;
  const Scalar r = std::round(u);
  if (std::abs(u - r) <= Scalar(16) * std::numeric_limits<Scalar>::epsilon() * (half + 1)) u = r;
  return u;
}

template <typename Scalar>
struct Corner {
  Index x0, y0;
  Scalar wx, wy;
};

template <typename Scalar>
Corner<Scalar> corner(Scalar gx, Scalar gy, Index h, Index w) {
  const Scalar u = unnormalize(gx, w);
  const Scalar v = unnormalize(gy, h);
  const Scalar fx = std::floor(u), fy = std::floor(v);
  return {static_cast<Index>(fx), static_cast<Index>(fy), u - fx, v - fy};
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> bilinear_sample(const Tensor<Scalar>& input, const SamplingGrid<Scalar>& grid) {
  if (grid.n != input.n()) throw ShapeError("bilinear_sample: batch size mismatch");
  const Index C = input.c(), H = input.h(), W = input.w();
  Tensor<Scalar> out(grid.n, C, grid.h, grid.w);
  const Index plane_out = grid.h * grid.w;
  for (Index n = 0; n < grid.n; ++n) {
    const auto g = grid.sample(n);
    for (Index p = 0; p < plane_out; ++p) {
      if (!std::isfinite(g(p, 0)) || !std::isfinite(g(p, 1))) continue;
      const auto k = detail::corner(g(p, 0), g(p, 1), H, W);
      const Index xs[2] = {k.x0, k.x0 + 1};
      const Index ys[2] = {k.y0, k.y0 + 1};
      const Scalar wxs[2] = {Scalar(1) - k.wx, k.wx};
      const Scalar wys[2] = {Scalar(1) - k.wy, k.wy};
      for (int a = 0; a < 2; ++a) {
        if (ys[a] < 0 || ys[a] >= H) continue;
        for (int b = 0; b < 2; ++b) {
          if (xs[b] < 0 || xs[b] >= W) continue;
          const Scalar wgt = wys[a] * wxs[b];
          if (wgt == Scalar(0)) continue;
          const Scalar* src = input.sample_data(n) + ys[a] * W + xs[b];
          Scalar* dst = out.sample_data(n) + p;
          for (Index c = 0; c < C; ++c) dst[c * plane_out] += wgt * src[c * H * W];
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
struct SamplerGradients {
  Tensor<Scalar> input;
  SamplingGrid<Scalar> grid;
};

template <typename Scalar>
SamplerGradients<Scalar> bilinear_sample_backward(const Tensor<Scalar>& input,
                                                  const SamplingGrid<Scalar>& grid,
                                                  const Tensor<Scalar>& grad_out) {
  const Index C = input.c(), H = input.h(), W = input.w();
  const Index plane_out = grid.h * grid.w;
  SamplerGradients<Scalar> g{Tensor<Scalar>(input.shape()), grid};
  g.grid.coords.setZero();
  const Scalar sx = Scalar(W - 1) / Scalar(2), sy = Scalar(H - 1) / Scalar(2);
  for (Index n = 0; n < grid.n; ++n) {
    const auto coords = grid.sample(n);
    auto gcoords = g.grid.sample(n);
    const Scalar* in = input.sample_data(n);
    Scalar* gin = g.input.sample_data(n);
    const Scalar* gout = grad_out.sample_data(n);
    for (Index p = 0; p < plane_out; ++p) {
      if (!std::isfinite(coords(p, 0)) || !std::isfinite(coords(p, 1))) continue;
      const auto k = detail::corner(coords(p, 0), coords(p, 1), H, W);
      Scalar du = 0, dv = 0;
      for (int a = 0; a < 2; ++a) {
        const Index y = k.y0 + a;
        if (y < 0 || y >= H) continue;
        const Scalar wy = a ? k.wy : Scalar(1) - k.wy;
        const Scalar sign_y = a ? Scalar(1) : Scalar(-1);
        for (int b = 0; b < 2; ++b) {
          const Index x = k.x0 + b;
          if (x < 0 || x >= W) continue;
          const Scalar wx = b ? k.wx : Scalar(1) - k.wx;
          const Scalar sign_x = b ? Scalar(1) : Scalar(-1);
          const Index off = y * W + x;
          Scalar dot = 0;
          for (Index c = 0; c < C; ++c) {
            const Scalar go = gout[c * plane_out + p];
            gin[c * H * W + off] += wy * wx * go;
            dot += go * in[c * H * W + off];
          }
          du += sign_x * wy * dot;
          dv += sign_y * wx * dot;
        }
      }
      gcoords(p, 0) = du * sx;
      gcoords(p, 1) = dv * sy;
    }
  }
  return g;
}

}  // namespace ifrp

#endif  // IFRP_STN_SAMPLER_HPP

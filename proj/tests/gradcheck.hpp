#ifndef IFRP_TESTS_GRADCHECK_HPP
#define IFRP_TESTS_GRADCHECK_HPP

#include "ifrp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ifrp::testing {

// Central finite differences of `loss` w.r.t. every coordinate of `x`
// (or a seeded subset when max_coords > 0).
template <typename F>
Vector<double> numeric_gradient(Tensor<double>& x, F&& loss, double h = 1e-6,
                                Index max_coords = -1, std::uint64_t seed = 1,
                                std::vector<Index>* picked = nullptr) {
  std::vector<Index> idx(static_cast<size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) idx[static_cast<size_t>(i)] = i;
  if (max_coords > 0 && max_coords < x.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(max_coords));
  }
  Vector<double> g(static_cast<Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) {
    double& v = x.data()[idx[k]];
    const double orig = v;
    v = orig + h;
    const double fp = loss();
    v = orig - h;
    const double fm = loss();
    v = orig;
    g[static_cast<Index>(k)] = (fp - fm) / (2 * h);
  }
  if (picked) *picked = idx;
  return g;
}

inline double relative_error(const Vector<double>& a, const Vector<double>& n) {
  const double denom = std::max({a.norm(), n.norm(), 1e-12});
  return (a - n).norm() / denom;
}

// Relative error between analytic gradient `analytic` (same shape as x) and
// central differences.
template <typename F>
double gradient_error(Tensor<double>& x, const Tensor<double>& analytic, F&& loss,
                      double h = 1e-6, Index max_coords = -1, std::uint64_t seed = 1) {
  std::vector<Index> picked;
  const Vector<double> num = numeric_gradient(x, loss, h, max_coords, seed, &picked);
  Vector<double> ana(static_cast<Index>(picked.size()));
  for (size_t k = 0; k < picked.size(); ++k) ana[static_cast<Index>(k)] = analytic.data()[picked[k]];
  return relative_error(ana, num);
}

inline Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<double> t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

}  // namespace ifrp::testing

#endif  // IFRP_TESTS_GRADCHECK_HPP

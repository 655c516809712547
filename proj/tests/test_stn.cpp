#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "ifrp/stn/stn.hpp"

#include <numbers>

using namespace ifrp;
using ifrp::testing::gradient_error;
using ifrp::testing::random_tensor;

namespace {

Tensor<double> smooth_image(Index size, Index channels = 1) {
  Tensor<double> t(1, channels, size, size);
  for (Index c = 0; c < channels; ++c)
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(size - 1);
        const double v = static_cast<double>(y) / static_cast<double>(size - 1);
        t(0, c, y, x) = 0.5 + 0.25 * std::sin(2.0 * u * std::numbers::pi + c) * std::cos(1.5 * v * std::numbers::pi) +
                        0.15 * std::cos(3.0 * (u + v));
      }
  return t;
}

Tensor<double> warp(const Tensor<double>& x, const TransformParams& p) {
  return bilinear_sample(x, generate_grid<double>(params_to_affine(p), x.h(), x.w()));
}

double interior_mae(const Tensor<double>& a, const Tensor<double>& b) {
  const Index lo = a.h() / 4, hi = a.h() - a.h() / 4;
  double s = 0;
  Index n = 0;
  for (Index c = 0; c < a.c(); ++c)
    for (Index y = lo; y < hi; ++y)
      for (Index x = lo; x < hi; ++x, ++n) s += std::abs(a(0, c, y, x) - b(0, c, y, x));
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("params_to_affine") {
  CHECK(params_to_affine(TransformParams{}).isApprox(Affine2x3<double>((Affine2x3<double>() << 1, 0, 0, 0, 1, 0).finished())));
  const auto m30 = params_to_affine(TransformParams{0, std::numbers::pi / 6, 0, 0});
  CHECK(m30(0, 0) == doctest::Approx(0.8660254));
  CHECK(m30(0, 1) == doctest::Approx(-0.5));
  CHECK(m30(1, 0) == doctest::Approx(0.5));
  CHECK(m30(1, 1) == doctest::Approx(0.8660254));
  const auto m2 = params_to_affine(TransformParams{std::log(2.0), 0.3, 0.1, -0.2});
  CHECK(m2.leftCols<2>().norm() == doctest::Approx(2 * std::sqrt(2.0)));
}

TEST_CASE("inverse similarity composes to identity") {
  const TransformParams p{std::log(1.2), 0.4, 0.1, -0.3};
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity(), b = Eigen::Matrix3d::Identity();
  a.topRows<2>() = params_to_affine(p);
  b.topRows<2>() = params_to_affine(inverse(p));
  CHECK((a * b - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("generate_grid") {
  SUBCASE("identity spans [-1,1]") {
    const auto g = generate_grid<double>(params_to_affine(TransformParams{}), 3, 5);
    CHECK(g.coords(0, 0) == -1.0);
    CHECK(g.coords(0, 1) == -1.0);
    CHECK(g.coords(14, 0) == 1.0);
    CHECK(g.coords(14, 1) == 1.0);
    CHECK(g.coords(7, 0) == 0.0);
    CHECK(g.coords(7, 1) == 0.0);
  }
  SUBCASE("translation shifts x") {
    const auto id = generate_grid<double>(params_to_affine(TransformParams{}), 4, 4);
    const auto g = generate_grid<double>(params_to_affine(TransformParams{0, 0, 0.5, 0}), 4, 4);
    CHECK(((g.coords.col(0).array() - id.coords.col(0).array()) - 0.5).abs().maxCoeff() < 1e-15);
    CHECK(g.coords.col(1) == id.coords.col(1));
  }
  SUBCASE("90 degree rotation maps corner (1,1) to (-1,1)") {
    const auto g = generate_grid<double>(params_to_affine(TransformParams{0, std::numbers::pi / 2, 0, 0}), 2, 2);
    CHECK(g.coords(3, 0) == doctest::Approx(-1.0));
    CHECK(g.coords(3, 1) == doctest::Approx(1.0));
  }
}

TEST_CASE("bilinear_sample") {
  SUBCASE("identity grid reproduces the input exactly") {
    for (Index size : {1, 2, 3, 7, 16, 31, 64, 127}) {
      const auto x = random_tensor({2, 3, size, size + 1}, static_cast<std::uint64_t>(size));
      const auto y = bilinear_sample(x, generate_grid<double>(std::vector<Affine2x3<double>>{params_to_affine(TransformParams{}), params_to_affine(TransformParams{})}, size, size + 1));
      CHECK(y.vec() == x.vec());
    }
    Tensor<float> xf(1, 2, 37, 37);
    xf.vec().setRandom();
    const auto yf = bilinear_sample(xf, generate_grid<float>(params_to_affine<float>(0, 0, 0, 0), 37, 37));
    CHECK(yf.vec() == xf.vec());
  }
  SUBCASE("one-pixel shift moves columns and zero-fills") {
    const Index W = 6, H = 4;
    const auto x = random_tensor({1, 2, H, W}, 3);
    const auto y = bilinear_sample(x, generate_grid<double>(params_to_affine(TransformParams{0, 0, 2.0 / (W - 1), 0}), H, W));
    for (Index c = 0; c < 2; ++c)
      for (Index r = 0; r < H; ++r) {
        for (Index col = 0; col + 1 < W; ++col) CHECK(y(0, c, r, col) == doctest::Approx(x(0, c, r, col + 1)).epsilon(1e-12));
        CHECK(y(0, c, r, W - 1) == 0.0);
      }
  }
  SUBCASE("midpoint interpolates linearly") {
    Tensor<double> x(1, 1, 1, 2);
    x.vec() << 0.0, 1.0;
    SamplingGrid<double> g;
    g.n = 1;
    g.h = 1;
    g.w = 1;
    g.coords.resize(1, 2);
    g.coords << 0.0, -1.0;
    CHECK(bilinear_sample(x, g).data()[0] == doctest::Approx(0.5));
  }
  SUBCASE("samples outside the support are zero") {
    const auto x = Tensor<double>::constant({1, 1, 4, 4}, 1.0);
    SamplingGrid<double> g;
    g.n = 1;
    g.h = 1;
    g.w = 2;
    g.coords.resize(2, 2);
    g.coords << 1.8, 0.0, 0.0, -3.0;
    const auto y = bilinear_sample(x, g);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
  }
}

TEST_CASE("bilinear_sample gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto x = random_tensor({1, 2, 5, 5}, seed);
    auto grid_t = random_tensor({1, 1, 25, 2}, seed + 10, -1.1, 1.1);
    auto make_grid = [&] {
      SamplingGrid<double> g;
      g.n = 1;
      g.h = 5;
      g.w = 5;
      g.coords = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>>(grid_t.data(), 25, 2);
      return g;
    };
    const auto r = random_tensor({1, 2, 5, 5}, seed + 20);
    auto loss = [&] { return bilinear_sample(x, make_grid()).vec().dot(r.vec()); };
    const auto g = bilinear_sample_backward(x, make_grid(), r);
    CHECK(gradient_error(x, g.input, loss) < 1e-4);
    Tensor<double> ggrid(grid_t.shape());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>>(ggrid.data(), 25, 2) = g.grid.coords;
    CHECK(gradient_error(grid_t, ggrid, loss, 1e-7) < 1e-4);
  }
}

TEST_CASE("warp then inverse warp restores the interior") {
  const auto x = smooth_image(64, 2);
  for (double deg : {-45.0, -30.0, -10.0, 0.0, 20.0, 45.0}) {
    for (double s : {0.7, 0.85, 1.0, 1.15, 1.3}) {
      const TransformParams p{std::log(s), deg * std::numbers::pi / 180.0, 0.0, 0.0};
      const auto back = warp(warp(x, p), inverse(p));
      INFO("deg=" << deg << " scale=" << s);
      CHECK(interior_mae(back, x) < 0.02);
    }
  }
}

TEST_CASE("localization networks follow the reference tables") {
  const Index inputs[4][3] = {{64, 64, 32}, {32, 32, 64}, {16, 16, 128}, {32, 32, 64}};
  for (int k = 1; k <= 4; ++k) {
    const auto spec = stn::LocNetSpec::reference(k, inputs[k - 1][0], inputs[k - 1][1], inputs[k - 1][2]);
    CHECK(spec.flattened_features() == 80);
  }
  const auto s1 = stn::LocNetSpec::reference(1, 64, 64, 32);
  REQUIRE(s1.convs.size() == 5);
  CHECK(s1.convs[0].channels == 64);
  CHECK(s1.convs[1].channels == 128);
  CHECK(s1.convs[2].channels == 256);
  CHECK(s1.convs[3].channels == 20);
  CHECK(s1.convs[4].channels == 20);

  stn::LocalizationNet<float> net("stn1", s1);
  net.initialize(1);
  Tensor<float> x(2, 32, 64, 64);
  x.vec().setRandom();
  const auto theta = net.forward(x);
  CHECK(theta.shape() == Shape{2, 4, 1, 1});
  for (const auto& p : stn::localize(net, x)) CHECK(p.is_identity());
  CHECK_THROWS_AS(net.forward(Tensor<float>(1, 16, 64, 64)), ShapeError);
}

TEST_CASE("reduced localization networks stay valid at small inputs") {
  for (Index size : {1, 2, 4, 8, 16}) {
    for (int k = 1; k <= 4; ++k) {
      const auto spec = stn::LocNetSpec::reference(k, size, size, 4, 0.125);
      stn::LocalizationNet<double> net("l", spec);
      net.initialize(3);
      const auto out = net.forward(random_tensor({3, 4, size, size}, 4));
      CHECK(out.shape() == Shape{3, 4, 1, 1});
    }
  }
}

TEST_CASE("spatial transformer") {
  const auto spec = stn::LocNetSpec::reference(1, 8, 8, 2, 0.0625);
  stn::SpatialTransformer<double> st("st", spec);
  st.localization().initialize(5);
  SUBCASE("identity at initialization is exact") {
    const auto x = random_tensor({2, 2, 8, 8}, 6);
    CHECK(st.forward(x).vec() == x.vec());
  }
  SUBCASE("gradients w.r.t. input and localization parameters") {
    auto& fc = st.localization().output_layer();
    fc.weight().value = random_tensor(fc.weight().value.shape(), 7, -0.05, 0.05);
    fc.bias().value = random_tensor(fc.bias().value.shape(), 8, -0.2, 0.2);
    auto x = random_tensor({2, 2, 8, 8}, 9);
    const auto r = random_tensor({2, 2, 8, 8}, 10);
    auto loss = [&] { return st.forward(x).vec().dot(r.vec()); };
    std::vector<nn::Param<double>*> ps;
    st.parameters(ps);
    nn::zero_grad(ps);
    st.forward(x);
    const auto dx = st.backward(r);
    CHECK(gradient_error(x, dx, loss) < 1e-4);
    for (auto* p : ps) {
      INFO(p->name);
      CHECK(gradient_error(p->value, p->grad, loss) < 1e-4);
    }
  }
}

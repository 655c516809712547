#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "ifrp/losses.hpp"

#include <numbers>

using namespace ifrp;
using ifrp::testing::gradient_error;
using ifrp::testing::random_tensor;

namespace {

Tensor<double> probs(std::initializer_list<double> v) {
  Tensor<double> t(static_cast<Index>(v.size()), 1, 1, 1);
  Index i = 0;
  for (double p : v) t.data()[i++] = p;
  return t;
}

}  // namespace

TEST_CASE("pixel loss") {
  const auto a = random_tensor({2, 3, 4, 4}, 1);
  CHECK(pixel_loss(a, a).value == 0.0);
  const auto ones = Tensor<double>::constant({2, 3, 4, 4}, 1.0);
  const auto zeros = Tensor<double>::constant({2, 3, 4, 4}, 0.0);
  CHECK(pixel_loss(ones, zeros).value == 1.0);

  auto gen = random_tensor({2, 3, 4, 4}, 2);
  const auto gt = random_tensor({2, 3, 4, 4}, 3);
  const auto l = pixel_loss(gen, gt);
  Eigen::VectorXd expected = 2.0 * (gen.vec() - gt.vec()) / (4.0 * 4.0 * 3.0 * 2.0);
  CHECK((l.grad.vec() - expected).norm() < 1e-15);
  CHECK(gradient_error(gen, l.grad, [&] { return pixel_loss(gen, gt).value; }) < 1e-6);
  CHECK_THROWS_AS(pixel_loss(gen, random_tensor({1, 3, 4, 4}, 4)), ShapeError);
}

TEST_CASE("identity loss") {
  PixelExtractor<double> pixel;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = random_tensor({2, 3, 6, 6}, s), b = random_tensor({2, 3, 6, 6}, s + 100);
    CHECK(identity_loss(a, b, pixel).value == pixel_loss(a, b).value);
  }
  ConvFeatureExtractor<double> psi(3, 2);
  auto gen = random_tensor({2, 3, 6, 6}, 5);
  const auto gt = random_tensor({2, 3, 6, 6}, 6);
  CHECK(identity_loss(gt, gt, psi).value == 0.0);
  const auto l = identity_loss(gen, gt, psi);
  CHECK(l.value > 0.0);
  CHECK(gradient_error(gen, l.grad, [&] { return identity_loss(gen, gt, psi).value; }) < 1e-3);
}

TEST_CASE("feature extractor is deterministic and frozen") {
  ConvFeatureExtractor<double> a(7, 4), b(7, 4);
  const auto x = random_tensor({1, 3, 8, 8}, 1);
  CHECK(a.forward(x).vec() == b.forward(x).vec());
  CHECK(a.forward(x).shape() == Shape{1, 8, 4, 4});
  const auto taps = a.taps(x);
  REQUIRE(taps.size() == 3);
  CHECK(taps[0].shape() == Shape{1, 4, 8, 8});
  CHECK_THROWS(ConvFeatureExtractor<double>(7, 4, "relu9"));
  CHECK(make_extractor<double>({"pixel"})->kind() == "pixel");
}

TEST_CASE("discriminator loss") {
  CHECK(discriminator_loss(probs({0.5, 0.5}), probs({0.5, 0.5})).value ==
        doctest::Approx(2 * std::numbers::ln2).epsilon(1e-15));
  CHECK(std::abs(discriminator_loss(probs({0.5}), probs({0.5})).value - 2 * std::numbers::ln2) < 1e-9);
  CHECK(discriminator_loss(probs({1.0}), probs({0.0})).value == doctest::Approx(0.0).epsilon(1e-6).scale(1));
  CHECK(discriminator_loss(probs({0.9}), probs({0.1})).value == doctest::Approx(-2 * std::log(0.9)));
  CHECK(discriminator_loss(probs({0.9}), probs({0.1})).value == doctest::Approx(0.21072).epsilon(1e-5));
  CHECK(std::isfinite(discriminator_loss(probs({0.0}), probs({1.0})).value));

  auto r = probs({0.3, 0.8, 0.6}), f = probs({0.2, 0.7, 0.4});
  const auto l = discriminator_loss(r, f);
  CHECK(gradient_error(r, l.grad_real, [&] { return discriminator_loss(r, f).value; }) < 1e-7);
  CHECK(gradient_error(f, l.grad_fake, [&] { return discriminator_loss(r, f).value; }) < 1e-7);
}

TEST_CASE("generator adversarial loss") {
  CHECK(generator_adversarial_loss(probs({0.5})).value == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(generator_adversarial_loss(probs({1.0})).value < 1e-6);
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 1; i < 100; ++i) {
    const double v = generator_adversarial_loss(probs({i / 100.0})).value;
    CHECK(v < prev);
    CHECK(v >= 0.0);
    prev = v;
  }
  auto f = probs({0.2, 0.9});
  CHECK(gradient_error(f, generator_adversarial_loss(f).grad, [&] { return generator_adversarial_loss(f).value; }) < 1e-7);
}

TEST_CASE("total loss and schedules") {
  CHECK(srn_total_loss(0.8, 0.3, 0.2, 0.0, 0.0) == 0.8);
  CHECK(srn_total_loss(1.0, 0.7, 2.0, 1e-2, 1e-3) == doctest::Approx(1.009).epsilon(1e-14));
  const LossWeights w;
  CHECK(w.lambda0 == 1e-2);
  CHECK(w.eta0 == 1e-3);
  CHECK(decay_schedule(w.lambda0, 0) == 1e-2);
  double power = 1.0;
  for (int n = 0; n < 138; ++n) power *= 0.995;
  CHECK(decay_schedule(1.0, 138) == doctest::Approx(power).epsilon(1e-12));
  CHECK(power > 0.5);
  CHECK(power * 0.995 < 0.5);
  CHECK(decay_schedule(1.0, 139) == 0.5);
  CHECK(decay_schedule(w.lambda0, 139) == 5e-3);
  CHECK(decay_schedule(w.lambda0, 1000000) == 5e-3);
  int first_floor = -1;
  double prev = 1.0;
  for (int n = 0; n < 400; ++n) {
    const double v = decay_schedule(1.0, n);
    CHECK(v <= prev);
    CHECK(v >= 0.5);
    if (first_floor < 0 && v == 0.5) first_floor = n;
    prev = v;
  }
  CHECK(first_floor == 139);
  CHECK_THROWS(decay_schedule(1.0, -1));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ifrp/dataset.hpp"
#include "tmpdir.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace ifrp;
using ifrp::testing::read_bytes;
using ifrp::testing::TempDir;

namespace {

Image random_image(Index w, Index h, std::uint64_t seed, Index channels = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h, channels);
  for (Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = u(rng);
  return img;
}

Image smooth_image(Index size) {
  Image img(size, size, 3);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / (size - 1), v = static_cast<double>(y) / (size - 1);
      for (Index c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(0.5 + 0.3 * std::sin(2.2 * u + c) * std::cos(1.7 * v - 0.5 * c));
    }
  return img;
}

double interior_mae(const Image& a, const Image& b) {
  const Index lo = a.height / 4, hi = a.height - a.height / 4;
  double s = 0;
  Index n = 0;
  for (Index y = lo; y < hi; ++y)
    for (Index x = lo; x < hi; ++x)
      for (Index c = 0; c < 3; ++c, ++n) s += std::abs(a.at(y, x, c) - b.at(y, x, c));
  return s / static_cast<double>(n);
}

class FailingStylizer final : public Stylizer {
 public:
  std::string id() const override { return "broken"; }
  Image apply(const Image&) const override { throw std::runtime_error("boom"); }
};

}  // namespace

TEST_CASE("center_crop_resize") {
  SUBCASE("CelebA-sized input") {
    const auto out = center_crop_resize(random_image(178, 218, 1), 128);
    CHECK(out.width == 128);
    CHECK(out.height == 128);
    CHECK(out.channels == 3);
  }
  SUBCASE("same size is a no-op") {
    const auto in = random_image(128, 128, 2);
    CHECK(center_crop_resize(in, 128) == in);
  }
  SUBCASE("wide input matches an index-arithmetic oracle") {
    const auto in = random_image(200, 100, 3);
    const auto out = center_crop_resize(in, 64);
    // Crop is columns 50..149; output pixel centers map back with half-pixel offsets.
    double worst = 0;
    for (Index y = 0; y < 64; ++y)
      for (Index x = 0; x < 64; ++x) {
        const double sy = std::clamp((y + 0.5) * 100.0 / 64.0 - 0.5, 0.0, 99.0);
        const double sx = std::clamp((x + 0.5) * 100.0 / 64.0 - 0.5, 0.0, 99.0) + 50.0;
        const auto y0 = static_cast<Index>(sy), x0 = static_cast<Index>(sx);
        const Index y1 = std::min<Index>(y0 + 1, 99), x1 = std::min<Index>(x0 + 1, 149);
        const double wy = sy - y0, wx = sx - x0;
        for (Index c = 0; c < 3; ++c) {
          const double v = (1 - wy) * ((1 - wx) * in.at(y0, x0, c) + wx * in.at(y0, x1, c)) +
                           wy * ((1 - wx) * in.at(y1, x0, c) + wx * in.at(y1, x1, c));
          worst = std::max(worst, std::abs(v - out.at(y, x, c)));
        }
      }
    CHECK(worst < 1e-6);
    // Columns outside 50..149 never influence the result.
    auto altered = in;
    for (Index y = 0; y < 100; ++y)
      for (Index x : {0, 49, 150, 199})
        for (Index c = 0; c < 3; ++c) altered.at(y, x, c) = 1.0f - altered.at(y, x, c);
    CHECK(center_crop_resize(altered, 64) == out);
  }
  SUBCASE("non-RGB input") { CHECK_THROWS_AS(center_crop_resize(random_image(8, 8, 4, 1), 4), DecodeError); }
}

TEST_CASE("sample_misalignment") {
  const MisalignmentRanges defaults;
  CHECK(defaults.rotation_deg == Range{-45, 45});
  CHECK(defaults.scale == Range{0.7, 1.3});
  CHECK(sample_misalignment(5, MisalignmentRanges::none()).is_identity());
  CHECK(sample_misalignment(99, defaults) == sample_misalignment(99, defaults));
  CHECK(!(sample_misalignment(99, defaults) == sample_misalignment(100, defaults)));

  double sum = 0, lo = 1e9, hi = -1e9;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto p = sample_misalignment(mix_seed(7, s), defaults);
    const double deg = p.rotation * 180.0 / std::numbers::pi;
    sum += deg;
    lo = std::min(lo, deg);
    hi = std::max(hi, deg);
    const double scale = std::exp(p.log_scale);
    CHECK((scale >= 0.7 - 1e-12 && scale <= 1.3 + 1e-12));
    CHECK((std::abs(p.tx) <= 0.2 + 1e-12 && std::abs(p.ty) <= 0.2 + 1e-12));
  }
  CHECK(std::abs(sum / 10000) < 1.5);
  CHECK(lo >= -45.0);
  CHECK(hi <= 45.0);

  MisalignmentRanges bad;
  bad.rotation_deg = {-60, 10};
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.scale = {1.2, 0.8};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("apply_affine") {
  const auto img = smooth_image(64);
  CHECK(apply_affine(img, TransformParams{}) == img);
  SUBCASE("rotate and rotate back") {
    const double r = 30.0 * std::numbers::pi / 180.0;
    const auto back = apply_affine(apply_affine(img, {0, r, 0, 0}), {0, -r, 0, 0});
    CHECK(interior_mae(back, img) < 0.02);
  }
  SUBCASE("scale 0.7 shrinks a centered square") {
    Image sq(101, 101, 3);
    for (Index y = 25; y <= 75; ++y)
      for (Index x = 25; x <= 75; ++x)
        for (Index c = 0; c < 3; ++c) sq.at(y, x, c) = 1.0f;
    const auto out = apply_affine(sq, {std::log(0.7), 0, 0, 0});
    Index x_lo = 1000, x_hi = -1;
    for (Index y = 0; y < 101; ++y)
      for (Index x = 0; x < 101; ++x)
        if (out.at(y, x, 0) > 0.5f) {
          x_lo = std::min(x_lo, x);
          x_hi = std::max(x_hi, x);
        }
    const double extent = static_cast<double>(x_hi - x_lo + 1) / 51.0;
    CHECK(extent == doctest::Approx(0.7).epsilon(0.05));
  }
  SUBCASE("positive tx moves content right by the fraction") {
    const auto in = random_image(9, 9, 4);
    const auto out = apply_affine(in, {0, 0, 2.0 / 8.0, 0});
    for (Index y = 0; y < 9; ++y) {
      CHECK(out.at(y, 0, 0) == 0.0f);
      for (Index x = 1; x < 9; ++x) CHECK(out.at(y, x, 1) == doctest::Approx(in.at(y, x - 1, 1)).epsilon(1e-6));
    }
  }
}

TEST_CASE("built-in stylizers") {
  const auto face = center_crop_resize(render_face(3), 32);
  for (const auto& id : builtin_stylizers()) {
    const auto s = make_stylizer(id);
    CHECK(s->id() == id);
    const auto a = s->apply(face), b = s->apply(face);
    CHECK(a == b);
    CHECK(a.same_shape(face));
    CHECK(!(a == face));
    CHECK(a.pixels.minCoeff() >= 0.0f);
    CHECK(a.pixels.maxCoeff() <= 1.0f);
  }
  CHECK_THROWS(make_stylizer("starry"));
}

TEST_CASE("render_face is deterministic per identity") {
  CHECK(render_face(1) == render_face(1));
  CHECK(!(render_face(1) == render_face(2)));
  const auto f = render_face(1);
  CHECK(f.width == 178);
  CHECK(f.height == 218);
}

TEST_CASE("synthesize_pairs") {
  TempDir tmp("dataset");
  const auto sources = tmp / "src";
  write_synthetic_faces(sources, 32, 11);
  std::vector<std::unique_ptr<Stylizer>> owned;
  std::vector<const Stylizer*> stylizers;
  for (const auto& id : builtin_stylizers()) {
    owned.push_back(make_stylizer(id));
    stylizers.push_back(owned.back().get());
  }
  SynthesisOptions opt;
  opt.image_size = 32;
  opt.seed = 42;

  SUBCASE("one source, one stylizer") {
    const auto one = tmp / "one";
    std::filesystem::create_directories(one);
    std::filesystem::copy_file(sources / "face_000.png", one / "face_000.png");
    const auto m = synthesize_pairs(one, {stylizers[0]}, tmp / "out1", opt);
    CHECK(m.records.size() == 1);
  }

  SUBCASE("full run is deterministic and satisfies the manifest invariants") {
    const auto m = synthesize_pairs(sources, stylizers, tmp / "a", opt);
    const auto m2 = synthesize_pairs(sources, stylizers, tmp / "b", opt);
    REQUIRE(m.records.size() == 96);
    CHECK(read_bytes(tmp / "a/manifest.json") == read_bytes(tmp / "b/manifest.json"));
    for (const auto& r : m.records) {
      CHECK(read_bytes(tmp.path() / "a" / r.sf_path) == read_bytes(tmp.path() / "b" / r.sf_path));
      CHECK(read_bytes(tmp.path() / "a" / r.rf_path) == read_bytes(tmp.path() / "b" / r.rf_path));
    }
    CHECK(m.split_counts.at("train") + m.split_counts.at("test") == 96);
    CHECK(m.split_counts.at("test") == 24);

    const auto loaded = load_manifest(tmp / "a/manifest.json");
    CHECK(loaded.records == m.records);
    CHECK(loaded.styles == m.styles);
    CHECK(loaded.ranges == m.ranges);

    std::set<std::string> train_ids, test_ids;
    for (const auto& r : loaded.records) {
      const auto rf = load_png(loaded.resolve(r.rf_path));
      const auto sf = load_png(loaded.resolve(r.sf_path));
      CHECK(rf.width == 32);
      CHECK(rf.height == 32);
      CHECK(rf.channels == 3);
      CHECK(sf.same_shape(rf));
      CHECK(!(sf == rf));
      (r.split == "train" ? train_ids : test_ids).insert(r.identity);
      const double deg = r.misalignment.rotation * 180 / std::numbers::pi;
      CHECK((deg >= -45 && deg <= 45));
      const double s = std::exp(r.misalignment.log_scale);
      CHECK((s >= 0.7 - 1e-12 && s <= 1.3 + 1e-12));
      // Re-applying the recorded geometry to the RF reproduces the SF exactly.
      const auto redo = quantize_8bit(make_stylizer(r.style)->apply(apply_affine(rf, r.misalignment)));
      CHECK(redo == sf);
    }
    for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
  }

  SUBCASE("failing stylizer records are skipped") {
    FailingStylizer broken;
    const auto m = synthesize_pairs(sources, {stylizers[0], &broken}, tmp / "c", opt);
    CHECK(m.records.size() == 32);
  }

  SUBCASE("errors") {
    std::filesystem::create_directories(tmp / "empty");
    CHECK_THROWS_AS(synthesize_pairs(tmp / "empty", stylizers, tmp / "d", opt), DatasetError);
    CHECK_THROWS_AS(synthesize_pairs(sources, {}, tmp / "d", opt), DatasetError);
    CHECK_THROWS_AS(load_manifest(tmp / "missing.json"), DatasetError);
  }
}

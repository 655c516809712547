#include "ifrp/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace ifrp {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, const Range& r) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void check_range(const Range& r, double lo, double hi, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw std::invalid_argument(std::string("MisalignmentRanges.") + name + ": need finite lo <= hi");
  }
  if (r.lo < lo || r.hi > hi) {
    throw std::invalid_argument(std::string("MisalignmentRanges.") + name + " must lie within [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

Tensor<double> to_planes(const Image& img) {
  Tensor<double> t(1, img.channels, img.height, img.width);
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x)
      for (Index c = 0; c < img.channels; ++c) t(0, c, y, x) = img.at(y, x, c);
  return t;
}

Image from_planes(const Tensor<double>& t) {
  Image img(t.w(), t.h(), t.c());
  for (Index y = 0; y < t.h(); ++y)
    for (Index x = 0; x < t.w(); ++x)
      for (Index c = 0; c < t.c(); ++c) img.at(y, x, c) = static_cast<float>(t(0, c, y, x));
  return img;
}

void require_rgb(const Image& img, const char* what) {
  if (img.channels != 3) {
    throw DecodeError(std::string(what) + ": expected an RGB image, got " + std::to_string(img.channels) + " channel(s)");
  }
}

float smoothstep01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Coverage of an axis-aligned (optionally rotated) ellipse with a soft 1-2px rim.
double ellipse_cover(double x, double y, double cx, double cy, double a, double b, double angle = 0) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x - cx, dy = y - cy;
  const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
  const double r = std::sqrt(u * u + v * v);
  const double edge = (1.0 - r) * std::min(a, b);
  return std::clamp(edge + 0.5, 0.0, 1.0);
}

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

}  // namespace

void MisalignmentRanges::validate() const {
  check_range(rotation_deg, -45.0, 45.0, "rotation_deg");
  check_range(scale, 0.7, 1.3, "scale");
  check_range(translation_frac, -0.5, 0.5, "translation_frac");
}

Image center_crop_resize(const Image& image, Index target) {
  require_rgb(image, "center_crop_resize");
  if (image.width < 1 || image.height < 1) throw DecodeError("center_crop_resize: empty image");
  if (target < 1) throw std::invalid_argument("center_crop_resize: target must be >= 1");
  const Index side = std::min(image.width, image.height);
  const Index x0 = (image.width - side) / 2, y0 = (image.height - side) / 2;
  Image crop(side, side, 3);
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x)
      for (Index c = 0; c < 3; ++c) crop.at(y, x, c) = image.at(y0 + y, x0 + x, c);
  return resize_bilinear(crop, target, target);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

TransformParams sample_misalignment(std::uint64_t rng_seed, const MisalignmentRanges& ranges) {
  ranges.validate();
  std::mt19937_64 rng(rng_seed);
  const double deg = draw(rng, ranges.rotation_deg);
  const double scale = draw(rng, ranges.scale);
  const double fx = draw(rng, ranges.translation_frac);
  const double fy = draw(rng, ranges.translation_frac);
  return {std::log(scale), deg * std::numbers::pi / 180.0, 2.0 * fx, 2.0 * fy};
}

Image apply_affine(const Image& image, const TransformParams& p) {
  if (p.is_identity()) return image;
  const auto grid = generate_grid<double>(params_to_affine(inverse(p)), image.height, image.width);
  return from_planes(bilinear_sample(to_planes(image), grid));
}

Image SketchStylizer::apply(const Image& rgb) const {
  require_rgb(rgb, "sketch");
  const Eigen::MatrixXd g = to_gray(rgb);
  const Index H = rgb.height, W = rgb.width;
  auto at = [&](Index y, Index x) { return g(std::clamp<Index>(y, 0, H - 1), std::clamp<Index>(x, 0, W - 1)); };
  Image out(W, H, 3);
  const double L = std::max(2, levels_) - 1;
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const double gx = at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1);
      const double gy = at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1);
      const double ink = std::clamp(std::hypot(gx, gy) * 1.5, 0.0, 1.0);
      const double q = std::round(g(y, x) * L) / L;
      const double v = (0.25 + 0.75 * q) * (1.0 - 0.85 * ink);
      out.at(y, x, 0) = smoothstep01(v);
      out.at(y, x, 1) = smoothstep01(v * 0.96);
      out.at(y, x, 2) = smoothstep01(v * 0.88);
    }
  return out;
}

Image CandyStylizer::apply(const Image& rgb) const {
  require_rgb(rgb, "candy");
  static const Rgb stops[] = {{0.18, 0.04, 0.32}, {0.92, 0.12, 0.48}, {1.0, 0.55, 0.12}, {1.0, 0.92, 0.25}, {0.30, 0.95, 0.90}};
  Image out(rgb.width, rgb.height, 3);
  for (Index y = 0; y < rgb.height; ++y)
    for (Index x = 0; x < rgb.width; ++x) {
      const double r = rgb.at(y, x, 0), g = rgb.at(y, x, 1), b = rgb.at(y, x, 2);
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      double t = luma + 0.35 * (r - b);
      t = t - std::floor(t);
      const double pos = t * 4.0;
      const int i = std::min(3, static_cast<int>(pos));
      const Rgb c = lerp(stops[i], stops[i + 1], pos - i);
      out.at(y, x, 0) = smoothstep01(0.85 * c.r + 0.15 * r);
      out.at(y, x, 1) = smoothstep01(0.85 * c.g + 0.15 * g);
      out.at(y, x, 2) = smoothstep01(0.85 * c.b + 0.15 * b);
    }
  return out;
}

Image MosaicStylizer::apply(const Image& rgb) const {
  require_rgb(rgb, "mosaic");
  const Index tile = std::max<Index>(2, std::min(rgb.width, rgb.height) / std::max<Index>(1, tiles_));
  const bool grout = tile >= 4;
  Image out(rgb.width, rgb.height, 3);
  for (Index ty = 0; ty < rgb.height; ty += tile)
    for (Index tx = 0; tx < rgb.width; tx += tile) {
      const Index y1 = std::min(ty + tile, rgb.height), x1 = std::min(tx + tile, rgb.width);
      double mean[3] = {0, 0, 0};
      for (Index y = ty; y < y1; ++y)
        for (Index x = tx; x < x1; ++x)
          for (Index c = 0; c < 3; ++c) mean[c] += rgb.at(y, x, c);
      const double n = static_cast<double>((y1 - ty) * (x1 - tx));
      for (double& m : mean) m /= n;
      const double gray = (mean[0] + mean[1] + mean[2]) / 3.0;
      double col[3];
      for (int c = 0; c < 3; ++c) {
        const double sat = gray + 1.6 * (mean[c] - gray);
        col[c] = std::round(std::clamp(sat, 0.0, 1.0) * 5.0) / 5.0;
      }
      for (Index y = ty; y < y1; ++y)
        for (Index x = tx; x < x1; ++x) {
          const bool line = grout && (y == ty || x == tx);
          for (Index c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(line ? 0.12 * col[c] : col[c]);
        }
    }
  return out;
}

std::unique_ptr<Stylizer> make_stylizer(const std::string& id) {
  if (id == "sketch") return std::make_unique<SketchStylizer>();
  if (id == "candy") return std::make_unique<CandyStylizer>();
  if (id == "mosaic") return std::make_unique<MosaicStylizer>();
  throw std::invalid_argument("unknown stylizer '" + id + "'");
}

std::vector<std::string> builtin_stylizers() { return {"candy", "mosaic", "sketch"}; }

Image render_face(std::uint64_t seed, Index width, Index height) {
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double unit = std::min(W, H);

  const Rgb bg_top{u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)};
  const Rgb bg_bottom{u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)};
  const double tone = u(0.0, 1.0);
  const Rgb skin = lerp({0.96, 0.80, 0.68}, {0.45, 0.30, 0.20}, tone);
  const Rgb hair = lerp({0.08, 0.06, 0.05}, {0.75, 0.55, 0.25}, u(0.0, 1.0) * u(0.0, 1.0));
  const Rgb iris = lerp({0.15, 0.25, 0.45}, {0.30, 0.18, 0.08}, u(0.0, 1.0));
  const Rgb lips = lerp({0.75, 0.35, 0.38}, {0.55, 0.22, 0.25}, u(0.0, 1.0));
  const Rgb shirt{u(0.05, 0.95), u(0.05, 0.95), u(0.05, 0.95)};

  const double cx = W / 2 + u(-0.02, 0.02) * unit, cy = H * 0.48;
  const double fa = unit * u(0.26, 0.33), fb = unit * u(0.36, 0.44);
  const double hair_a = fa * u(1.08, 1.28), hair_b = fb * u(1.0, 1.18), hair_dy = -fb * u(0.12, 0.3);
  const double eye_dx = fa * u(0.36, 0.46), eye_y = cy - fb * u(0.08, 0.2);
  const double eye_a = fa * u(0.16, 0.22), eye_b = eye_a * u(0.45, 0.65);
  const double brow_tilt = u(-0.25, 0.25);
  const double nose_len = fb * u(0.2, 0.32), nose_w = fa * u(0.1, 0.16);
  const double mouth_y = cy + fb * u(0.45, 0.6), mouth_a = fa * u(0.28, 0.45), mouth_b = fb * u(0.05, 0.1);

  Image img(width, height, 3);
  for (Index py = 0; py < height; ++py)
    for (Index px = 0; px < width; ++px) {
      const double x = px + 0.5, y = py + 0.5;
      Rgb c = lerp(bg_top, bg_bottom, y / H);
      auto paint = [&](const Rgb& col, double cover) { c = lerp(c, col, cover); };
      paint(shirt, ellipse_cover(x, y, cx, H + fb * 0.2, fa * 2.0, fb * 0.9));
      paint(lerp(skin, {0, 0, 0}, 0.12), ellipse_cover(x, y, cx, cy + fb * 0.95, fa * 0.45, fb * 0.5));
      paint(hair, ellipse_cover(x, y, cx, cy + hair_dy, hair_a, hair_b));
      paint(skin, ellipse_cover(x, y, cx, cy, fa, fb));
      paint(hair, ellipse_cover(x, y, cx, cy - fb * 0.85, fa * 0.95, fb * 0.32) * (y < cy - fb * 0.55 ? 1.0 : 0.0));
      for (int side : {-1, 1}) {
        const double ex = cx + side * eye_dx;
        paint({0.96, 0.96, 0.96}, ellipse_cover(x, y, ex, eye_y, eye_a, eye_b));
        paint(iris, ellipse_cover(x, y, ex, eye_y, eye_b * 0.8, eye_b * 0.8));
        paint({0.02, 0.02, 0.02}, ellipse_cover(x, y, ex, eye_y, eye_b * 0.35, eye_b * 0.35));
        paint(lerp(hair, {0, 0, 0}, 0.3), ellipse_cover(x, y, ex, eye_y - eye_b * 2.2, eye_a * 1.1, eye_b * 0.35, side * brow_tilt));
        paint(lerp(skin, {0.8, 0.3, 0.3}, 0.15), ellipse_cover(x, y, cx + side * fa * 0.55, cy + fb * 0.25, fa * 0.2, fb * 0.1) * 0.6);
      }
      paint(lerp(skin, {0, 0, 0}, 0.22), ellipse_cover(x, y, cx, eye_y + nose_len, nose_w, nose_len * 0.35));
      paint(lips, ellipse_cover(x, y, cx, mouth_y, mouth_a, mouth_b));
      img.at(py, px, 0) = smoothstep01(c.r);
      img.at(py, px, 1) = smoothstep01(c.g);
      img.at(py, px, 2) = smoothstep01(c.b);
    }
  return img;
}

std::vector<const FacePairRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const FacePairRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

DatasetManifest synthesize_pairs(const std::filesystem::path& source_dir, const std::vector<const Stylizer*>& stylizers,
                                 const std::filesystem::path& out_dir, const SynthesisOptions& options) {
  options.ranges.validate();
  if (stylizers.empty()) throw DatasetError("synthesize_pairs: at least one stylizer is required");
  if (options.image_size < 1) throw DatasetError("synthesize_pairs: image_size must be >= 1");
  if (!(options.split.test_fraction >= 0 && options.split.test_fraction <= 1)) {
    throw DatasetError("synthesize_pairs: test_fraction must lie in [0,1]");
  }
  if (!std::filesystem::is_directory(source_dir)) throw DatasetError("source directory not found: " + source_dir.string());
  std::vector<std::filesystem::path> sources;
  for (const auto& e : std::filesystem::directory_iterator(source_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") sources.push_back(e.path());
  }
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) throw DatasetError("synthesize_pairs: no PNG images in " + source_dir.string());

  // Identity-level split: a seeded Fisher-Yates permutation, first n_test go to test.
  const Index n = static_cast<Index>(sources.size());
  std::vector<Index> perm(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  std::mt19937_64 split_rng(mix_seed(options.seed, 0x5911u));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(split_rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  const auto n_test = static_cast<Index>(std::llround(options.split.test_fraction * static_cast<double>(n)));
  std::vector<std::string> split_of(static_cast<size_t>(n), "train");
  for (Index i = 0; i < n_test; ++i) split_of[static_cast<size_t>(perm[static_cast<size_t>(i)])] = "test";

  DatasetManifest m;
  m.seed = options.seed;
  m.image_size = options.image_size;
  m.ranges = options.ranges;
  m.root = out_dir;
  for (const auto* s : stylizers) m.styles.push_back(s->id());
  std::filesystem::create_directories(out_dir / "rf");
  std::filesystem::create_directories(out_dir / "sf");

  for (Index i = 0; i < n; ++i) {
    const auto& src = sources[static_cast<size_t>(i)];
    Image rf;
    try {
      rf = quantize_8bit(center_crop_resize(load_png(src), options.image_size));
    } catch (const DecodeError& e) {
      spdlog::warn("skipping source {}: {}", src.filename().string(), e.what());
      continue;
    }
    const std::string identity = src.stem().string();
    const std::string rf_rel = "rf/" + identity + ".png";
    save_png(rf, out_dir / rf_rel);
    for (const auto* stylizer : stylizers) {
      const std::string style = stylizer->id();
      FacePairRecord r;
      r.id = identity + "_" + style;
      r.identity = identity;
      r.source = src.filename().string();
      r.rf_path = rf_rel;
      r.sf_path = "sf/" + identity + "_" + style + ".png";
      r.style = style;
      r.split = split_of[static_cast<size_t>(i)];
      r.misalignment = sample_misalignment(mix_seed(mix_seed(options.seed, static_cast<std::uint64_t>(i)), fnv1a64(style)), options.ranges);
      try {
        const Image sf = quantize_8bit(stylizer->apply(apply_affine(rf, r.misalignment)));
        save_png(sf, out_dir / r.sf_path);
      } catch (const std::exception& e) {
        spdlog::warn("skipping record {}: stylizer '{}' failed: {}", r.id, style, e.what());
        continue;
      }
      ++m.split_counts[r.split];
      m.records.push_back(std::move(r));
    }
  }
  if (m.records.empty()) throw DatasetError("synthesize_pairs: no records were produced");
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }
Range range_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["image_size"] = m.image_size;
  j["styles"] = m.styles;
  j["ranges"] = {{"rotation_deg", range_json(m.ranges.rotation_deg)},
                 {"scale", range_json(m.ranges.scale)},
                 {"translation_frac", range_json(m.ranges.translation_frac)}};
  j["split_counts"] = m.split_counts;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"id", r.id},
                    {"identity", r.identity},
                    {"source", r.source},
                    {"rf_path", r.rf_path},
                    {"sf_path", r.sf_path},
                    {"style", r.style},
                    {"split", r.split},
                    {"misalignment",
                     {{"log_scale", r.misalignment.log_scale},
                      {"rotation", r.misalignment.rotation},
                      {"tx", r.misalignment.tx},
                      {"ty", r.misalignment.ty}}}});
  }
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) throw DatasetError("unsupported manifest version " + std::to_string(m.version));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.at("image_size").get<Index>();
    m.styles = j.at("styles").get<std::vector<std::string>>();
    const auto& rg = j.at("ranges");
    m.ranges = {range_from(rg.at("rotation_deg")), range_from(rg.at("scale")), range_from(rg.at("translation_frac"))};
    m.split_counts = j.at("split_counts").get<std::map<std::string, Index>>();
    for (const auto& rj : j.at("records")) {
      FacePairRecord r;
      r.id = rj.at("id").get<std::string>();
      r.identity = rj.at("identity").get<std::string>();
      r.source = rj.at("source").get<std::string>();
      r.rf_path = rj.at("rf_path").get<std::string>();
      r.sf_path = rj.at("sf_path").get<std::string>();
      r.style = rj.at("style").get<std::string>();
      r.split = rj.at("split").get<std::string>();
      const auto& mj = rj.at("misalignment");
      r.misalignment = {mj.at("log_scale").get<double>(), mj.at("rotation").get<double>(), mj.at("tx").get<double>(),
                        mj.at("ty").get<double>()};
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << manifest_to_json(m).dump(2) << "\n";
  if (!out) throw DatasetError("cannot write " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("cannot parse manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m = manifest_from_json(j);
  m.root = path.parent_path();
  return m;
}

void write_synthetic_faces(const std::filesystem::path& dir, Index count, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (Index i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%03lld.png", static_cast<long long>(i));
    save_png(quantize_8bit(render_face(mix_seed(seed, static_cast<std::uint64_t>(i)))), dir / name);
  }
}

}  // namespace ifrp

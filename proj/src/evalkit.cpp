#include "ifrp/evalkit.hpp"

#include "ifrp/extractor.hpp"
#include "ifrp/trainer.hpp"

#include <spdlog/spdlog.h>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

namespace ifrp {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": image shapes differ");
}

// Valid-mode separable filtering with a symmetric kernel.
MatrixXd filter_valid(const MatrixXd& x, const Eigen::VectorXd& k) {
  const Index m = k.size();
  const Index rows = x.rows() - m + 1, cols = x.cols() - m + 1;
  MatrixXd tmp = MatrixXd::Zero(rows, x.cols());
  for (Index i = 0; i < m; ++i) tmp += k(i) * x.middleRows(i, rows);
  MatrixXd out = MatrixXd::Zero(rows, cols);
  for (Index j = 0; j < m; ++j) out += k(j) * tmp.middleCols(j, cols);
  return out;
}

// Full 2-D convolution cropped to the input size (zero padding outside).
MatrixXd conv2_same(const MatrixXd& x, const MatrixXd& k) {
  const Index oy = k.rows() / 2, ox = k.cols() / 2;
  MatrixXd out = MatrixXd::Zero(x.rows(), x.cols());
  for (Index y = 0; y < x.rows(); ++y)
    for (Index xx = 0; xx < x.cols(); ++xx) {
      double s = 0;
      for (Index i = 0; i < k.rows(); ++i) {
        const Index sy = y + oy - i;
        if (sy < 0 || sy >= x.rows()) continue;
        for (Index j = 0; j < k.cols(); ++j) {
          const Index sx = xx + ox - j;
          if (sx >= 0 && sx < x.cols()) s += x(sy, sx) * k(i, j);
        }
      }
      out(y, xx) = s;
    }
  return out;
}

MatrixXcd fft2(const MatrixXcd& x, bool inverse) {
  Eigen::FFT<double> fft;
  MatrixXcd out = x;
  std::vector<std::complex<double>> in, res;
  for (Index c = 0; c < out.cols(); ++c) {
    in.assign(out.col(c).data(), out.col(c).data() + out.rows());
    inverse ? fft.inv(res, in) : fft.fwd(res, in);
    for (Index r = 0; r < out.rows(); ++r) out(r, c) = res[static_cast<size_t>(r)];
  }
  for (Index r = 0; r < out.rows(); ++r) {
    in.resize(static_cast<size_t>(out.cols()));
    for (Index c = 0; c < out.cols(); ++c) in[static_cast<size_t>(c)] = out(r, c);
    inverse ? fft.inv(res, in) : fft.fwd(res, in);
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = res[static_cast<size_t>(c)];
  }
  return out;
}

// Normalized frequency coordinates with the zero frequency moved to (0,0).
Eigen::VectorXd freq_range(Index n) {
  Eigen::VectorXd r(n);
  for (Index i = 0; i < n; ++i) {
    r(i) = n % 2 ? (static_cast<double>(i) - (n - 1) / 2.0) / static_cast<double>(n - 1)
                 : (static_cast<double>(i) - n / 2.0) / static_cast<double>(n);
  }
  Eigen::VectorXd shifted(n);
  const Index half = n / 2;  // ifftshift
  for (Index i = 0; i < n; ++i) shifted(i) = r((i + half) % n);
  return shifted;
}

double median_of(std::vector<double> v) {
  const size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  const double mse = (a.pixels.cast<double>() - b.pixels.cast<double>()).matrix().squaredNorm() / static_cast<double>(a.pixels.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const MatrixXd& a, const MatrixXd& b) {
  constexpr Index kWin = 11;
  constexpr double kSigma = 1.5, C1 = 1e-4, C2 = 9e-4;
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ssim: image shapes differ");
  if (a.rows() < kWin || a.cols() < kWin) throw ShapeError("ssim: images smaller than the 11x11 window");
  Eigen::VectorXd w(kWin);
  for (Index i = 0; i < kWin; ++i) w(i) = std::exp(-std::pow(static_cast<double>(i - kWin / 2), 2) / (2 * kSigma * kSigma));
  w /= w.sum();
  const Eigen::ArrayXXd ma = filter_valid(a, w).array(), mb = filter_valid(b, w).array();
  const Eigen::ArrayXXd s_aa = filter_valid(a.cwiseProduct(a), w).array() - ma.square();
  const Eigen::ArrayXXd s_bb = filter_valid(b.cwiseProduct(b), w).array() - mb.square();
  const Eigen::ArrayXXd s_ab = filter_valid(a.cwiseProduct(b), w).array() - ma * mb;
  const Eigen::ArrayXXd map = ((2 * ma * mb + C1) * (2 * s_ab + C2)) / ((ma.square() + mb.square() + C1) * (s_aa + s_bb + C2));
  return map.mean();
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  return ssim(to_gray(a), to_gray(b));
}

MatrixXd phase_congruency(const MatrixXd& im) {
  constexpr int nscale = 4, norient = 4;
  constexpr double min_wavelength = 6, mult = 2, sigma_onf = 0.55, d_theta_on_sigma = 1.2, k = 2.0, epsilon = 1e-4;
  constexpr double theta_sigma = std::numbers::pi / norient / d_theta_on_sigma;
  const Index rows = im.rows(), cols = im.cols();
  const MatrixXcd image_fft = fft2(im.cast<std::complex<double>>(), false);

  const Eigen::VectorXd xr = freq_range(cols), yr = freq_range(rows);
  MatrixXd radius(rows, cols), sintheta(rows, cols), costheta(rows, cols), lowpass(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      const double x = xr(c), y = yr(r);
      const double rad = std::sqrt(x * x + y * y);
      lowpass(r, c) = 1.0 / (1.0 + std::pow(rad / 0.45, 2 * 15));
      radius(r, c) = rad;
      const double theta = std::atan2(-y, x);
      sintheta(r, c) = std::sin(theta);
      costheta(r, c) = std::cos(theta);
    }
  radius(0, 0) = 1;

  std::vector<MatrixXd> log_gabor(nscale);
  for (int s = 0; s < nscale; ++s) {
    const double fo = 1.0 / (min_wavelength * std::pow(mult, s));
    const double denom = 2 * std::pow(std::log(sigma_onf), 2);
    log_gabor[s] = ((-(radius.array() / fo).log().square()) / denom).exp() * lowpass.array();
    log_gabor[s](0, 0) = 0;
  }

  MatrixXd energy_all = MatrixXd::Zero(rows, cols), an_all = MatrixXd::Zero(rows, cols);
  const double n_pix = static_cast<double>(rows * cols);
  for (int o = 0; o < norient; ++o) {
    const double angl = o * std::numbers::pi / norient;
    MatrixXd spread(rows, cols);
    for (Index i = 0; i < rows * cols; ++i) {
      const double ds = sintheta(i) * std::cos(angl) - costheta(i) * std::sin(angl);
      const double dc = costheta(i) * std::cos(angl) + sintheta(i) * std::sin(angl);
      const double dtheta = std::abs(std::atan2(ds, dc));
      spread(i) = std::exp(-dtheta * dtheta / (2 * theta_sigma * theta_sigma));
    }
    MatrixXd sum_e = MatrixXd::Zero(rows, cols), sum_o = sum_e, sum_an = sum_e, energy = sum_e;
    std::vector<MatrixXcd> eo(nscale);
    std::vector<MatrixXd> ifft_filter(nscale);
    double em_n = 0;
    for (int s = 0; s < nscale; ++s) {
      const MatrixXd filter = log_gabor[s].cwiseProduct(spread);
      ifft_filter[s] = fft2(filter.cast<std::complex<double>>(), true).real() * std::sqrt(n_pix);
      eo[s] = fft2(image_fft.cwiseProduct(filter.cast<std::complex<double>>()), true);
      sum_an += eo[s].cwiseAbs();
      sum_e += eo[s].real();
      sum_o += eo[s].imag();
      if (s == 0) em_n = filter.squaredNorm();
    }
    const MatrixXd x_energy = (sum_e.array().square() + sum_o.array().square()).sqrt() + epsilon;
    const MatrixXd mean_e = sum_e.cwiseQuotient(x_energy), mean_o = sum_o.cwiseQuotient(x_energy);
    for (int s = 0; s < nscale; ++s) {
      const MatrixXd e = eo[s].real(), od = eo[s].imag();
      energy.array() += e.array() * mean_e.array() + od.array() * mean_o.array() -
                        (e.array() * mean_o.array() - od.array() * mean_e.array()).abs();
    }
    std::vector<double> e2(static_cast<size_t>(rows * cols));
    for (Index i = 0; i < rows * cols; ++i) e2[static_cast<size_t>(i)] = std::norm(eo[0](i));
    const double mean_e2n = -median_of(e2) / std::log(0.5);
    const double noise_power = mean_e2n / em_n;
    double sum_an2 = 0, sum_aiaj = 0;
    for (int s = 0; s < nscale; ++s) sum_an2 += ifft_filter[s].squaredNorm();
    for (int si = 0; si < nscale - 1; ++si)
      for (int sj = si + 1; sj < nscale; ++sj) sum_aiaj += ifft_filter[si].cwiseProduct(ifft_filter[sj]).sum();
    const double noise_energy2 = 2 * noise_power * sum_an2 + 4 * noise_power * sum_aiaj;
    const double tau = std::sqrt(noise_energy2 / 2);
    const double noise_energy = tau * std::sqrt(std::numbers::pi / 2);
    const double noise_sigma = std::sqrt((2 - std::numbers::pi / 2) * tau * tau);
    const double T = (noise_energy + k * noise_sigma) / 1.7;
    energy_all.array() += (energy.array() - T).max(0.0);
    an_all += sum_an;
  }
  return (an_all.array() > 0).select(energy_all.array() / an_all.array(), 0.0).matrix();
}

MatrixXd gradient_magnitude(const MatrixXd& image) {
  MatrixXd dx(3, 3);
  dx << 3, 0, -3, 10, 0, -10, 3, 0, -3;
  dx /= 16.0;
  const MatrixXd ix = conv2_same(image, dx), iy = conv2_same(image, dx.transpose());
  return (ix.array().square() + iy.array().square()).sqrt().matrix();
}

double fsim(const MatrixXd& a255, const MatrixXd& b255) {
  if (a255.rows() != b255.rows() || a255.cols() != b255.cols()) throw ShapeError("fsim: image shapes differ");
  if (std::min(a255.rows(), a255.cols()) < 32) throw ShapeError("fsim: images must be at least 32x32");
  constexpr double T1 = 0.85, T2 = 160;
  const Index f = std::max<Index>(1, std::lround(static_cast<double>(std::min(a255.rows(), a255.cols())) / 256.0));
  auto down = [f](const MatrixXd& y) -> MatrixXd {
    if (f == 1) return y;
    const MatrixXd avg = conv2_same(y, MatrixXd::Constant(f, f, 1.0 / static_cast<double>(f * f)));
    MatrixXd out((y.rows() + f - 1) / f, (y.cols() + f - 1) / f);
    for (Index r = 0; r < out.rows(); ++r)
      for (Index c = 0; c < out.cols(); ++c) out(r, c) = avg(r * f, c * f);
    return out;
  };
  const MatrixXd y1 = down(a255), y2 = down(b255);
  const Eigen::ArrayXXd pc1 = phase_congruency(y1).array(), pc2 = phase_congruency(y2).array();
  const Eigen::ArrayXXd g1 = gradient_magnitude(y1).array(), g2 = gradient_magnitude(y2).array();
  const Eigen::ArrayXXd pc_sim = (2 * pc1 * pc2 + T1) / (pc1.square() + pc2.square() + T1);
  const Eigen::ArrayXXd g_sim = (2 * g1 * g2 + T2) / (g1.square() + g2.square() + T2);
  const Eigen::ArrayXXd pcm = pc1.max(pc2);
  const double weight = pcm.sum();
  // Featureless pairs carry no phase-congruency weight; fall back to gradient similarity.
  if (weight <= 0) return g_sim.mean();
  return (g_sim * pc_sim * pcm).sum() / weight;
}

double fsim(const Image& a, const Image& b) {
  require_same(a, b, "fsim");
  return fsim(to_gray(a) * 255.0, to_gray(b) * 255.0);
}

// ---------------------------------------------------------------- embeddings

Eigen::VectorXd PixelEmbedder::embed(const Image& face) const {
  const MatrixXd g = to_gray(face);
  return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

ConvEmbedder::ConvEmbedder(std::uint64_t seed, Index width) : seed_(seed), width_(width) {}

Eigen::VectorXd ConvEmbedder::embed(const Image& face) const {
  ConvFeatureExtractor<double> psi(seed_, width_, "relu3");
  const Tensor<double> f = psi.forward(images_to_tensor<double>({face}));
  Eigen::VectorXd v = f.vec();
  const double n = v.norm();
  if (n > 0) v /= n;
  return v;
}

std::unique_ptr<IdentityExtractor> make_embedder(const std::string& kind) {
  if (kind == "pixel") return std::make_unique<PixelEmbedder>();
  if (kind == "conv") return std::make_unique<ConvEmbedder>();
  throw EvalError("unknown embedder '" + kind + "'");
}

LabeledEmbeddings embed_all(const IdentityExtractor& embedder, const std::vector<Image>& faces,
                            const std::vector<std::string>& labels) {
  if (faces.size() != labels.size()) throw EvalError("embed_all: every face needs an identity label");
  LabeledEmbeddings out;
  out.labels = labels;
  for (size_t i = 0; i < faces.size(); ++i) {
    const Eigen::VectorXd v = embedder.embed(faces[i]);
    if (i == 0) out.vectors.resize(static_cast<Index>(faces.size()), v.size());
    out.vectors.row(static_cast<Index>(i)) = v.transpose();
  }
  return out;
}

std::vector<Index> rank_gallery(const Eigen::VectorXd& query, const MatrixXd& gallery, Index k) {
  if (k < 1 || k > gallery.rows()) throw EvalError("retrieval needs 1 <= k <= gallery size");
  if (query.size() != gallery.cols()) throw ShapeError("rank_gallery: embedding sizes differ");
  const Eigen::VectorXd d = (gallery.rowwise() - query.transpose()).rowwise().squaredNorm();
  std::vector<Index> idx(static_cast<size_t>(gallery.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](Index a, Index b) { return d(a) < d(b) || (d(a) == d(b) && a < b); });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

namespace {

void check_labels(const LabeledEmbeddings& e, const char* what) {
  if (e.vectors.rows() != e.size()) throw EvalError(std::string(what) + ": label count differs from embedding count");
  for (const auto& l : e.labels)
    if (l.empty()) throw EvalError(std::string(what) + ": missing identity label");
}

Index hits(const LabeledEmbeddings& queries, const LabeledEmbeddings& gallery, Index k) {
  Index h = 0;
  for (Index q = 0; q < queries.size(); ++q) {
    const auto top = rank_gallery(queries.vectors.row(q).transpose(), gallery.vectors, k);
    for (Index g : top) {
      if (gallery.labels[static_cast<size_t>(g)] == queries.labels[static_cast<size_t>(q)]) {
        ++h;
        break;
      }
    }
  }
  return h;
}

}  // namespace

double face_retrieval_ratio(const LabeledEmbeddings& queries, const LabeledEmbeddings& gallery, Index k) {
  check_labels(queries, "face_retrieval_ratio");
  check_labels(gallery, "face_retrieval_ratio");
  if (queries.size() == 0) throw EvalError("face_retrieval_ratio: no queries");
  const std::set<std::string> known(gallery.labels.begin(), gallery.labels.end());
  for (const auto& l : queries.labels)
    if (!known.count(l)) throw EvalError("face_retrieval_ratio: identity '" + l + "' is not in the gallery");
  return 100.0 * static_cast<double>(hits(queries, gallery, k)) / static_cast<double>(queries.size());
}

double face_consistency_ratio(const std::map<std::string, LabeledEmbeddings>& per_style, Index k) {
  if (per_style.size() < 2) throw EvalError("face_consistency_ratio: needs at least two styles");
  for (const auto& [style, e] : per_style) {
    check_labels(e, "face_consistency_ratio");
    if (e.size() == 0) throw EvalError("face_consistency_ratio: style '" + style + "' has no faces");
  }
  double total = 0;
  for (const auto& [style, queries] : per_style) {
    LabeledEmbeddings others;
    Index rows = 0;
    for (const auto& [s, e] : per_style)
      if (s != style) rows += e.size();
    others.vectors.resize(rows, queries.vectors.cols());
    Index r = 0;
    for (const auto& [s, e] : per_style) {
      if (s == style) continue;
      others.vectors.middleRows(r, e.size()) = e.vectors;
      others.labels.insert(others.labels.end(), e.labels.begin(), e.labels.end());
      r += e.size();
    }
    total += static_cast<double>(hits(queries, others, k)) / static_cast<double>(queries.size());
  }
  return 100.0 * total / static_cast<double>(per_style.size());
}

// ---------------------------------------------------------------- report

namespace {

void accumulate(QualityStats& s, double p, double ss, double f) {
  ++s.count;
  s.psnr += p;
  s.ssim += ss;
  s.fsim += f;
}

QualityStats finish(QualityStats s) {
  if (s.count > 0) {
    const double n = static_cast<double>(s.count);
    s.psnr /= n;
    s.ssim /= n;
    s.fsim /= n;
  }
  return s;
}

nlohmann::json stats_json(const QualityStats& s) {
  return {{"count", s.count}, {"psnr_db", s.psnr}, {"ssim", s.ssim}, {"fsim", s.fsim}};
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = config;
  j["styles"]["seen"] = seen_styles;
  j["styles"]["unseen"] = unseen_styles;
  auto& q = j["quality"];
  for (const auto& [s, st] : per_style) q["per_style"][s] = stats_json(st);
  for (const auto& [s, st] : per_style_input) q["input_per_style"][s] = stats_json(st);
  for (const auto& [g, st] : groups) q["groups"][g] = stats_json(st);
  auto& id = j["identity"];
  id["gallery_size"] = gallery_size;
  id["frr_per_style"] = frr_per_style;
  id["frr_groups"] = frr_groups;
  id["fcr"] = fcr ? nlohmann::json(*fcr) : nlohmann::json(nullptr);
  return j;
}

EvalReport evaluate(const DatasetManifest& manifest, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& out_path, const EvalOptions& options) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const TrainConfig config = config_from_json(ckpt.header.at("config"));
  auto srn = load_generator(ckpt);
  const auto embedder = make_embedder(options.embedder);

  const auto records = manifest.split("test");
  if (records.empty()) throw EvalError("manifest has no test split");

  EvalReport report;
  std::vector<std::string> seen = options.seen_styles.empty() ? config.train_styles : options.seen_styles;
  if (seen.empty()) seen = manifest.styles;
  for (const auto& s : seen) {
    if (std::find(manifest.styles.begin(), manifest.styles.end(), s) == manifest.styles.end()) {
      throw EvalError("style group label '" + s + "' does not name a manifest style");
    }
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  report.seen_styles = seen;
  for (const auto& s : manifest.styles)
    if (!std::binary_search(seen.begin(), seen.end(), s)) report.unseen_styles.push_back(s);

  std::vector<Image> sf, rf;
  std::vector<std::string> labels;
  for (const auto* r : records) {
    sf.push_back(load_png(manifest.resolve(r->sf_path)));
    rf.push_back(load_png(manifest.resolve(r->rf_path)));
    labels.push_back(r->identity);
  }
  const auto recovered = recover(*srn, sf, config.batch_size);

  std::map<std::string, QualityStats> per_style, per_style_input, groups;
  std::map<std::string, std::vector<size_t>> by_style;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& style = records[i]->style;
    const double p = psnr(recovered[i], rf[i]), s = ssim(recovered[i], rf[i]), f = fsim(recovered[i], rf[i]);
    accumulate(per_style[style], p, s, f);
    accumulate(per_style_input[style], psnr(sf[i], rf[i]), ssim(sf[i], rf[i]), fsim(sf[i], rf[i]));
    accumulate(groups["all"], p, s, f);
    accumulate(groups[std::binary_search(seen.begin(), seen.end(), style) ? "seen" : "unseen"], p, s, f);
    if (style == "sketch") accumulate(groups["sketch"], p, s, f);
    by_style[style].push_back(i);
  }
  for (auto& [k, v] : per_style) report.per_style[k] = finish(v);
  for (auto& [k, v] : per_style_input) report.per_style_input[k] = finish(v);
  for (auto& [k, v] : groups) report.groups[k] = finish(v);

  // Gallery: one ground-truth face per test identity, in first-appearance order.
  std::vector<Image> gallery_faces;
  std::vector<std::string> gallery_labels;
  std::set<std::string> seen_ids;
  for (size_t i = 0; i < records.size(); ++i) {
    if (seen_ids.insert(labels[i]).second) {
      gallery_faces.push_back(rf[i]);
      gallery_labels.push_back(labels[i]);
    }
  }
  const auto gallery = embed_all(*embedder, gallery_faces, gallery_labels);
  report.gallery_size = gallery.size();
  const Index k = std::min(options.k, gallery.size());

  std::map<std::string, LabeledEmbeddings> per_style_emb;
  for (const auto& [style, idx] : by_style) {
    std::vector<Image> faces;
    std::vector<std::string> ls;
    for (size_t i : idx) {
      faces.push_back(recovered[i]);
      ls.push_back(labels[i]);
    }
    per_style_emb[style] = embed_all(*embedder, faces, ls);
    report.frr_per_style[style] = face_retrieval_ratio(per_style_emb[style], gallery, k);
  }
  for (const auto& group : {std::string("seen"), std::string("unseen"), std::string("sketch")}) {
    if (!report.groups.count(group)) continue;
    double h = 0;
    Index n = 0;
    for (const auto& [style, e] : per_style_emb) {
      const bool member = group == "sketch" ? style == "sketch"
                                            : std::binary_search(seen.begin(), seen.end(), style) == (group == "seen");
      if (!member) continue;
      h += report.frr_per_style[style] * static_cast<double>(e.size());
      n += e.size();
    }
    report.frr_groups[group] = h / static_cast<double>(n);
  }
  if (per_style_emb.size() >= 2) report.fcr = face_consistency_ratio(per_style_emb, k);

  report.config = {{"checkpoint_config_hash", config_hash(config)},
                   {"checkpoint_step", ckpt.header.value("step", Index{0})},
                   {"train_config", config_to_json(config)},
                   {"embedder", embedder->kind()},
                   {"k", k},
                   {"manifest", {{"seed", manifest.seed}, {"image_size", manifest.image_size}, {"styles", manifest.styles}}},
                   {"test_pairs", records.size()}};

  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw EvalError("cannot write report " + out_path.string());
  out << report.to_json().dump(2) << "\n";
  spdlog::info("evaluated {} test pair(s): PSNR {:.2f} dB, SSIM {:.4f}, FSIM {:.4f}", records.size(),
               report.groups["all"].psnr, report.groups["all"].ssim, report.groups["all"].fsim);

  if (options.grid_path) {
    const size_t n = std::min(records.size(), static_cast<size_t>(options.grid_rows));
    save_png(comparison_grid({rf.begin(), rf.begin() + static_cast<std::ptrdiff_t>(n)},
                             {sf.begin(), sf.begin() + static_cast<std::ptrdiff_t>(n)},
                             {recovered.begin(), recovered.begin() + static_cast<std::ptrdiff_t>(n)}),
             *options.grid_path);
  }
  return report;
}

Image comparison_grid(const std::vector<Image>& gt, const std::vector<Image>& sf, const std::vector<Image>& recovered,
                      Index gap) {
  if (gt.empty() || gt.size() != sf.size() || gt.size() != recovered.size()) {
    throw EvalError("comparison_grid: need equally many GT, SF and recovered images");
  }
  const Index w = gt[0].width, h = gt[0].height, rows = static_cast<Index>(gt.size());
  Image grid(3 * w + 2 * gap, rows * h + (rows - 1) * gap, 3);
  grid.pixels.setOnes();
  for (Index r = 0; r < rows; ++r) {
    const Image* cells[3] = {&gt[static_cast<size_t>(r)], &sf[static_cast<size_t>(r)], &recovered[static_cast<size_t>(r)]};
    for (Index c = 0; c < 3; ++c) {
      const Image& cell = *cells[c];
      if (cell.width != w || cell.height != h || cell.channels != 3) throw ShapeError("comparison_grid: mixed image shapes");
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          for (Index ch = 0; ch < 3; ++ch) grid.at(r * (h + gap) + y, c * (w + gap) + x, ch) = cell.at(y, x, ch);
    }
  }
  return grid;
}

}  // namespace ifrp

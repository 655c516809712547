#ifndef IFRP_EVALKIT_HPP
#define IFRP_EVALKIT_HPP

#include "ifrp/dataset.hpp"
#include "ifrp/image.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ifrp {

inline constexpr const char* kReportSchemaVersion = "1.0";

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- full-reference quality metrics; images are [0,1] floats

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over all RGB samples, capped at 100 dB.
double psnr(const Image& a, const Image& b);

// Mean SSIM of the luma channels over all valid 11x11 Gaussian windows (sigma 1.5).
double ssim(const Image& a, const Image& b);
double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Grayscale FSIM on the 0..255 luma scale.
double fsim(const Image& a, const Image& b);
double fsim(const Eigen::MatrixXd& a255, const Eigen::MatrixXd& b255);

// Phase congruency map (4 scales, 4 orientations, log-Gabor filters).
Eigen::MatrixXd phase_congruency(const Eigen::MatrixXd& image);

// Scharr-style gradient magnitude used by FSIM.
Eigen::MatrixXd gradient_magnitude(const Eigen::MatrixXd& image);

// ---- identity embeddings and retrieval

class IdentityExtractor {
 public:
  virtual ~IdentityExtractor() = default;
  virtual std::string kind() const = 0;
  virtual Eigen::VectorXd embed(const Image& face) const = 0;
};

// Raw luma values.
class PixelEmbedder final : public IdentityExtractor {
 public:
  std::string kind() const override { return "pixel"; }
  Eigen::VectorXd embed(const Image& face) const override;
};

// Unit-normalized frozen conv features.
class ConvEmbedder final : public IdentityExtractor {
 public:
  explicit ConvEmbedder(std::uint64_t seed = 7, Index width = 8);
  std::string kind() const override { return "conv"; }
  Eigen::VectorXd embed(const Image& face) const override;

 private:
  std::uint64_t seed_;
  Index width_;
};

std::unique_ptr<IdentityExtractor> make_embedder(const std::string& kind);

// One embedding per row.
struct LabeledEmbeddings {
  Eigen::MatrixXd vectors;
  std::vector<std::string> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

LabeledEmbeddings embed_all(const IdentityExtractor& embedder, const std::vector<Image>& faces,
                            const std::vector<std::string>& labels);

// Gallery rows ordered by Euclidean distance to `query`; ties keep gallery order.
std::vector<Index> rank_gallery(const Eigen::VectorXd& query, const Eigen::MatrixXd& gallery, Index k);

// Percent of queries whose label appears among their k nearest gallery rows.
double face_retrieval_ratio(const LabeledEmbeddings& queries, const LabeledEmbeddings& gallery, Index k = 5);

// For every style, percent of its faces whose identity appears among the k nearest
// faces recovered from the other styles; averaged over styles.
double face_consistency_ratio(const std::map<std::string, LabeledEmbeddings>& per_style, Index k = 5);

// ---- report

struct QualityStats {
  Index count = 0;
  double psnr = 0;
  double ssim = 0;
  double fsim = 0;
};

struct EvalOptions {
  std::string embedder = "conv";
  Index k = 5;
  // Styles treated as seen during training. Empty: the checkpoint's train_styles,
  // or every manifest style when those are empty too.
  std::vector<std::string> seen_styles;
  std::optional<std::filesystem::path> grid_path;
  Index grid_rows = 8;
};

struct EvalReport {
  std::map<std::string, QualityStats> per_style;          // recovered vs ground truth
  std::map<std::string, QualityStats> per_style_input;    // stylized input vs ground truth
  std::map<std::string, QualityStats> groups;             // "all", "seen", "unseen", "sketch"
  std::map<std::string, double> frr_per_style;
  std::map<std::string, double> frr_groups;
  std::optional<double> fcr;
  std::vector<std::string> seen_styles;
  std::vector<std::string> unseen_styles;
  Index gallery_size = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

// Recovers every test-split SF image with the checkpoint, scores it against
// its RF, runs the retrieval protocols and writes the JSON report.
EvalReport evaluate(const DatasetManifest& manifest, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& out_path, const EvalOptions& options = {});

// Rows of GT | SF | recovered triples.
Image comparison_grid(const std::vector<Image>& gt, const std::vector<Image>& sf, const std::vector<Image>& recovered,
                      Index gap = 2);

}  // namespace ifrp

#endif  // IFRP_EVALKIT_HPP

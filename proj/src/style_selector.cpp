#include "ifrp/style_selector.hpp"

#include <algorithm>
#include <cmath>

namespace ifrp {

namespace {

void require_symmetric(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw ValidationError(std::string(what) + ": matrix is not square");
  if (!a.allFinite()) throw ValidationError(std::string(what) + ": matrix has non-finite entries");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6) throw ValidationError(std::string(what) + ": matrix is not symmetric (max |A-A^T| = " + std::to_string(asym) + ")");
}

}  // namespace

double default_eps(const Eigen::MatrixXd& a) {
  const double e = 1e-6 * a.trace() / static_cast<double>(a.rows());
  return e > 0 ? e : 1e-12;
}

Eigen::MatrixXd spd_log(const Eigen::MatrixXd& a, double eps) {
  require_symmetric(a, "spd_log");
  if (!(eps > 0)) throw ValidationError("spd_log: eps must be > 0");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw ValidationError("spd_log: eigendecomposition failed");
  Eigen::VectorXd lam = es.eigenvalues().array() + eps;
  if (lam.minCoeff() <= 0) throw ValidationError("spd_log: matrix is not positive definite after regularization");
  lam = lam.array().log();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

double log_euclidean_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::optional<double> eps) {
  require_symmetric(a, "log_euclidean_distance");
  require_symmetric(b, "log_euclidean_distance");
  if (a.rows() != b.rows()) throw ValidationError("log_euclidean_distance: size mismatch");
  if (eps && !(*eps > 0)) throw ValidationError("log_euclidean_distance: eps must be > 0");
  const Eigen::MatrixXd la = spd_log(a, eps.value_or(default_eps(a)));
  const Eigen::MatrixXd lb = spd_log(b, eps.value_or(default_eps(b)));
  return (la - lb).norm();
}

std::vector<Eigen::MatrixXd> mean_grams(const std::vector<StyleDescriptor>& faces) {
  if (faces.empty()) throw ValidationError("mean_grams: at least one real face is required");
  std::vector<Eigen::MatrixXd> mean = faces.front().grams;
  for (size_t i = 1; i < faces.size(); ++i) {
    if (faces[i].grams.size() != mean.size()) throw ValidationError("mean_grams: inconsistent layer count");
    for (size_t l = 0; l < mean.size(); ++l) mean[l] += faces[i].grams[l];
  }
  for (auto& m : mean) m /= static_cast<double>(faces.size());
  return mean;
}

std::vector<StyleScore> score_styles(const std::vector<StyleDescriptor>& styles,
                                     const std::vector<Eigen::MatrixXd>& reference, std::optional<double> eps) {
  if (styles.empty()) throw ValidationError("score_styles: empty style list");
  std::vector<StyleScore> scores;
  for (const auto& s : styles) {
    if (s.grams.size() != reference.size()) throw ValidationError("score_styles: layer count mismatch for '" + s.style_id + "'");
    double d = 0;
    for (size_t l = 0; l < reference.size(); ++l) d += log_euclidean_distance(s.grams[l], reference[l], eps);
    scores.push_back({s.style_id, d});
  }
  std::sort(scores.begin(), scores.end(), [](const StyleScore& x, const StyleScore& y) {
    if (x.distance != y.distance) return x.distance > y.distance;
    return x.style_id < y.style_id;
  });
  return scores;
}

std::vector<std::string> rank_styles(const std::vector<StyleDescriptor>& styles,
                                     const std::vector<StyleDescriptor>& real_faces, Index k,
                                     std::optional<double> eps) {
  if (styles.empty()) throw ValidationError("rank_styles: empty style list");
  if (k < 1 || k > static_cast<Index>(styles.size())) throw ValidationError("rank_styles: k must lie in [1, #styles]");
  const auto scores = score_styles(styles, mean_grams(real_faces), eps);
  std::vector<std::string> out;
  for (Index i = 0; i < k; ++i) out.push_back(scores[static_cast<size_t>(i)].style_id);
  return out;
}

}  // namespace ifrp

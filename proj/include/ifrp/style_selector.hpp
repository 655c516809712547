#ifndef IFRP_STYLE_SELECTOR_HPP
#define IFRP_STYLE_SELECTOR_HPP

#include "ifrp/extractor.hpp"
#include "ifrp/tensor.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifrp {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StyleDescriptor {
  std::string style_id;
  std::vector<Eigen::MatrixXd> grams;  // one per tapped layer
};

struct StyleScore {
  std::string style_id;
  double distance = 0;
};

// G = F F^T / (C H W) for the C x (H W) unrolling F.
template <typename Derived>
Eigen::MatrixXd gram_matrix(const Eigen::MatrixBase<Derived>& features, Index height, Index width) {
  const Index c = features.rows();
  if (c < 1 || height < 1 || width < 1 || features.cols() != height * width) {
    throw ShapeError("gram_matrix: expected C x (H*W) features with C,H,W >= 1");
  }
  const Eigen::MatrixXd f = features.template cast<double>();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(c, c);
  g.selfadjointView<Eigen::Lower>().rankUpdate(f);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g / static_cast<double>(c * height * width);
}

// Gram matrix of sample n of a feature batch.
template <typename Scalar>
Eigen::MatrixXd gram_matrix(const Tensor<Scalar>& features, Index n = 0) {
  return gram_matrix(features.sample(n), features.h(), features.w());
}

// Symmetric-eigendecomposition matrix logarithm of A + eps I.
Eigen::MatrixXd spd_log(const Eigen::MatrixXd& a, double eps);

// Default regularization 1e-6 * trace(A) / C.
double default_eps(const Eigen::MatrixXd& a);

// || logm(A + eps I) - logm(B + eps I) ||_F. Without an explicit eps, each
// matrix uses its own default_eps.
double log_euclidean_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              std::optional<double> eps = std::nullopt);

// Mean Gram matrix per layer over a set of descriptors.
std::vector<Eigen::MatrixXd> mean_grams(const std::vector<StyleDescriptor>& faces);

// All styles scored against `reference`, sorted by descending distance then by id.
std::vector<StyleScore> score_styles(const std::vector<StyleDescriptor>& styles,
                                     const std::vector<Eigen::MatrixXd>& reference,
                                     std::optional<double> eps = std::nullopt);

// The k most distant styles from the mean real-face Gram matrices.
std::vector<std::string> rank_styles(const std::vector<StyleDescriptor>& styles,
                                     const std::vector<StyleDescriptor>& real_faces, Index k,
                                     std::optional<double> eps = std::nullopt);

// Grams of every extractor tap for each image in the batch.
template <typename Scalar>
std::vector<StyleDescriptor> describe(FeatureExtractor<Scalar>& psi, const Tensor<Scalar>& batch,
                                      const std::vector<std::string>& ids) {
  if (static_cast<Index>(ids.size()) != batch.n()) throw ShapeError("describe: one id per image required");
  const auto taps = psi.taps(batch);
  std::vector<StyleDescriptor> out(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    out[i].style_id = ids[i];
    for (const auto& t : taps) out[i].grams.push_back(gram_matrix(t, static_cast<Index>(i)));
  }
  return out;
}

}  // namespace ifrp

#endif  // IFRP_STYLE_SELECTOR_HPP

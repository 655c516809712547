#ifndef IFRP_IMAGE_HPP
#define IFRP_IMAGE_HPP

#include "ifrp/tensor.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace ifrp {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interleaved H x W x C image with values in [0, 1].
struct Image {
  Index width = 0;
  Index height = 0;
  Index channels = 0;
  Eigen::ArrayXf pixels;

  Image() = default;
  Image(Index w, Index h, Index c = 3)
      : width(w), height(h), channels(c), pixels(Eigen::ArrayXf::Zero(w * h * c)) {}

  float& at(Index y, Index x, Index ch) { return pixels[(y * width + x) * channels + ch]; }
  float at(Index y, Index x, Index ch) const { return pixels[(y * width + x) * channels + ch]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Image& o) const {
    return same_shape(o) && (pixels == o.pixels).all();
  }
};

Image load_png(const std::filesystem::path& path);
// Writes 8-bit RGB; values are clamped to [0,1] and rounded.
void save_png(const Image& image, const std::filesystem::path& path);

// Round-trips through 8-bit quantization, so in-memory data matches what a
// save/load cycle would produce.
Image quantize_8bit(const Image& image);

// Bilinear resize with half-pixel centers; exact copy when sizes match.
Image resize_bilinear(const Image& image, Index width, Index height);

// Luma 0.299 R + 0.587 G + 0.114 B as a height x width matrix.
Eigen::MatrixXd to_gray(const Image& image);

template <typename Scalar>
Tensor<Scalar> images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) return {};
  const Image& first = images.front();
  Tensor<Scalar> t(static_cast<Index>(images.size()), first.channels, first.height, first.width);
  for (Index n = 0; n < t.n(); ++n) {
    const Image& img = images[static_cast<size_t>(n)];
    if (!img.same_shape(first)) throw ShapeError("images_to_tensor: mixed image sizes");
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x)
        for (Index ch = 0; ch < img.channels; ++ch)
          t(n, ch, y, x) = static_cast<Scalar>(img.at(y, x, ch)) * Scalar(2) - Scalar(1);
  }
  return t;
}

template <typename Scalar>
std::vector<Image> tensor_to_images(const Tensor<Scalar>& t) {
  std::vector<Image> out;
  out.reserve(static_cast<size_t>(t.n()));
  for (Index n = 0; n < t.n(); ++n) {
    Image img(t.w(), t.h(), t.c());
    for (Index y = 0; y < t.h(); ++y)
      for (Index x = 0; x < t.w(); ++x)
        for (Index ch = 0; ch < t.c(); ++ch)
          img.at(y, x, ch) = static_cast<float>((t(n, ch, y, x) + Scalar(1)) / Scalar(2));
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace ifrp

#endif  // IFRP_IMAGE_HPP

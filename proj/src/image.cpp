#include "ifrp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace ifrp {

Image load_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DecodeError("cannot decode " + path.string() + ": " + png.message);
  }
  Index channels = 3;
  if (!(png.format & PNG_FORMAT_FLAG_COLOR)) {
    png.format = (png.format & PNG_FORMAT_FLAG_ALPHA) ? PNG_FORMAT_GA : PNG_FORMAT_GRAY;
    channels = (png.format & PNG_FORMAT_FLAG_ALPHA) ? 2 : 1;
  } else if (png.format & PNG_FORMAT_FLAG_ALPHA) {
    png.format = PNG_FORMAT_RGBA;
    channels = 4;
  } else {
    png.format = PNG_FORMAT_RGB;
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DecodeError("cannot decode " + path.string() + ": " + png.message);
  }
  Image img(static_cast<Index>(png.width), static_cast<Index>(png.height), channels);
  for (size_t i = 0; i < buffer.size(); ++i) img.pixels[static_cast<Index>(i)] = buffer[i] / 255.0f;
  return img;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 3 && image.channels != 1) {
    throw DecodeError("save_png: unsupported channel count " + std::to_string(image.channels));
  }
  std::vector<std::uint8_t> buffer(static_cast<size_t>(image.pixels.size()));
  for (Index i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    buffer[static_cast<size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " + png.message);
  }
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  out.pixels = (image.pixels.cwiseMax(0.0f).cwiseMin(1.0f) * 255.0f).round() / 255.0f;
  return out;
}

Image resize_bilinear(const Image& image, Index width, Index height) {
  if (width == image.width && height == image.height) return image;
  Image out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const Index y0 = static_cast<Index>(std::floor(fy));
    const Index y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const Index x0 = static_cast<Index>(std::floor(fx));
      const Index x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Index c = 0; c < image.channels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

Eigen::MatrixXd to_gray(const Image& image) {
  Eigen::MatrixXd gray(image.height, image.width);
  for (Index y = 0; y < image.height; ++y) {
    for (Index x = 0; x < image.width; ++x) {
      if (image.channels >= 3) {
        gray(y, x) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                     0.114 * image.at(y, x, 2);
      } else {
        gray(y, x) = image.at(y, x, 0);
      }
    }
  }
  return gray;
}

}  // namespace ifrp

#pragma once

#include "partstyle/common.hpp"

#include <filesystem>
#include <vector>

namespace partstyle {

using Rgb = Eigen::Vector3d;

/// Interleaved RGB image with double-precision channels, row-major.
/// Also used for per-pixel gradients, so values are not clamped.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, const Rgb& fill = Rgb::Zero());

  [[nodiscard]] bool empty() const { return width == 0 || height == 0; }
  [[nodiscard]] std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }
  double& at(int x, int y, int c) { return data[index(x, y) + c]; }
  [[nodiscard]] double at(int x, int y, int c) const { return data[index(x, y) + c]; }
  [[nodiscard]] Rgb pixel(int x, int y) const {
    const auto i = index(x, y);
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set_pixel(int x, int y, const Rgb& rgb) {
    const auto i = index(x, y);
    data[i] = rgb[0];
    data[i + 1] = rgb[1];
    data[i + 2] = rgb[2];
  }

  bool operator==(const Image&) const = default;
};

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace partstyle

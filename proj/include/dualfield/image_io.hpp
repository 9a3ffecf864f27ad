// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dualfield {

// Row-major, interleaved channels, values nominally in [0,1].
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

// 8-bit RGB; values are clamped to [0,1] and rounded.
void write_png_rgb(const std::string& path, const Image& rgb);
Image read_png_rgb(const std::string& path);

// 16-bit grayscale storing round(value * scale); read divides by scale.
void write_png_depth(const std::string& path, const Image& depth, double scale = 1000.0);
Image read_png_depth(const std::string& path, double scale = 1000.0);

}  // namespace dualfield

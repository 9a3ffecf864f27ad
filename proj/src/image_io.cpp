// SPDX-License-Identifier: Apache-2.0
#include "dualfield/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <memory>
#include <stdexcept>

namespace dualfield {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, int width, int height, int color_type, int bit_depth,
               const std::vector<std::vector<png_byte>>& rows) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: error writing " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Returns rows of raw samples after reading; bit depth and channels checked by caller.
struct RawPng {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<std::vector<png_byte>> rows;
};

RawPng read_png(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot read " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw std::runtime_error("not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: corrupt file " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  RawPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const int ct = png_get_color_type(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (ct & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.rows.assign(static_cast<std::size_t>(out.height), std::vector<png_byte>(rowbytes));
  for (auto& row : out.rows) png_read_row(png, row.data(), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png_rgb(const std::string& path, const Image& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("write_png_rgb: image must have 3 channels");
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(rgb.height),
                                          std::vector<png_byte>(static_cast<std::size_t>(rgb.width) * 3));
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(x, y, c), 0.0, 1.0);
        rows[y][static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  write_png(path, rgb.width, rgb.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

Image read_png_rgb(const std::string& path) {
  RawPng raw = read_png(path);
  if (raw.bit_depth != 8 || raw.channels != 3)
    throw std::runtime_error(path + ": expected 8-bit RGB");
  Image img(raw.width, raw.height, 3);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = raw.rows[y][static_cast<std::size_t>(x) * 3 + c] / 255.0;
  return img;
}

void write_png_depth(const std::string& path, const Image& depth, double scale) {
  if (depth.channels != 1) throw std::invalid_argument("write_png_depth: image must have 1 channel");
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(depth.height),
                                          std::vector<png_byte>(static_cast<std::size_t>(depth.width) * 2));
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const double v = std::clamp(std::round(depth.at(x, y, 0) * scale), 0.0, 65535.0);
      const auto q = static_cast<std::uint16_t>(v);
      rows[y][static_cast<std::size_t>(x) * 2] = static_cast<png_byte>(q >> 8);
      rows[y][static_cast<std::size_t>(x) * 2 + 1] = static_cast<png_byte>(q & 0xff);
    }
  write_png(path, depth.width, depth.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

Image read_png_depth(const std::string& path, double scale) {
  RawPng raw = read_png(path);
  if (raw.bit_depth != 16 || raw.channels != 1)
    throw std::runtime_error(path + ": expected 16-bit grayscale");
  Image img(raw.width, raw.height, 1);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x) {
      const auto hi = raw.rows[y][static_cast<std::size_t>(x) * 2];
      const auto lo = raw.rows[y][static_cast<std::size_t>(x) * 2 + 1];
      img.at(x, y, 0) = static_cast<double>((hi << 8) | lo) / scale;
    }
  return img;
}

}  // namespace dualfield

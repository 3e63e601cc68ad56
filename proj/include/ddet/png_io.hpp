#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ddet/error.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

namespace detail {

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

// Reads an 8-bit PNG as a (1,3,h,w) tensor scaled to [0,1]. Grayscale,
// palette, and alpha inputs are expanded/stripped to plain RGB.
template <typename T = float>
Tensor<T> png_read(const std::string& path) {
  detail::FileCloser file{std::fopen(path.c_str(), "rb")};
  if (!file.f) throw IoError("cannot open '" + path + "' for reading");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("'" + path + "' is not a readable PNG");
  }

  png_init_io(png, file.f);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<T> out(Shape{1, 3, static_cast<int>(h), static_cast<int>(w)});
  T* d = out.data();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t i = 0; i < plane; ++i) {
    d[i] = static_cast<T>(pixels[i * 3] / 255.0);
    d[plane + i] = static_cast<T>(pixels[i * 3 + 1] / 255.0);
    d[2 * plane + i] = static_cast<T>(pixels[i * 3 + 2] / 255.0);
  }
  return out;
}

// Writes a (1,3,h,w) tensor in [0,1] as an 8-bit RGB PNG; values are clamped
// and rounded to the nearest code.
template <typename T>
void png_write(const std::string& path, const Tensor<T>& img) {
  const Shape s = img.shape();
  if (s.n != 1 || s.c != 3) {
    throw ShapeError("png_write expects a (1,3,h,w) tensor, got " + s.str());
  }
  detail::FileCloser file{std::fopen(path.c_str(), "wb")};
  if (!file.f) throw IoError("cannot open '" + path + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(s.h) * s.w * 3);
  std::vector<png_bytep> rows(s.h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed for '" + path + "'");
  }

  png_init_io(png, file.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);

  const T* d = img.data();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = static_cast<double>(d[c * plane + i]);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      pixels[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  for (int y = 0; y < s.h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * s.w * 3;

  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace ddet

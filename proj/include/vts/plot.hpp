#pragma once

// Static mel-comparison images: panels stacked vertically, time left to
// right, low frequencies at the bottom, shared color scale.

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "vts/common.hpp"
#include "vts/tensor.hpp"

namespace vts::plot {

inline void write_png(const std::string& path, std::size_t width, std::size_t height,
                      const std::vector<unsigned char>& rgb) {
  if (rgb.size() != width * height * 3) throw ShapeError("write_png: buffer size mismatch");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("png encode failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(rgb.data() + y * width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

namespace detail {

inline void heat_color(double v, unsigned char* out) {
  // dark violet -> blue -> teal -> green -> yellow ramp
  static const double anchors[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int lo = std::min(3, static_cast<int>(v));
  const double f = v - lo;
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<unsigned char>(anchors[lo][c] + f * (anchors[lo + 1][c] - anchors[lo][c]));
}

}  // namespace detail

/// Stack log-mel panels (frames x bins each) into one image with a shared
/// value range.
inline void mel_comparison_png(const std::string& path, const std::vector<const Tensor<float>*>& mels) {
  if (mels.empty()) throw ShapeError("mel_comparison_png: no panels");
  const std::size_t width = mels[0]->dim(0);
  const std::size_t bins = mels[0]->dim(1);
  const std::size_t gap = 4;
  float lo = mels[0]->data()[0], hi = lo;
  for (const auto* m : mels) {
    if (m->dim(1) != bins) throw ShapeError("mel_comparison_png: bin counts differ");
    for (std::size_t i = 0; i < m->numel(); ++i) {
      lo = std::min(lo, (*m)[i]);
      hi = std::max(hi, (*m)[i]);
    }
  }
  const double span = std::max(1e-6, static_cast<double>(hi) - lo);

  const std::size_t full_w = 0 == width ? 1 : width;
  const std::size_t height = mels.size() * bins + (mels.size() - 1) * gap;
  std::vector<unsigned char> rgb(full_w * height * 3, 16);
  std::size_t y0 = 0;
  for (const auto* m : mels) {
    const std::size_t frames = m->dim(0);
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t y = y0 + (bins - 1 - b);  // low bins at the panel bottom
      for (std::size_t t = 0; t < full_w; ++t) {
        const double v = t < frames ? (static_cast<double>((*m)(t, b)) - lo) / span : 0.0;
        detail::heat_color(v, rgb.data() + (y * full_w + t) * 3);
      }
    }
    y0 += bins + gap;
  }
  write_png(path, full_w, height, rgb);
}

}  // namespace vts::plot

#pragma once

#include <cmath>
#include <vector>

#include "evsplat/core.hpp"

namespace evsplat {

// Separable gaussian blur with zero padding outside the image and a kernel
// normalized once globally (no per-pixel renormalization at the borders).
// That makes the operator a symmetric matrix, so the same function is its own
// transpose; the tracker relies on this when pulling loss gradients back
// through the blur.
inline ImageF64 gaussian_blur(const ImageF64& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = src.width(), h = src.height();
  ImageF64 tmp(w, h, 0.0), dst(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const int i0 = std::max(-radius, -x), i1 = std::min(radius, w - 1 - x);
      for (int i = i0; i <= i1; ++i) acc += kernel[i + radius] * src(x + i, y);
      tmp(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const int i0 = std::max(-radius, -y), i1 = std::min(radius, h - 1 - y);
      for (int i = i0; i <= i1; ++i) acc += kernel[i + radius] * tmp(x, y + i);
      dst(x, y) = acc;
    }
  }
  return dst;
}

// Block average over factor x factor cells; dimensions must divide evenly.
inline ImageF64 downsample_avg(const ImageF64& src, int factor) {
  if (factor == 1) return src;
  if (factor < 1 || src.width() % factor != 0 || src.height() % factor != 0)
    throw std::invalid_argument("downsample_avg: dimensions not divisible by factor");
  const int w = src.width() / factor, h = src.height() / factor;
  ImageF64 dst(w, h, 0.0);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = 0; j < factor; ++j)
        for (int i = 0; i < factor; ++i) acc += src(x * factor + i, y * factor + j);
      dst(x, y) = acc * inv;
    }
  return dst;
}

// A downsampled mask pixel is set when any source pixel of its block is set.
inline ImageU8 downsample_any(const ImageU8& src, int factor) {
  if (factor == 1) return src;
  if (factor < 1 || src.width() % factor != 0 || src.height() % factor != 0)
    throw std::invalid_argument("downsample_any: dimensions not divisible by factor");
  const int w = src.width() / factor, h = src.height() / factor;
  ImageU8 dst(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int j = 0; j < factor && !v; ++j)
        for (int i = 0; i < factor; ++i)
          if (src(x * factor + i, y * factor + j)) { v = 1; break; }
      dst(x, y) = v;
    }
  return dst;
}

// Chebyshev (square structuring element) dilation, separable max filter.
inline ImageU8 dilate_square(const ImageU8& src, int radius) {
  if (radius <= 0) return src;
  const int w = src.width(), h = src.height();
  ImageU8 tmp(w, h, 0), dst(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      const int i0 = std::max(0, x - radius), i1 = std::min(w - 1, x + radius);
      for (int i = i0; i <= i1 && !v; ++i) v = src(i, y);
      tmp(x, y) = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      const int j0 = std::max(0, y - radius), j1 = std::min(h - 1, y + radius);
      for (int j = j0; j <= j1 && !v; ++j) v = tmp(x, j);
      dst(x, y) = v;
    }
  return dst;
}

inline ImageF64 image_abs(const ImageF64& src) {
  ImageF64 dst = src;
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = std::abs(dst[i]);
  return dst;
}

}  // namespace evsplat

#pragma once

#include <cstdio>
#include <fstream>
#include <png.h>
#include <string>

#include "evsplat/core.hpp"

namespace evsplat {

// [0,1] clamped to full range; intensity images.
inline ImageU8 to_u8_unit(const ImageF64& img) {
  ImageU8 out(img.width(), img.height());
  for (size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<uint8_t>(std::clamp(img[i], 0.0, 1.0) * 255.0 + 0.5);
  return out;
}

// Symmetric mapping for signed difference images: zero at gray 128, the
// largest magnitude at 1 or 255.
inline ImageU8 to_u8_symmetric(const ImageF64& img) {
  double peak = 0.0;
  for (size_t i = 0; i < img.size(); ++i) peak = std::max(peak, std::abs(img[i]));
  ImageU8 out(img.width(), img.height());
  const double scale = peak > 0.0 ? 127.0 / peak : 0.0;
  for (size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<uint8_t>(128.0 + scale * img[i]);
  return out;
}

inline void save_pgm(const ImageU8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

inline void save_png(const ImageU8& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("save_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("save_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y)
    png_write_row(png, const_cast<png_bytep>(img.data() + static_cast<size_t>(y) * img.width()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// Dispatch on the file extension; ".png" uses libpng, anything else PGM.
inline void save_image(const ImageU8& img, const std::string& path) {
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    save_png(img, path);
  else
    save_pgm(img, path);
}

}  // namespace evsplat

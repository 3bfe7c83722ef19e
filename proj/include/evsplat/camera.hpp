#pragma once

#include <stdexcept>

namespace evsplat {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double near_clip = 0.01;

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0 || width <= 0 || height <= 0 || near_clip <= 0.0)
      throw std::invalid_argument("CameraIntrinsics: fx, fy, width, height, near_clip must be positive");
  }

  // Intrinsics of pyramid level l (side length divided by 2^l). A level-l
  // pixel center x_l maps to full-resolution coordinate x_f = s*x_l + (s-1)/2
  // with s = 2^l, which keeps the averaged pixel footprints of both image
  // sides aligned; the principal point shift below is that map inverted.
  CameraIntrinsics scaled(int level) const {
    if (level < 0) throw std::invalid_argument("CameraIntrinsics: negative pyramid level");
    const int s = 1 << level;
    if (width % s != 0 || height % s != 0)
      throw std::invalid_argument("CameraIntrinsics: resolution not divisible by 2^level");
    CameraIntrinsics out = *this;
    out.fx = fx / s;
    out.fy = fy / s;
    out.cx = (cx - (s - 1) * 0.5) / s;
    out.cy = (cy - (s - 1) * 0.5) / s;
    out.width = width / s;
    out.height = height / s;
    return out;
  }
};

}  // namespace evsplat

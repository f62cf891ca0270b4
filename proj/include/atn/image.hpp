#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace atn {

/// Row-major single channel image.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }
  std::span<const float> view() const { return pixels; }
};

/// Physical coordinate (mm) of a pixel centre along one axis, relative to the
/// patch centre. Column index maps to x, row index maps to y.
inline double pixel_centre_mm(int index, int extent, double spacing_mm) {
  return (index + 0.5 - extent / 2.0) * spacing_mm;
}

/// Bilinear sample at fractional (row, col) pixel-centre coordinates; indices
/// are clamped at the border.
float sample_bilinear(const Image& img, double row, double col);

bool all_finite(const Image& img);

/// Separable Gaussian filter, kernel truncated at 3 sigma, edge-clamped.
/// sigma <= 0 returns the input unchanged.
Image gaussian_blur(const Image& img, double sigma_px);

}  // namespace atn

#include "atn/image.hpp"

#include <algorithm>
#include <cmath>

namespace atn {

float sample_bilinear(const Image& img, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(img.height - 1));
  col = std::clamp(col, 0.0, static_cast<double>(img.width - 1));
  const int r0 = std::min(static_cast<int>(row), img.height - 1);
  const int c0 = std::min(static_cast<int>(col), img.width - 1);
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double fr = row - r0;
  const double fc = col - c0;
  const double top = (1.0 - fc) * img.at(r0, c0) + fc * img.at(r0, c1);
  const double bottom = (1.0 - fc) * img.at(r1, c0) + fc * img.at(r1, c1);
  return static_cast<float>((1.0 - fr) * top + fr * bottom);
}

bool all_finite(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(),
                     [](float v) { return std::isfinite(v); });
}

Image gaussian_blur(const Image& img, double sigma_px) {
  if (sigma_px <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma_px * sigma_px));
    total += kernel[k + radius];
  }
  for (double& k : kernel) k /= total;

  Image tmp(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int cc = std::clamp(c + k, 0, img.width - 1);
        acc += kernel[k + radius] * img.at(r, cc);
      }
      tmp.at(r, c) = static_cast<float>(acc);
    }
  }
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = std::clamp(r + k, 0, img.height - 1);
        acc += kernel[k + radius] * tmp.at(rr, c);
      }
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace atn

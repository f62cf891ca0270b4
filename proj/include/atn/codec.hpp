#pragma once

#include <array>
#include <span>

#include "atn/label.hpp"

namespace atn::codec {

inline constexpr int kEncodedSize = 8;

/// (R_A, R_B, W_A, W_B, C_x, C_y, cos 2theta, sin 2theta).
std::array<double, kEncodedSize> encode_label(const AirwayLabel& label);

struct Decoded {
  AirwayLabel label;
  bool clamped = false;  // a negative radius was raised to zero
};

/// Inverse of encode_label. Throws NumericalError when (cos, sin) == (0, 0).
Decoded decode_label(std::span<const double> encoded);

}  // namespace atn::codec

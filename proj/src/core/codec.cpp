#include "atn/codec.hpp"

#include <cmath>

#include "atn/errors.hpp"

namespace atn::codec {

std::array<double, kEncodedSize> encode_label(const AirwayLabel& l) {
  return {l.r_a, l.r_b, l.w_a, l.w_b, l.c_x, l.c_y, std::cos(2.0 * l.theta),
          std::sin(2.0 * l.theta)};
}

Decoded decode_label(std::span<const double> v) {
  if (v.size() != kEncodedSize)
    throw ShapeError("encoded label must have 8 entries, got " + std::to_string(v.size()));
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError("encoded label contains non-finite values");
  if (v[6] == 0.0 && v[7] == 0.0)
    throw NumericalError("double-angle pair (0, 0) leaves the rotation undefined");
  Decoded d;
  double* radii[4] = {&d.label.r_a, &d.label.r_b, &d.label.w_a, &d.label.w_b};
  for (int i = 0; i < 4; ++i) {
    *radii[i] = v[i];
    if (v[i] < 0.0) {
      *radii[i] = 0.0;
      d.clamped = true;
    }
  }
  d.label.c_x = v[4];
  d.label.c_y = v[5];
  d.label.theta = wrap_pi(0.5 * std::atan2(v[7], v[6]));
  return d;
}

}  // namespace atn::codec

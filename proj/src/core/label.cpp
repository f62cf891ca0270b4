#include "atn/label.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "atn/errors.hpp"

namespace atn {

void validate(const AirwayLabel& l) {
  const bool finite = std::isfinite(l.r_a) && std::isfinite(l.r_b) && std::isfinite(l.w_a) &&
                      std::isfinite(l.w_b) && std::isfinite(l.c_x) && std::isfinite(l.c_y) &&
                      std::isfinite(l.theta);
  std::ostringstream why;
  if (!finite) {
    why << "non-finite label parameter";
  } else if (!(l.r_a > 0.0 && l.r_b > 0.0)) {
    why << "lumen radii must be positive (R_A=" << l.r_a << ", R_B=" << l.r_b << ")";
  } else if (!(l.w_a > l.r_a && l.w_b > l.r_b)) {
    why << "outer wall must enclose the lumen (W_A=" << l.w_a << ", R_A=" << l.r_a
        << ", W_B=" << l.w_b << ", R_B=" << l.r_b << ")";
  } else if (l.r_b > l.r_a || l.w_b > l.w_a) {
    why << "minor radius exceeds major radius";
  } else if (l.theta < 0.0 || l.theta >= std::numbers::pi) {
    why << "theta " << l.theta << " outside [0, pi)";
  } else {
    return;
  }
  throw DataError("invalid airway label: " + why.str());
}

double wrap_pi(double angle) {
  double t = std::fmod(angle, std::numbers::pi);
  if (t < 0.0) t += std::numbers::pi;
  if (t >= std::numbers::pi) t = 0.0;
  return t;
}

}  // namespace atn

#pragma once

namespace atn {

/// Airway cross-section ground truth: two ellipses sharing centre and
/// rotation. Lengths in mm, angle in radians on [0, pi).
struct AirwayLabel {
  double r_a = 0.0;  // lumen major radius
  double r_b = 0.0;  // lumen minor radius
  double w_a = 0.0;  // outer wall major radius
  double w_b = 0.0;  // outer wall minor radius
  double c_x = 0.0;  // centre offset from patch centre
  double c_y = 0.0;
  double theta = 0.0;
  bool has_adjacent = false;

  double lumen_radius() const { return 0.5 * (r_a + r_b); }
  double outer_radius() const { return 0.5 * (w_a + w_b); }

  friend bool operator==(const AirwayLabel&, const AirwayLabel&) = default;
};

/// Throws DataError when the ordering or positivity constraints are violated.
void validate(const AirwayLabel& label);

/// Reduce an angle into [0, pi).
double wrap_pi(double angle);

}  // namespace atn

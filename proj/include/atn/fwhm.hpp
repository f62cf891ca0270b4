#pragma once

#include <optional>
#include <span>
#include <vector>

#include "atn/image.hpp"
#include "atn/label.hpp"

namespace atn::fwhm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct EllipseFit {
  Point2 center;
  double major = 0.0;  // semi-axis lengths, major >= minor
  double minor = 0.0;
  double theta = 0.0;  // major axis direction, [0, pi)
};

/// Direct least-squares conic fit constrained to ellipses (numerically
/// stable Fitzgibbon variant). Needs >= 5 non-collinear points.
EllipseFit fit_ellipse(std::span<const Point2> points);

struct FwhmConfig {
  int n_rays = 64;
  double ray_step_px = 0.25;
  double max_ray_fraction = 0.45;  // of the patch extent
  double min_prominence_hu = 50.0;
  double max_wall_extent_mm = 4.0;
  double min_valid_fraction = 0.5;
  double seed_search_radius_mm = 2.5;
  double seed_smoothing_px = 1.0;
  int recenter_passes = 1;

  void validate() const;
};

/// Intensity samples along one ray, beginning at the ray origin.
struct RayProfile {
  double angle = 0.0;
  double step_mm = 0.0;
  std::vector<double> samples;
};

struct RayEdges {
  double inner_mm = 0.0;
  double outer_mm = 0.0;
};

/// Half-maximum crossings around the first wall peak; nullopt when no peak
/// with the configured prominence is found.
std::optional<RayEdges> analyze_ray(const RayProfile& profile, const FwhmConfig& config);

struct FwhmResult {
  AirwayLabel label;
  double valid_ray_fraction = 0.0;
  EllipseFit inner;
  EllipseFit outer;
};

/// Full-width-at-half-maximum lumen and wall measurement of an HU patch.
/// Throws MeasurementError when too few rays yield a wall peak and FitError
/// when the ellipse fit degenerates.
FwhmResult measure_fwhm(const Image& patch, double spacing_mm, const FwhmConfig& config);

}  // namespace atn::fwhm

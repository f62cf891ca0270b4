#include "atn/fwhm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "atn/errors.hpp"
#include "atn/synthgen.hpp"

namespace atn::fwhm {

namespace {

// Box smoothing over `half` samples either side; removes sub-pixel noise
// without moving symmetric edges.
std::vector<double> smooth(const std::vector<double>& s, int half) {
  if (half <= 0) return s;
  std::vector<double> out(s.size());
  const int n = static_cast<int>(s.size());
  for (int k = 0; k < n; ++k) {
    const int lo = std::max(0, k - half);
    const int hi = std::min(n - 1, k + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += s[j];
    out[k] = acc / (hi - lo + 1);
  }
  return out;
}

double crossing(const std::vector<double>& s, int k, double level) {
  // Linear interpolation of the level crossing between samples k-1 and k.
  const double a = s[k - 1];
  const double b = s[k];
  if (a == b) return k;
  return (k - 1) + (level - a) / (b - a);
}

struct Origin {
  double row = 0.0;  // fractional pixel-centre coordinates
  double col = 0.0;
};

Origin darkest_near_center(const Image& patch, double spacing_mm, double smoothing_px,
                           const FwhmConfig& config) {
  const Image smoothed = gaussian_blur(patch, smoothing_px);
  const double cr = (patch.height - 1) / 2.0;
  const double cc = (patch.width - 1) / 2.0;
  const double radius_px = config.seed_search_radius_mm / spacing_mm;
  Origin best{cr, cc};
  double best_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < patch.height; ++r) {
    for (int c = 0; c < patch.width; ++c) {
      const double dr = r - cr;
      const double dc = c - cc;
      if (dr * dr + dc * dc > radius_px * radius_px) continue;
      if (smoothed.at(r, c) < best_value) {
        best_value = smoothed.at(r, c);
        best = {static_cast<double>(r), static_cast<double>(c)};
      }
    }
  }
  return best;
}

RayProfile cast_ray(const Image& patch, const Origin& o, double angle, double spacing_mm,
                    const FwhmConfig& config) {
  RayProfile ray;
  ray.angle = angle;
  ray.step_mm = config.ray_step_px * spacing_mm;
  const double max_len = config.max_ray_fraction * std::min(patch.height, patch.width);
  const double dc = std::cos(angle);
  const double dr = std::sin(angle);
  for (double t = 0.0; t <= max_len; t += config.ray_step_px) {
    const double r = o.row + t * dr;
    const double c = o.col + t * dc;
    if (r < 0.0 || c < 0.0 || r > patch.height - 1 || c > patch.width - 1) break;
    ray.samples.push_back(sample_bilinear(patch, r, c));
  }
  return ray;
}

struct Pass {
  std::vector<Point2> inner, outer;
  int n_rays = 0;
};

Pass run_rays(const Image& patch, const Origin& o, double spacing_mm, const FwhmConfig& config) {
  Pass pass;
  pass.n_rays = config.n_rays;
  const double ox = pixel_centre_mm(0, patch.width, spacing_mm) + o.col * spacing_mm;
  const double oy = pixel_centre_mm(0, patch.height, spacing_mm) + o.row * spacing_mm;
  for (int i = 0; i < config.n_rays; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / config.n_rays;
    const auto edges = analyze_ray(cast_ray(patch, o, angle, spacing_mm, config), config);
    if (!edges) continue;
    pass.inner.push_back({ox + edges->inner_mm * std::cos(angle),
                          oy + edges->inner_mm * std::sin(angle)});
    pass.outer.push_back({ox + edges->outer_mm * std::cos(angle),
                          oy + edges->outer_mm * std::sin(angle)});
  }
  return pass;
}

bool contains(const EllipseFit& e, const Point2& p) {
  return synth::inside_ellipse(p.x, p.y, e.center.x, e.center.y, e.major, e.minor, e.theta);
}

}  // namespace

void FwhmConfig::validate() const {
  if (n_rays < 8) throw ConfigError("FWHM needs at least 8 rays");
  if (!(ray_step_px > 0.0)) throw ConfigError("ray_step_px must be positive");
  if (!(max_ray_fraction > 0.0 && max_ray_fraction <= 0.5))
    throw ConfigError("max_ray_fraction must lie in (0, 0.5]");
  if (!(min_prominence_hu > 0.0)) throw ConfigError("min_prominence_hu must be positive");
  if (!(max_wall_extent_mm > 0.0)) throw ConfigError("max_wall_extent_mm must be positive");
  if (!(min_valid_fraction > 0.0 && min_valid_fraction <= 1.0))
    throw ConfigError("min_valid_fraction must lie in (0, 1]");
  if (recenter_passes < 0) throw ConfigError("recenter_passes must be >= 0");
}

std::optional<RayEdges> analyze_ray(const RayProfile& profile, const FwhmConfig& config) {
  const int half = std::max(0, static_cast<int>(std::lround(0.5 / config.ray_step_px)));
  const std::vector<double> s = smooth(profile.samples, half);
  const int n = static_cast<int>(s.size());
  if (n < 3) return std::nullopt;
  const double prom = config.min_prominence_hu;
  const int limit = static_cast<int>(std::ceil(config.max_wall_extent_mm / profile.step_mm));

  // Edge cue: first rise of `prom` above the lumen floor seen so far.
  double floor = s[0];
  int cue = -1;
  for (int k = 0; k < n; ++k) {
    floor = std::min(floor, s[k]);
    if (s[k] - floor >= prom) {
      cue = k;
      break;
    }
  }
  if (cue < 1) return std::nullopt;

  // First wall peak: the running maximum that is followed by a drop of `prom`,
  // searched no further than the expected wall extent beyond the cue.
  int peak = cue;
  bool dropped = false;
  const int search_end = std::min(n - 1, cue + limit);
  for (int k = cue; k <= search_end; ++k) {
    if (s[k] > s[peak]) {
      peak = k;
    } else if (s[peak] - s[k] >= prom) {
      dropped = true;
      break;
    }
  }
  if (!dropped) return std::nullopt;
  const double peak_value = s[peak];

  const double half_in = 0.5 * (floor + peak_value);
  int k_in = -1;
  for (int k = 1; k <= peak; ++k) {
    if (s[k] >= half_in) {
      k_in = k;
      break;
    }
  }
  if (k_in < 1) return std::nullopt;

  const int outer_end = std::min(n - 1, peak + limit);
  double outer_floor = peak_value;
  for (int k = peak; k <= outer_end; ++k) outer_floor = std::min(outer_floor, s[k]);
  if (peak_value - outer_floor < prom) return std::nullopt;
  const double half_out = 0.5 * (outer_floor + peak_value);
  int k_out = -1;
  for (int k = peak + 1; k <= outer_end; ++k) {
    if (s[k] <= half_out) {
      k_out = k;
      break;
    }
  }
  if (k_out < 0) return std::nullopt;

  RayEdges edges;
  edges.inner_mm = crossing(s, k_in, half_in) * profile.step_mm;
  edges.outer_mm = crossing(s, k_out, half_out) * profile.step_mm;
  return edges;
}

FwhmResult measure_fwhm(const Image& patch, double spacing_mm, const FwhmConfig& config) {
  config.validate();
  if (!(spacing_mm > 0.0)) throw ConfigError("pixel spacing must be positive");
  if (!all_finite(patch)) throw DataError("FWHM input patch has non-finite values");

  // Smoothing can wash out lumens only a few pixels wide, so the unsmoothed
  // minimum and the patch centre are tried as well; the origin that yields
  // the most wall peaks wins.
  const Origin candidates[] = {
      darkest_near_center(patch, spacing_mm, config.seed_smoothing_px, config),
      darkest_near_center(patch, spacing_mm, 0.0, config),
      {(patch.height - 1) / 2.0, (patch.width - 1) / 2.0}};
  Origin origin = candidates[0];
  Pass pass;
  pass.n_rays = config.n_rays;
  std::size_t best = 0;
  for (const Origin& c : candidates) {
    Pass trial = run_rays(patch, c, spacing_mm, config);
    if (trial.inner.size() > best) {
      best = trial.inner.size();
      origin = c;
      pass = std::move(trial);
    }
  }
  EllipseFit inner;
  for (int round = 0; round <= config.recenter_passes; ++round) {
    if (round > 0) pass = run_rays(patch, origin, spacing_mm, config);
    const double fraction = static_cast<double>(pass.inner.size()) / pass.n_rays;
    if (fraction < config.min_valid_fraction || pass.inner.size() < 5) {
      throw MeasurementError("only " + std::to_string(pass.inner.size()) + " of " +
                             std::to_string(pass.n_rays) + " rays found a wall peak");
    }
    inner = fit_ellipse(pass.inner);
    // Re-cast from the fitted lumen centre.
    const double row = (inner.center.y - pixel_centre_mm(0, patch.height, spacing_mm)) / spacing_mm;
    const double col = (inner.center.x - pixel_centre_mm(0, patch.width, spacing_mm)) / spacing_mm;
    if (row < 0.0 || col < 0.0 || row > patch.height - 1 || col > patch.width - 1) break;
    if (round < config.recenter_passes) origin = {row, col};
  }
  const EllipseFit outer = fit_ellipse(pass.outer);

  for (int i = 0; i < 64; ++i) {
    const double t = 2.0 * std::numbers::pi * i / 64;
    const double u = inner.major * std::cos(t);
    const double v = inner.minor * std::sin(t);
    const Point2 p{inner.center.x + u * std::cos(inner.theta) - v * std::sin(inner.theta),
                   inner.center.y + u * std::sin(inner.theta) + v * std::cos(inner.theta)};
    if (!contains(outer, p)) throw MeasurementError("fitted lumen is not inside the outer wall");
  }

  FwhmResult result;
  result.inner = inner;
  result.outer = outer;
  result.valid_ray_fraction = static_cast<double>(pass.inner.size()) / pass.n_rays;
  result.label.r_a = inner.major;
  result.label.r_b = inner.minor;
  result.label.w_a = outer.major;
  result.label.w_b = outer.minor;
  result.label.c_x = inner.center.x;
  result.label.c_y = inner.center.y;
  result.label.theta = inner.theta;
  result.label.has_adjacent = false;
  if (!(result.label.w_a > result.label.r_a && result.label.w_b > result.label.r_b))
    throw MeasurementError("outer wall radii do not exceed lumen radii");
  return result;
}

}  // namespace atn::fwhm

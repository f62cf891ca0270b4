#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/synthgen.hpp"
#include "doctest.h"

using namespace atn;
using namespace atn::fwhm;

namespace {

std::vector<Point2> ellipse_points(double cx, double cy, double a, double b, double t, int n) {
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) {
    const double s = 2.0 * std::numbers::pi * i / n;
    const double u = a * std::cos(s), v = b * std::sin(s);
    pts.push_back({cx + u * std::cos(t) - v * std::sin(t), cy + u * std::sin(t) + v * std::cos(t)});
  }
  return pts;
}

double angle_diff_pi(double a, double b) {
  const double d = std::fmod(std::abs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

Image clean_render(const AirwayLabel& l) {
  synth::SynthConfig cfg;
  cfg.adjacent_prob = 0.0;
  return gaussian_blur(synth::render_patch(l, cfg, 0).image, 0.5);
}

AirwayLabel airway(double lr, double ratio = 1.0, double theta = 0.0) {
  AirwayLabel l;
  l.r_a = 2.0 * lr / (1.0 + ratio);
  l.r_b = ratio * l.r_a;
  const double wall = 0.2 * lr + 0.5;
  l.w_a = l.r_a + wall;
  l.w_b = l.r_b + wall;
  l.theta = theta;
  return l;
}

// Pixel grid rotation that maps the physical point (x, y) to (-y, x).
Image rotate90(const Image& img) {
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(img.width - 1 - c, r);
  return out;
}

}  // namespace

TEST_CASE("exact points give the exact ellipse") {
  const auto pts = ellipse_points(0.5, -0.2, 3.0, 2.0, 0.4, 8);
  const EllipseFit f = fit_ellipse(pts);
  CHECK(std::abs(f.center.x - 0.5) < 1e-6);
  CHECK(std::abs(f.center.y + 0.2) < 1e-6);
  CHECK(std::abs(f.major - 3.0) < 1e-6);
  CHECK(std::abs(f.minor - 2.0) < 1e-6);
  CHECK(std::abs(f.theta - 0.4) < 1e-6);
}

TEST_CASE("degenerate point sets are fit errors") {
  std::vector<Point2> line;
  for (int i = 0; i < 10; ++i) line.push_back({0.3 * i, 1.0 + 0.6 * i});
  CHECK_THROWS_AS(fit_ellipse(line), FitError);
  const auto four = ellipse_points(0, 0, 2, 1, 0, 4);
  CHECK_THROWS_AS(fit_ellipse(four), FitError);
}

TEST_CASE("noisy points: median radius error within 0.05 mm") {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> ea, eb;
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = ellipse_points(0.5, -0.2, 3.0, 2.0, 0.4, 32);
    for (auto& p : pts) {
      p.x += noise(gen);
      p.y += noise(gen);
    }
    const EllipseFit f = fit_ellipse(pts);
    ea.push_back(std::abs(f.major - 3.0));
    eb.push_back(std::abs(f.minor - 2.0));
  }
  std::nth_element(ea.begin(), ea.begin() + 50, ea.end());
  std::nth_element(eb.begin(), eb.begin() + 50, eb.end());
  CHECK(ea[50] < 0.05);
  CHECK(eb[50] < 0.05);
}

TEST_CASE("clean 4 mm airway") {
  const AirwayLabel l = airway(4.0);
  const FwhmResult r = measure_fwhm(clean_render(l), 0.5, FwhmConfig{});
  CHECK(std::abs(r.label.lumen_radius() - 4.0) <= 0.25);
  CHECK(r.valid_ray_fraction >= 0.5);
}

TEST_CASE("ellipsoidness 0.9 is recovered") {
  const AirwayLabel l = airway(3.0, 0.9, 0.6);
  const FwhmResult r = measure_fwhm(clean_render(l), 0.5, FwhmConfig{});
  const double ratio = r.label.r_b / r.label.r_a;
  CHECK(std::abs(ratio - 0.9) / 0.9 <= 0.05);
}

TEST_CASE("uniform patch has no wall") {
  CHECK_THROWS_AS(measure_fwhm(Image(80, 80, -800.0f), 0.5, FwhmConfig{}), MeasurementError);
}

TEST_CASE("too few rays is a configuration error") {
  FwhmConfig cfg;
  cfg.n_rays = 4;
  CHECK_THROWS_AS(measure_fwhm(clean_render(airway(2.0)), 0.5, cfg), ConfigError);
}

TEST_CASE("rotating the patch rotates the angle") {
  const AirwayLabel l = airway(3.0, 0.7, 0.5);
  const Image img = clean_render(l);
  const FwhmResult a = measure_fwhm(img, 0.5, FwhmConfig{});
  const FwhmResult b = measure_fwhm(rotate90(img), 0.5, FwhmConfig{});
  CHECK(angle_diff_pi(a.label.theta, 0.5) < 0.05);
  CHECK(angle_diff_pi(b.label.theta, a.label.theta + std::numbers::pi / 2) < 0.05);
}

TEST_CASE("measured radius increases with the true radius") {
  double last = 0.0;
  for (double lr : {1.0, 2.0, 4.0, 6.0}) {
    const FwhmResult r = measure_fwhm(clean_render(airway(lr)), 0.5, FwhmConfig{});
    CHECK(r.label.lumen_radius() > last);
    last = r.label.lumen_radius();
  }
}

TEST_CASE("inner ellipse lies inside the outer ellipse") {
  for (double lr : {1.0, 2.5, 5.0}) {
    const FwhmResult r = measure_fwhm(clean_render(airway(lr, 0.8, 1.0)), 0.5, FwhmConfig{});
    const auto pts = ellipse_points(r.inner.center.x, r.inner.center.y, r.inner.major,
                                    r.inner.minor, r.inner.theta, 90);
    for (const auto& p : pts) {
      CHECK(synth::inside_ellipse(p.x, p.y, r.outer.center.x, r.outer.center.y, r.outer.major,
                                  r.outer.minor, r.outer.theta));
    }
    CHECK(r.label.w_a > r.label.r_a);
    CHECK(r.label.w_b > r.label.r_b);
  }
}

TEST_CASE("ray analysis on a synthetic profile") {
  // Lumen at 0 HU units, wall peak 100 at 2 mm, back to 20 at 4 mm.
  RayProfile p;
  p.step_mm = 0.125;
  for (int k = 0; k <= 48; ++k) {
    const double t = k * p.step_mm;
    double v = 0.0;
    if (t >= 2.0 && t < 3.0) v = 100.0;
    if (t >= 3.0) v = 20.0;
    p.samples.push_back(v);
  }
  FwhmConfig cfg;
  cfg.ray_step_px = 0.25;
  const auto e = analyze_ray(p, cfg);
  REQUIRE(e.has_value());
  CHECK(e->inner_mm == doctest::Approx(2.0).epsilon(0.05));
  CHECK(e->outer_mm == doctest::Approx(3.0).epsilon(0.05));

  RayProfile flat;
  flat.step_mm = 0.125;
  flat.samples.assign(40, -800.0);
  CHECK_FALSE(analyze_ray(flat, cfg).has_value());
}

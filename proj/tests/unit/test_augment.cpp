#include <cmath>
#include <numbers>

#include "atn/augment.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"
#include "doctest.h"

using namespace atn;
using namespace atn::augment;

namespace {

synth::Patch sample_patch(std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.adjacent_prob = 0.0;
  cfg.lumen_radius_mm = {1.0, 4.0};
  const AirwayLabel l = synth::sample_label(cfg, seed);
  return synth::render_patch(l, cfg, seed);
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(static_cast<double>(a.pixels[k]) - b.pixels[k]));
  return m;
}

double angle_diff_pi(double a, double b) {
  const double d = std::fmod(std::abs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

}  // namespace

TEST_CASE("standardize gives zero mean and unit variance") {
  const Image img = sample_patch(1).image;
  const Image s = standardize(img);
  double sum = 0.0, sum2 = 0.0;
  for (float v : s.pixels) {
    sum += v;
    sum2 += static_cast<double>(v) * v;
  }
  const double mean = sum / s.size();
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(std::sqrt(sum2 / s.size() - mean * mean) - 1.0) < 1e-6);
}

TEST_CASE("standardize is affine invariant") {
  const Image img = sample_patch(2).image;
  Image shifted = img;
  for (float& v : shifted.pixels) v = 3.0f * v + 250.0f;
  CHECK(max_abs_diff(standardize(img), standardize(shifted)) < 1e-5);
}

TEST_CASE("constant patch cannot be standardized") {
  CHECK_THROWS_AS(standardize(Image(32, 32, 0.0f)), DataError);
}

TEST_CASE("horizontal flip reflects the label") {
  AirwayLabel l{2.0, 1.5, 3.0, 2.5, 0.7, -0.4, 0.3, false};
  const AirwayLabel f = flip_label_horizontal(l);
  CHECK(f.c_x == doctest::Approx(-0.7));
  CHECK(f.c_y == doctest::Approx(-0.4));
  CHECK(angle_diff_pi(f.theta, std::numbers::pi - 0.3) < 1e-12);
  const AirwayLabel g = flip_label_vertical(l);
  CHECK(g.c_y == doctest::Approx(0.4));
  CHECK(angle_diff_pi(g.theta, std::numbers::pi - 0.3) < 1e-12);
}

TEST_CASE("label flips commute with pixel flips") {
  synth::SynthConfig cfg;
  cfg.adjacent_prob = 0.0;
  cfg.lumen_radius_mm = {1.0, 4.0};
  for (std::uint64_t i = 0; i < 10; ++i) {
    const AirwayLabel l = synth::sample_label(cfg, derive_seed(7, i));
    const Image base = synth::render_patch(l, cfg, 0).image;
    const Image h = synth::render_patch(flip_label_horizontal(l), cfg, 0).image;
    const Image v = synth::render_patch(flip_label_vertical(l), cfg, 0).image;
    CHECK(max_abs_diff(flip_horizontal(base), h) <= 1.0);
    CHECK(max_abs_diff(flip_vertical(base), v) <= 1.0);
  }
}

TEST_CASE("synthetic patches are never rescaled") {
  const synth::Patch p = sample_patch(3);
  AugmentConfig cfg;
  cfg.flip_prob = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    AugmentTrace t;
    const synth::Patch out = augment::augment(p, cfg, false, s, &t);
    CHECK(t.scale == 1.0);
    CHECK(out.label->r_a == p.label->r_a);
    CHECK(out.label->w_b == p.label->w_b);
  }
  AugmentTrace t;
  const synth::Patch real = augment::augment(p, cfg, true, 5, &t);
  CHECK(t.scale >= 0.75);
  CHECK(t.scale <= 1.25);
  CHECK(real.label->r_a == doctest::Approx(p.label->r_a * t.scale));
}

TEST_CASE("augment output is a finite 32x32 crop and seed-determined") {
  const synth::Patch p = sample_patch(4);
  AugmentConfig cfg;
  const synth::Patch a = augment::augment(p, cfg, true, 9);
  const synth::Patch b = augment::augment(p, cfg, true, 9);
  CHECK(a.image.height == 32);
  CHECK(a.image.width == 32);
  CHECK(all_finite(a.image));
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(*a.label == *b.label);
}

TEST_CASE("flip frequency matches the configured probability") {
  const synth::Patch p = sample_patch(5);
  AugmentConfig cfg;
  int flips = 0;
  const int n = 10000;
  // Only the random draws matter; use a tiny patch to keep this fast.
  synth::Patch small = p;
  small.image = center_crop(p.image, 8);
  cfg.crop_size_px = 8;
  for (int s = 0; s < n; ++s) {
    AugmentTrace t;
    augment::augment(small, cfg, false, derive_seed(6, s), &t);
    flips += t.flip_h;
  }
  CHECK(std::abs(flips / static_cast<double>(n) - 0.2) <= 0.02);
}

TEST_CASE("crop larger than the patch is rejected") {
  Image img(16, 16, 1.0f);
  CHECK_THROWS_AS(center_crop(img, 32), ConfigError);
  synth::Patch p{img, 0.5, std::nullopt};
  p.image.at(0, 0) = 2.0f;
  CHECK_THROWS_AS(augment::augment(p, AugmentConfig{}, false, 0), ConfigError);
}

TEST_CASE("scaling magnifies about the centre") {
  Image img(9, 9, 0.0f);
  img.at(4, 6) = 1.0f;
  const Image s = scale_about_center(img, 2.0);
  // A point 2 px right of centre lands 4 px right of centre.
  CHECK(s.at(4, 8) == doctest::Approx(1.0));
  CHECK(s.at(4, 4) == doctest::Approx(0.0));
}

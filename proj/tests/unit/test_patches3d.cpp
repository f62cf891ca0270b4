#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/patches3d.hpp"
#include "atn/phantom.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace atn;
using namespace atn::patches3d;

namespace {

CenterlineSegment straight(double length, const Vec3& start = {0, 0, 0}, const Vec3& dir = {0, 0, 1},
                           int id = 1, int generation = 2) {
  CenterlineSegment s;
  s.segment_id = id;
  s.generation = generation;
  const int n = static_cast<int>(std::ceil(length / 0.5));
  for (int i = 0; i <= n; ++i) {
    const double t = length * i / n;
    s.points.push_back({start[0] + dir[0] * t, start[1] + dir[1] * t, start[2] + dir[2] * t});
    s.tangents.push_back(dir);
  }
  return s;
}

// Tube along z through (cx, cy): lumen radius 3, wall to radius 4.
double tube_hu(double x, double y, double cx, double cy) {
  const double r = std::hypot(x - cx, y - cy);
  return r <= 3.0 ? -1000.0 : r <= 4.0 ? 0.0 : -800.0;
}

Volume3D class_volume(double cx, double cy) {
  Volume3D v;
  v.nx = v.ny = 80;
  v.nz = 8;
  v.spacing = {0.5, 0.5, 0.5};
  v.data.resize(80 * 80 * 8);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x) v.at(x, y, z) = static_cast<float>(tube_hu(0.5 * x, 0.5 * y, cx, cy));
  return v;
}

double angle_diff_pi(double a, double b) {
  const double d = std::fmod(std::abs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("atn_test_p3d_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("plane basis is orthonormal and deterministic") {
  for (const Vec3& t : {Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0.6, 0.0, 0.8}, Vec3{0.48, 0.6, 0.64}}) {
    const PlaneBasis b = plane_basis(t);
    auto dot = [](const Vec3& a, const Vec3& c) { return a[0] * c[0] + a[1] * c[1] + a[2] * c[2]; };
    CHECK(std::abs(dot(b.u, b.u) - 1.0) < 1e-12);
    CHECK(std::abs(dot(b.v, b.v) - 1.0) < 1e-12);
    CHECK(std::abs(dot(b.u, b.v)) < 1e-12);
    CHECK(std::abs(dot(b.u, t)) < 1e-12);
    CHECK(std::abs(dot(b.v, t)) < 1e-12);
  }
  // Tangent along z: x and y tie, x wins; u = z cross x = y.
  const PlaneBasis b = plane_basis({0, 0, 1});
  CHECK(b.u[1] == doctest::Approx(1.0));
  CHECK(b.v[0] == doctest::Approx(-1.0));
}

TEST_CASE("patch on voxel centres reproduces voxel values exactly") {
  const double cx = 20.25, cy = 19.75;
  const Volume3D vol = class_volume(cx, cy);
  // Pixel centres sit at +-0.25 + k*0.5 from the point, which lands on voxel centres.
  const Vec3 p{20.25, 19.75, 1.5};
  const Image img = extract_patch(vol, p, {0, 0, 1}, 40, 0.5);
  const PlaneBasis b = plane_basis({0, 0, 1});
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c) {
      const double px = (c + 0.5 - 20) * 0.5, py = (r + 0.5 - 20) * 0.5;
      const double wx = p[0] + b.u[0] * px + b.v[0] * py;
      const double wy = p[1] + b.u[1] * px + b.v[1] * py;
      REQUIRE(img.at(r, c) == static_cast<float>(tube_hu(wx, wy, cx, cy)));
    }
}

TEST_CASE("rendered tube matches the analytic cross-section away from edges") {
  phantom::Tube tube;
  tube.start = {20.1, 19.8, -2.0};
  tube.end = {20.1, 19.8, 12.0};
  tube.lumen_start_mm = tube.lumen_end_mm = 3.0;
  tube.wall_start_mm = tube.wall_end_mm = 1.0;
  phantom::Grid grid{80, 80, 20, 0.5, {0, 0, 0}};
  const Volume3D vol = phantom::render_tubes({tube}, grid);
  const Vec3 p{20.1, 19.8, 4.3};
  const Image img = extract_patch(vol, p, {0, 0, 1});
  const PlaneBasis b = plane_basis({0, 0, 1});
  int checked = 0;
  double worst = 0.0;
  for (int r = 0; r < 80; ++r)
    for (int c = 0; c < 80; ++c) {
      const double px = (c + 0.5 - 40) * 0.5, py = (r + 0.5 - 40) * 0.5;
      const double wx = p[0] + b.u[0] * px + b.v[0] * py;
      const double wy = p[1] + b.u[1] * px + b.v[1] * py;
      if (wx < 0.0 || wy < 0.0 || wx > 39.5 || wy > 39.5) continue;
      const double rr = std::hypot(wx - 20.1, wy - 19.8);
      if (std::abs(rr - 3.0) < 1.0 || std::abs(rr - 4.0) < 1.0) continue;
      worst = std::max(worst, std::abs(img.at(r, c) - tube_hu(wx, wy, 20.1, 19.8)));
      ++checked;
    }
  CHECK(checked > 1000);
  CHECK(worst < 10.0);
}

TEST_CASE("samples outside the volume take the fill value") {
  const Volume3D vol = class_volume(35.0, 35.0);
  const Image img = extract_patch(vol, {0.0, 0.0, 0.0}, {0, 0, 1});
  // Tangent z: patch x -> world +y, patch y -> world -x. Rows below the
  // centre reach negative x and columns left of centre negative y.
  CHECK(img.at(79, 0) == static_cast<float>(kOutsideHu));
  CHECK(img.at(79, 79) == static_cast<float>(kOutsideHu));
  CHECK(img.at(0, 0) == static_cast<float>(kOutsideHu));
  CHECK(img.at(0, 79) == -800.0f);
}

TEST_CASE("extraction point outside the volume is an error") {
  const Volume3D vol = class_volume(20.0, 20.0);
  CHECK_THROWS_AS(extract_patch(vol, {-1.0, 5.0, 1.0}, {0, 0, 1}), DataError);
  CHECK_THROWS_AS(extract_patch(vol, {5.0, 5.0, 1.0}, {0, 0, 2}), DataError);
}

TEST_CASE("10 mm segment gives 17 positions at 0.5 mm") {
  const auto pos = sample_positions(straight(10.0), SeriesConfig{});
  REQUIRE(pos.size() == 17);
  CHECK(pos.front().arclength == doctest::Approx(1.0));
  CHECK(pos.back().arclength == doctest::Approx(9.0));
  for (std::size_t i = 1; i < pos.size(); ++i)
    CHECK(pos[i].arclength - pos[i - 1].arclength == doctest::Approx(0.5));
  CHECK(pos[4].point[2] == doctest::Approx(3.0));
}

TEST_CASE("short segment is excluded") {
  const CenterlineSegment s = straight(1.5);
  const SeriesOutcome o = build_segment_series(
      s, [](const SamplePoint&) { return std::optional<AirwayLabel>(); }, "fwhm", SeriesConfig{});
  CHECK_FALSE(o.series.has_value());
  CHECK(o.exclusion_reason == "too short after pruning");
  CHECK(sample_positions(straight(2.0), SeriesConfig{}).empty());
}

TEST_CASE("failed measurements are interpolated up to the limit") {
  const CenterlineSegment s = straight(10.0);
  const auto pos = sample_positions(s, SeriesConfig{});
  std::vector<std::optional<AirwayLabel>> m(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double r = 2.0 - 0.05 * i;
    m[i] = AirwayLabel{r, r, r + 1, r + 1, 0, 0, 0, false};
  }
  m[3].reset();
  m[4].reset();
  const SeriesOutcome ok = assemble_series(s, pos, m, "cnr", SeriesConfig{});
  REQUIRE(ok.series.has_value());
  CHECK(ok.series->n_missing == 2);
  // Diameter is linear in the index, so interpolation restores it exactly.
  CHECK(ok.series->diameter_mm[3] == doctest::Approx(2.0 * (2.0 - 0.15)));
  CHECK(ok.series->diameter_mm[4] == doctest::Approx(2.0 * (2.0 - 0.20)));

  for (std::size_t i = 5; i < 11; ++i) m[i].reset();  // 8 of 17 missing
  const SeriesOutcome bad = assemble_series(s, pos, m, "cnr", SeriesConfig{});
  CHECK_FALSE(bad.series.has_value());
  CHECK(bad.exclusion_reason.find("too many failed") != std::string::npos);
}

TEST_CASE("diameter and area from the inner ellipse") {
  const AirwayLabel l{3.0, 2.0, 4.0, 3.0, 0, 0, 0, false};
  CHECK(lumen_diameter(l, DiameterMode::EquivalentArea) == doctest::Approx(2.0 * std::sqrt(6.0)));
  CHECK(lumen_diameter(l, DiameterMode::MeanOfAxes) == doctest::Approx(5.0));
  const CenterlineSegment s = straight(4.0);
  const auto pos = sample_positions(s, SeriesConfig{});
  std::vector<std::optional<AirwayLabel>> m(pos.size(), l);
  const SeriesOutcome o = assemble_series(s, pos, m, "fwhm", SeriesConfig{});
  REQUIRE(o.series.has_value());
  CHECK(o.series->area_mm2[0] == doctest::Approx(std::numbers::pi * 6.0));
}

TEST_CASE("trachea and first generation are not biomarker input") {
  CHECK_FALSE(eligible_for_biomarkers(0));
  CHECK_FALSE(eligible_for_biomarkers(1));
  CHECK(eligible_for_biomarkers(2));
  CHECK(eligible_for_biomarkers(5));
}

TEST_CASE("constant tube gives a constant FWHM diameter series") {
  phantom::Tube tube;
  tube.start = {20.0, 20.0, 0.0};
  tube.end = {20.0, 20.0, 14.0};
  tube.lumen_start_mm = tube.lumen_end_mm = 2.5;
  tube.wall_start_mm = tube.wall_end_mm = 1.0;
  phantom::Grid grid{80, 80, 29, 0.5, {0, 0, 0}};
  const Volume3D vol = phantom::render_tubes({tube}, grid);
  const CenterlineSegment s = straight(8.0, {20.0, 20.0, 3.0});
  const SeriesOutcome o = build_segment_series(
      s,
      [&](const SamplePoint& p) -> std::optional<AirwayLabel> {
        return fwhm::measure_fwhm(extract_patch(vol, p.point, p.tangent), 0.5, fwhm::FwhmConfig{})
            .label;
      },
      "fwhm", SeriesConfig{});
  REQUIRE(o.series.has_value());
  const auto& d = o.series->diameter_mm;
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  CHECK(*hi - *lo < 0.05);
  CHECK(std::abs(d[0] - 5.0) < 0.5);
}

TEST_CASE("rotating the in-plane basis rotates the measured angle") {
  phantom::Tube tube;
  tube.start = {20.0, 20.0, 0.0};
  tube.end = {20.0, 20.0, 6.0};
  tube.lumen_start_mm = tube.lumen_end_mm = 3.0;
  tube.wall_start_mm = tube.wall_end_mm = 1.0;
  tube.ratio = 0.7;
  tube.theta = 0.4;
  phantom::Grid grid{80, 80, 13, 0.5, {0, 0, 0}};
  const Volume3D vol = phantom::render_tubes({tube}, grid);
  const Vec3 p{20.0, 20.0, 3.0};
  const double base =
      fwhm::measure_fwhm(extract_patch(vol, p, {0, 0, 1}), 0.5, fwhm::FwhmConfig{}).label.theta;
  CHECK(angle_diff_pi(base, 0.4) < 0.05);
  for (double alpha : {0.3, 1.2, 2.5}) {
    const double t = fwhm::measure_fwhm(extract_patch(vol, p, {0, 0, 1}, 80, 0.5, alpha), 0.5,
                                        fwhm::FwhmConfig{})
                         .label.theta;
    // Turning the basis by alpha turns the content by -alpha in patch coordinates.
    CHECK(angle_diff_pi(t, base - alpha) < 0.05);
  }
}

TEST_CASE("centreline validation") {
  CenterlineSegment s = straight(4.0);
  s.tangents[2] = {0, 0, 1.01};
  CHECK_THROWS_AS(validate(s), DataError);
  s = straight(4.0);
  s.points[3][2] += 1.5;
  CHECK_THROWS_AS(validate(s), DataError);
}

TEST_CASE("file formats round trip") {
  const fs::path dir = scratch("io");
  std::vector<CenterlineSegment> segs{straight(3.0, {0, 0, 0}, {0, 0, 1}, 0, 0),
                                      straight(2.5, {0, 0, 3}, {0.6, 0, 0.8}, 4, 1)};
  segs[1].parent_id = 0;
  write_centerlines(dir / "c.csv", segs);
  const auto back = read_centerlines(dir / "c.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].parent_id == 0);
  CHECK_FALSE(back[0].parent_id.has_value());
  CHECK(back[1].generation == 1);
  CHECK(back[1].points == segs[1].points);

  Volume3D v = class_volume(10.0, 12.0);
  v.origin = {-3.5, 1.25, 7.0};
  write_volume(dir / "vol", v);
  const Volume3D w = read_volume(dir / "vol");
  CHECK(w.nx == v.nx);
  CHECK(w.nz == v.nz);
  CHECK(w.origin == v.origin);
  CHECK(w.spacing == v.spacing);
  CHECK(w.data == v.data);

  SegmentSeries s;
  s.segment_id = 4;
  s.parent_id = 0;
  s.method = "cnr-refined";
  s.arclength_mm = {1.0, 1.5, 2.0};
  s.diameter_mm = {3.1, 3.0, 2.9};
  s.area_mm2 = {7.5, 7.1, 6.6};
  write_series_csv(dir / "s.csv", {s});
  const auto sb = read_series_csv(dir / "s.csv");
  REQUIRE(sb.size() == 1);
  CHECK(sb[0].parent_id == 0);
  CHECK(sb[0].method == "cnr-refined");
  CHECK(sb[0].diameter_mm == s.diameter_mm);
  CHECK(sb[0].area_mm2 == s.area_mm2);
  fs::remove_all(dir);
}

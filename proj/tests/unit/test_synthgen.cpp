#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/random.hpp"
#include "atn/synthgen.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace atn;
using namespace atn::synth;

namespace {

// Independent point-in-ellipse evaluation: rotate into the ellipse frame.
bool in_ellipse(double x, double y, double cx, double cy, double a, double b, double t) {
  const double dx = x - cx, dy = y - cy;
  const double u = std::cos(t) * dx + std::sin(t) * dy;
  const double v = -std::sin(t) * dx + std::cos(t) * dy;
  return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("atn_test_synth_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("lumen radii stay inside the configured interval") {
  SynthConfig cfg;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const AirwayLabel l = sample_label(cfg, derive_seed(3, i));
    const double lr = l.lumen_radius();
    REQUIRE(lr >= 0.3 - 1e-12);
    REQUIRE(lr <= 6.0 + 1e-12);
    const double thickness = l.outer_radius() - l.lumen_radius();
    REQUIRE(thickness >= 0.1 * lr + 0.2 - 1e-9);
    REQUIRE(thickness <= 0.3 * lr + 0.8 + 1e-9);
    REQUIRE(l.r_b <= l.r_a);
    REQUIRE(l.w_b <= l.w_a);
    REQUIRE(l.theta >= 0.0);
    REQUIRE(l.theta < std::numbers::pi);
  }
}

TEST_CASE("ellipsoidness of one gives circles") {
  SynthConfig cfg;
  cfg.ellipsoidness = {1.0, 1.0};
  for (std::uint64_t i = 0; i < 50; ++i) {
    const AirwayLabel l = sample_label(cfg, i);
    CHECK(l.r_a == l.r_b);
    CHECK(l.w_a == l.w_b);
  }
}

TEST_CASE("sampling is a function of the seed") {
  SynthConfig cfg;
  CHECK(sample_label(cfg, 99) == sample_label(cfg, 99));
  CHECK_FALSE(sample_label(cfg, 99) == sample_label(cfg, 100));
}

TEST_CASE("adjacent airway frequency") {
  SynthConfig cfg;
  int hits = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) hits += sample_label(cfg, derive_seed(5, i)).has_adjacent;
  CHECK(std::abs(hits / 10000.0 - 0.4) <= 0.02);
}

TEST_CASE("invalid ranges are configuration errors") {
  SynthConfig cfg;
  cfg.lumen_radius_mm = {2.0, 1.0};
  CHECK_THROWS_AS(sample_label(cfg, 0), ConfigError);
  cfg = {};
  cfg.patch_size_px = 81;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.pixel_spacing_mm = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("6 mm lumen spans about 24 pixels") {
  SynthConfig cfg;
  AirwayLabel l{6.0, 6.0, 7.0, 7.0, 0.0, 0.0, 0.0, false};
  const TissueMaps maps = tissue_coverage(l, cfg, 0);
  double area = 0.0;
  for (float v : maps.lumen.pixels) area += v;
  CHECK(area == doctest::Approx(std::numbers::pi * 12.0 * 12.0).epsilon(0.01));
  // Middle row: lumen run length in pixels.
  int run = 0;
  for (int c = 0; c < 80; ++c) run += maps.lumen.at(40, c) > 0.5f;
  CHECK(run == 24);
  // Nothing touches the border.
  for (int k = 0; k < 80; ++k) {
    CHECK(maps.parenchyma.at(0, k) == 1.0f);
    CHECK(maps.parenchyma.at(79, k) == 1.0f);
  }
}

TEST_CASE("label outside the patch is a render error") {
  SynthConfig cfg;
  AirwayLabel l{6.0, 6.0, 8.0, 8.0, 14.0, 0.0, 0.0, false};
  CHECK_THROWS_AS(render_patch(l, cfg, 0), RenderError);
  try {
    render_patch(l, cfg, 0);
  } catch (const RenderError& e) {
    CHECK(std::string(e.what()).find("W_A") != std::string::npos);
  }
}

TEST_CASE("rendered regions agree with per-pixel ellipse membership") {
  SynthConfig cfg;
  long agree = 0, total = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const AirwayLabel l = sample_label(cfg, derive_seed(11, i));
    const std::uint64_t rs = derive_seed(11, i, 2);
    TissueMaps maps;
    try {
      maps = tissue_coverage(l, cfg, rs);
    } catch (const RenderError&) {
      continue;
    }
    const auto adj = adjacent_airway(l, cfg, rs);
    for (int r = 0; r < 80; ++r) {
      for (int c = 0; c < 80; ++c) {
        const double x = (c + 0.5 - 40) * 0.5;
        const double y = (r + 0.5 - 40) * 0.5;
        int cls = 2;
        if (in_ellipse(x, y, l.c_x, l.c_y, l.r_a, l.r_b, l.theta))
          cls = 0;
        else if (in_ellipse(x, y, l.c_x, l.c_y, l.w_a, l.w_b, l.theta))
          cls = 1;
        else if (adj && std::hypot(x - adj->c_x, y - adj->c_y) <= adj->lumen_radius)
          cls = 0;
        else if (adj && std::hypot(x - adj->c_x, y - adj->c_y) <= adj->outer_radius)
          cls = 1;
        const float cov[3] = {maps.lumen.at(r, c), maps.wall.at(r, c), maps.parenchyma.at(r, c)};
        int rendered = 0;
        for (int k = 1; k < 3; ++k)
          if (cov[k] > cov[rendered]) rendered = k;
        agree += rendered == cls;
        ++total;
      }
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("lumen boundary fit recovers the radii") {
  SynthConfig cfg;
  cfg.adjacent_prob = 0.0;
  cfg.lumen_radius_mm = {1.0, 6.0};
  for (std::uint64_t i = 0; i < 20; ++i) {
    const AirwayLabel l = sample_label(cfg, derive_seed(13, i));
    TissueMaps maps;
    try {
      maps = tissue_coverage(l, cfg, 0);
    } catch (const RenderError&) {
      continue;
    }
    // 0.5 iso-level crossings of the lumen coverage along rows and columns.
    std::vector<fwhm::Point2> pts;
    const Image& m = maps.lumen;
    for (int r = 0; r < 80; ++r)
      for (int c = 0; c + 1 < 80; ++c) {
        const double a = m.at(r, c) - 0.5, b = m.at(r, c + 1) - 0.5;
        if ((a < 0) != (b < 0))
          pts.push_back({(c + a / (a - b) + 0.5 - 40) * 0.5, (r + 0.5 - 40) * 0.5});
      }
    for (int c = 0; c < 80; ++c)
      for (int r = 0; r + 1 < 80; ++r) {
        const double a = m.at(r, c) - 0.5, b = m.at(r + 1, c) - 0.5;
        if ((a < 0) != (b < 0))
          pts.push_back({(c + 0.5 - 40) * 0.5, (r + a / (a - b) + 0.5 - 40) * 0.5});
      }
    const fwhm::EllipseFit fit = fwhm::fit_ellipse(pts);
    CHECK(std::abs(fit.major - l.r_a) <= 0.25);
    CHECK(std::abs(fit.minor - l.r_b) <= 0.25);
  }
}

TEST_CASE("a lone airway has one connected wall component") {
  SynthConfig cfg;
  cfg.adjacent_prob = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const AirwayLabel l = sample_label(cfg, derive_seed(17, i));
    TissueMaps maps;
    try {
      maps = tissue_coverage(l, cfg, 0);
    } catch (const RenderError&) {
      continue;
    }
    auto wall = [&](int k) { return maps.wall.pixels[k] > 0.0f; };
    std::vector<int> mark(80 * 80, 0);
    int components = 0;
    for (int s = 0; s < 80 * 80; ++s) {
      if (mark[s] || !wall(s)) continue;
      ++components;
      std::queue<int> q;
      q.push(s);
      mark[s] = 1;
      while (!q.empty()) {
        const int k = q.front();
        q.pop();
        const int r = k / 80, c = k % 80;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= 80 || cc < 0 || cc >= 80) continue;
            const int j = rr * 80 + cc;
            if (!mark[j] && wall(j)) {
              mark[j] = 1;
              q.push(j);
            }
          }
      }
    }
    CHECK(components == 1);
  }
}

TEST_CASE("pseudo-real render differs and keeps the label") {
  SynthConfig cfg;
  PseudoRealConfig pr;
  const AirwayLabel l{2.0, 1.8, 3.0, 2.8, 0.3, -0.2, 1.0, false};
  const Patch clean = render_patch(l, cfg, 4);
  const Patch real = render_pseudoreal(l, cfg, pr, 4);
  double mad = 0.0;
  for (std::size_t k = 0; k < clean.image.size(); ++k)
    mad += std::abs(clean.image.pixels[k] - real.image.pixels[k]);
  CHECK(mad / clean.image.size() > 0.0);
  REQUIRE(real.label.has_value());
  CHECK(*real.label == l);
}

TEST_CASE("FWHM error is larger on pseudo-real renders") {
  SynthConfig cfg;
  PseudoRealConfig pr;
  fwhm::FwhmConfig fc;
  double err_clean = 0.0, err_real = 0.0;
  int n = 0;
  for (std::uint64_t i = 0; n < 500; ++i) {
    const AirwayLabel l = sample_label(cfg, derive_seed(19, i));
    const std::uint64_t rs = derive_seed(19, i, 2);
    try {
      const Patch a = render_patch(l, cfg, rs);
      const Patch b = render_pseudoreal(l, cfg, pr, rs);
      double ea = 0.0, eb = 0.0;
      try {
        ea = std::abs(fwhm::measure_fwhm(a.image, 0.5, fc).label.lumen_radius() - l.lumen_radius());
      } catch (const NumericalError&) {
        ea = l.lumen_radius();
      }
      try {
        eb = std::abs(fwhm::measure_fwhm(b.image, 0.5, fc).label.lumen_radius() - l.lumen_radius());
      } catch (const NumericalError&) {
        eb = l.lumen_radius();
      }
      err_clean += ea;
      err_real += eb;
      ++n;
    } catch (const RenderError&) {
    }
  }
  CHECK(err_real / n > err_clean / n);
}

TEST_CASE("dataset bundle layout and determinism") {
  GenerateOptions opt;
  opt.count = 10;
  opt.seed = 21;
  const fs::path a = scratch("a"), b = scratch("b");
  generate_dataset(opt, a);
  generate_dataset(opt, b);
  CHECK(fs::file_size(a / "patches.bin") == 10u * 80 * 80 * 4);
  const auto m = io::read_manifest(a / "manifest.txt");
  CHECK(m.at("count") == "10");
  CHECK(slurp(a / "patches.bin") == slurp(b / "patches.bin"));
  CHECK(slurp(a / "labels.csv") == slurp(b / "labels.csv"));

  const io::Bundle bundle = io::read_bundle(a);
  const auto direct = generate_patches(opt);
  REQUIRE(bundle.count == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(bundle.labels[i] == *direct[i].label);
    CHECK(bundle.image(i).pixels == direct[i].image.pixels);
  }
  fs::remove_all(a);
  fs::remove_all(b);

  opt.count = 0;
  CHECK_THROWS_AS(generate_patches(opt), ConfigError);
}

#include "cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::app {

namespace fs = std::filesystem;
using patches3d::Vec3;

namespace {

constexpr int kGenerations = 4;
constexpr double kLength[kGenerations] = {8.0, 7.0, 6.0, 5.0};
constexpr double kLumen[kGenerations] = {3.0, 2.2, 1.6, 1.2};
constexpr double kBranchDeg[kGenerations] = {0.0, 35.0, 30.0, 25.0};
constexpr double kMarginMm = 10.0;
constexpr double kNoiseHu = 20.0;

Vec3 direction(double angle) { return {std::sin(angle), 0.0, -std::cos(angle)}; }

}  // namespace

std::string patient_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%03d", index);
  return buf;
}

AirwayTree make_tree(double dilation, const CohortConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const double scale = rng.uniform(0.95, 1.05);
  const double d = std::clamp(dilation, -2.0, 2.0);
  const double distal = std::max(0.6, 1.0 + config.dilation_effect * d);
  const double distal_taper = 0.12 * (1.0 - 0.4 * std::clamp(d, -1.5, 1.5));

  struct Node {
    int id;
    std::optional<int> parent;
    int generation;
    Vec3 start;
    double angle;
  };
  AirwayTree tree;
  std::vector<Node> queue{{0, std::nullopt, 0, {0.0, 0.0, 0.0}, 0.0}};
  int next_id = 1;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const Node n = queue[q];
    const int g = n.generation;
    const double length = kLength[g] * rng.uniform(0.9, 1.1);
    const Vec3 dir = direction(n.angle);
    const Vec3 end{n.start[0] + length * dir[0], n.start[1], n.start[2] + length * dir[2]};

    phantom::Tube tube;
    tube.start = n.start;
    tube.end = end;
    const double r0 = kLumen[g] * scale * (g >= 2 ? distal : 1.0) * rng.uniform(0.95, 1.05);
    const double taper = g >= 2 ? distal_taper : 0.08;
    tube.lumen_start_mm = r0;
    tube.lumen_end_mm = r0 * (1.0 - taper);
    tube.wall_start_mm = 0.2 * tube.lumen_start_mm + 0.5;
    tube.wall_end_mm = 0.2 * tube.lumen_end_mm + 0.5;
    tube.ratio = rng.uniform(0.9, 1.0);
    tube.theta = rng.uniform(0.0, std::numbers::pi);
    tree.tubes.push_back(tube);

    patches3d::CenterlineSegment seg;
    seg.segment_id = n.id;
    seg.parent_id = n.parent;
    seg.generation = g;
    const int steps = static_cast<int>(std::ceil(length / 0.5));
    for (int k = 0; k <= steps; ++k) {
      const double t = length * k / steps;
      seg.points.push_back({n.start[0] + t * dir[0], n.start[1], n.start[2] + t * dir[2]});
      seg.tangents.push_back(dir);
    }
    tree.segments.push_back(std::move(seg));

    if (g + 1 < kGenerations) {
      const double spread = kBranchDeg[g + 1] * std::numbers::pi / 180.0;
      for (int side : {-1, 1}) {
        const double jitter = rng.uniform(-5.0, 5.0) * std::numbers::pi / 180.0;
        queue.push_back({next_id++, n.id, g + 1, end, n.angle + side * spread + jitter});
      }
    }
  }
  return tree;
}

std::vector<SimulatedPatient> simulate_patients(const CohortConfig& config, std::uint64_t seed) {
  // Survival times follow an exponential model in the dilation score; the
  // helper draws the N(0,1) score and tunes censoring to the requested level.
  const survival::CoxData base = survival::simulate_exponential(
      config.patients, config.dilation_log_hazard, config.censor_fraction, derive_seed(seed, 0, 61));
  std::vector<SimulatedPatient> out;
  for (int i = 0; i < config.patients; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 62));
    SimulatedPatient p;
    p.id = patient_id(i);
    p.dilation = base.x(i, 0);
    auto& r = p.record;
    r.patient_id = p.id;
    r.time_days = std::max(1.0, std::round(base.time[i] / config.baseline_hazard_per_day));
    r.event = base.event[i];
    r.age = std::round(rng.normal(config.age_mean, config.age_sd));
    r.gender = rng.bernoulli(config.female_prob) ? 1.0 : 0.0;
    r.smoker = rng.bernoulli(config.smoker_prob) ? 1.0 : 0.0;
    const double fvc = std::round(75.0 - 8.0 * p.dilation + rng.normal(0.0, 12.0));
    const double dlco = std::round(45.0 - 6.0 * p.dilation + rng.normal(0.0, 10.0));
    if (!rng.bernoulli(config.fvc_missing_prob)) r.fvc = fvc;
    if (!rng.bernoulli(config.dlco_missing_prob)) r.dlco = dlco;
    p.tree = make_tree(p.dilation, config, derive_seed(seed, static_cast<std::uint64_t>(i), 63));
    out.push_back(std::move(p));
  }
  return out;
}

patches3d::Volume3D render_tree(const AirwayTree& tree, const CohortConfig& config,
                                std::uint64_t seed) {
  Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (const auto& s : tree.segments)
    for (const auto& p : s.points)
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
  phantom::Grid grid;
  grid.spacing_mm = config.voxel_mm;
  for (int k = 0; k < 3; ++k) {
    lo[k] -= kMarginMm;
    hi[k] += kMarginMm;
  }
  grid.origin = lo;
  grid.nx = static_cast<int>(std::ceil((hi[0] - lo[0]) / grid.spacing_mm)) + 1;
  grid.ny = static_cast<int>(std::ceil((hi[1] - lo[1]) / grid.spacing_mm)) + 1;
  grid.nz = static_cast<int>(std::ceil((hi[2] - lo[2]) / grid.spacing_mm)) + 1;
  auto vol = phantom::render_tubes(tree.tubes, grid, {}, config.supersample);
  Rng rng(seed);
  for (float& v : vol.data) v += static_cast<float>(rng.normal(0.0, kNoiseHu));
  return vol;
}

void write_cohort(const CohortConfig& config, std::uint64_t seed, const fs::path& out) {
  const auto patients = simulate_patients(config, seed);
  std::vector<survival::SurvivalRecord> records;
  io::CsvTable truth;
  truth.header = {"patient_id", "dilation"};
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto& p = patients[i];
    const fs::path dir = out / "patients" / p.id;
    fs::create_directories(dir);
    patches3d::write_volume(dir / "volume", render_tree(p.tree, config, derive_seed(seed, i, 64)));
    patches3d::write_centerlines(dir / "centerlines.csv", p.tree.segments);
    records.push_back(p.record);
    truth.rows.push_back({p.id, io::format_double(p.dilation)});
  }
  survival::write_records(out / "clinical.csv", records);
  io::write_csv(out / "truth.csv", truth);
}

}  // namespace atn::app

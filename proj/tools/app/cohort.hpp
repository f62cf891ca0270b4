#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atn/patches3d.hpp"
#include "atn/phantom.hpp"
#include "atn/survival.hpp"
#include "config.hpp"

namespace atn::app {

/// Planar binary airway tree, generations 0..3 (15 segments), in the x-z plane.
struct AirwayTree {
  std::vector<patches3d::CenterlineSegment> segments;
  std::vector<phantom::Tube> tubes;  // one per segment, same order
};

/// `dilation` (in sd units) widens and straightens generation >= 2 airways.
AirwayTree make_tree(double dilation, const CohortConfig& config, std::uint64_t seed);

struct SimulatedPatient {
  std::string id;
  double dilation = 0.0;
  survival::SurvivalRecord record;
  AirwayTree tree;
};

std::vector<SimulatedPatient> simulate_patients(const CohortConfig& config, std::uint64_t seed);

patches3d::Volume3D render_tree(const AirwayTree& tree, const CohortConfig& config,
                                std::uint64_t seed);

/// Writes clinical.csv, truth.csv and patients/<id>/{volume/, centerlines.csv}.
void write_cohort(const CohortConfig& config, std::uint64_t seed, const std::filesystem::path& out);

std::string patient_id(int index);

}  // namespace atn::app

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atn/augment.hpp"
#include "atn/biomarkers.hpp"
#include "atn/fwhm.hpp"
#include "atn/nets.hpp"
#include "atn/patches3d.hpp"
#include "atn/perceptual.hpp"
#include "atn/survival.hpp"
#include "atn/synthgen.hpp"
#include "json.hpp"

namespace atn::app {

inline constexpr int kSchemaVersion = 1;

struct ExtractorConfig {
  perceptual::Variant variant = perceptual::Variant::Hermetic;
  std::string weights_path;  // empty: $ATN_VGG16_WEIGHTS
  std::uint64_t seed = 7;
};

struct BiomarkerConfig {
  biomarkers::Aggregation aggregation = biomarkers::Aggregation::Mean;
};

/// Simulated patients: a small planar airway tree per patient whose distal
/// dilation drives both the biomarkers and the hazard.
struct CohortConfig {
  int patients = 60;
  double dilation_log_hazard = 0.8;     // per standard deviation of dilation
  double dilation_effect = 0.25;        // relative lumen growth per sd, generation >= 2
  double baseline_hazard_per_day = 1.0 / 900.0;
  double censor_fraction = 0.25;
  double age_mean = 70.0, age_sd = 8.0;
  double female_prob = 0.25;
  double smoker_prob = 0.65;
  double fvc_missing_prob = 0.02;
  double dlco_missing_prob = 0.09;
  double voxel_mm = 0.5;
  int supersample = 2;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  synth::SynthConfig synth;
  synth::PseudoRealConfig pseudoreal;
  augment::AugmentConfig augment;
  ExtractorConfig extractor;
  perceptual::LossConfig loss;
  nets::RefinerConfig refiner;
  nets::RefinerTrainConfig train_refiner;
  nets::CnrConfig cnr;
  nets::CnrTrainConfig train_cnr;
  fwhm::FwhmConfig fwhm;
  patches3d::SeriesConfig series;
  BiomarkerConfig biomarkers;
  survival::CoxOptions survival;
  CohortConfig cohort;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types are
/// ConfigErrors naming the offending key path.
RunConfig from_json(const nlohmann::json& j);

/// `overrides` are "section.key=value" with value parsed as JSON, falling back
/// to a plain string. Relative weights paths resolve against the config file.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace atn::app

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "atn/image.hpp"
#include "atn/label.hpp"

namespace atn::synth {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Airway parameter distributions and the intensity model of clean renders.
struct SynthConfig {
  Range lumen_radius_mm{0.3, 6.0};
  // wall thickness bounds are affine in the lumen radius LR: a*LR + b
  double wall_low_slope = 0.1;
  double wall_low_offset_mm = 0.2;
  double wall_high_slope = 0.3;
  double wall_high_offset_mm = 0.8;
  double center_jitter_std_mm = 1.0;
  double adjacent_prob = 0.4;
  Range adjacent_scale{0.75, 1.25};
  Range ellipsoidness{0.9, 1.0};
  int patch_size_px = 80;
  double pixel_spacing_mm = 0.5;
  int supersample = 4;
  double lumen_hu = -1000.0;
  double wall_hu = 0.0;
  double parenchyma_hu = -800.0;

  void validate() const;
};

/// Appearance model for the pseudo-real domain standing in for CT patches.
struct PseudoRealConfig {
  double texture_amplitude_hu = 60.0;
  double texture_correlation_px = 2.0;
  double gradient_max_hu = 80.0;  // peak-to-centre amplitude of the linear ramp
  double vessel_prob = 0.3;
  double vessel_hu = 0.0;
  Range vessel_scale{0.6, 1.2};  // vessel radius relative to lumen radius
  double lumen_hu = -950.0;
  double psf_sigma_px = 0.8;

  void validate() const;
};

struct Patch {
  Image image;
  double spacing_mm = 0.5;
  std::optional<AirwayLabel> label;
};

AirwayLabel sample_label(const SynthConfig& config, std::uint64_t seed);

/// Noiseless render with subpixel area weighting.
Patch render_patch(const AirwayLabel& label, const SynthConfig& config, std::uint64_t seed);

Patch render_pseudoreal(const AirwayLabel& label, const SynthConfig& config,
                        const PseudoRealConfig& domain, std::uint64_t seed);

/// Fractional coverage of the three tissue classes in every pixel.
struct TissueMaps {
  Image lumen;
  Image wall;
  Image parenchyma;
};

/// Geometry of the optional neighbouring airway, derived deterministically
/// from the render seed.
struct AdjacentAirway {
  double c_x = 0.0;
  double c_y = 0.0;
  double lumen_radius = 0.0;
  double outer_radius = 0.0;
};
std::optional<AdjacentAirway> adjacent_airway(const AirwayLabel& label, const SynthConfig& config,
                                              std::uint64_t seed);

TissueMaps tissue_coverage(const AirwayLabel& label, const SynthConfig& config, std::uint64_t seed);

/// Exact point-in-ellipse test for the label's inner (lumen) or outer ellipse.
bool inside_ellipse(double x, double y, double cx, double cy, double ra, double rb, double theta);

enum class Domain { Synthetic, PseudoReal };

struct GenerateOptions {
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  Domain domain = Domain::Synthetic;
  SynthConfig synth;
  PseudoRealConfig pseudoreal;
};

/// Generate `count` labelled patches and write them as a dataset bundle.
void generate_dataset(const GenerateOptions& options, const std::filesystem::path& out_dir);

/// In-memory variant of generate_dataset: item i depends only on (seed, i).
std::vector<Patch> generate_patches(const GenerateOptions& options);

}  // namespace atn::synth

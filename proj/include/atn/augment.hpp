#pragma once

#include <cstdint>

#include "atn/image.hpp"
#include "atn/synthgen.hpp"

namespace atn::augment {

struct AugmentConfig {
  double noise_std_hu = 25.0;
  synth::Range blur_sigma_px{0.5, 0.875};
  double flip_prob = 0.2;  // per axis
  synth::Range real_scale{0.75, 1.25};
  int crop_size_px = 32;

  void validate() const;
};

/// Zero mean, unit variance. Throws DataError on a constant patch.
Image standardize(const Image& img);

Image center_crop(const Image& img, int size);
Image flip_horizontal(const Image& img);  // mirror columns: x -> -x
Image flip_vertical(const Image& img);    // mirror rows: y -> -y

/// Bilinear resampling about the patch centre; factor > 1 magnifies.
Image scale_about_center(const Image& img, double factor);

AirwayLabel flip_label_horizontal(const AirwayLabel& l);
AirwayLabel flip_label_vertical(const AirwayLabel& l);
AirwayLabel scale_label(const AirwayLabel& l, double factor);

/// Record of the random choices made by one augment() call.
struct AugmentTrace {
  double scale = 1.0;
  double blur_sigma = 0.0;
  bool flip_h = false;
  bool flip_v = false;
};

/// scale (real only) -> blur -> noise -> flip -> standardize -> centre crop.
/// The label, when present, is transformed alongside the pixels.
synth::Patch augment(const synth::Patch& patch, const AugmentConfig& config, bool is_real,
                     std::uint64_t seed, AugmentTrace* trace = nullptr);

/// Inference-time preparation: standardize -> centre crop.
synth::Patch prepare(const synth::Patch& patch, int crop_size_px = 32);

}  // namespace atn::augment

#include "atn/augment.hpp"

#include <cmath>
#include <numbers>

#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::augment {

void AugmentConfig::validate() const {
  if (!(noise_std_hu >= 0.0)) throw ConfigError("noise_std_hu must be >= 0");
  if (blur_sigma_px.lo > blur_sigma_px.hi || blur_sigma_px.lo < 0.0)
    throw ConfigError("blur_sigma_px range is empty or negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
  if (real_scale.lo > real_scale.hi || real_scale.lo <= 0.0)
    throw ConfigError("real_scale range is empty or non-positive");
  if (crop_size_px <= 0) throw ConfigError("crop_size_px must be positive");
}

Image standardize(const Image& img) {
  if (img.size() == 0) throw DataError("cannot standardize an empty patch");
  double sum = 0.0;
  for (float v : img.pixels) sum += v;
  const double mean = sum / img.size();
  double ss = 0.0;
  for (float v : img.pixels) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / img.size());
  if (!std::isfinite(sd)) throw DataError("cannot standardize a non-finite patch");
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean)))
    throw DataError("cannot standardize a constant patch (zero variance)");
  Image out(img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.pixels[i] = static_cast<float>((img.pixels[i] - mean) / sd);
  return out;
}

Image center_crop(const Image& img, int size) {
  if (size > img.height || size > img.width) {
    throw ConfigError("crop size " + std::to_string(size) + " exceeds patch size " +
                      std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  if ((img.height - size) % 2 != 0 || (img.width - size) % 2 != 0)
    throw ConfigError("centre crop needs equal margins (patch and crop parity differ)");
  const int r0 = (img.height - size) / 2;
  const int c0 = (img.width - size) / 2;
  Image out(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, img.width - 1 - c);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(img.height - 1 - r, c);
  return out;
}

Image scale_about_center(const Image& img, double factor) {
  if (!(factor > 0.0)) throw ConfigError("scale factor must be positive");
  Image out(img.height, img.width);
  const double cr = (img.height - 1) / 2.0;
  const double cc = (img.width - 1) / 2.0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      out.at(r, c) = sample_bilinear(img, cr + (r - cr) / factor, cc + (c - cc) / factor);
  return out;
}

AirwayLabel flip_label_horizontal(const AirwayLabel& l) {
  AirwayLabel out = l;
  out.c_x = -l.c_x;
  out.theta = wrap_pi(std::numbers::pi - l.theta);
  return out;
}

AirwayLabel flip_label_vertical(const AirwayLabel& l) {
  AirwayLabel out = l;
  out.c_y = -l.c_y;
  out.theta = wrap_pi(std::numbers::pi - l.theta);
  return out;
}

AirwayLabel scale_label(const AirwayLabel& l, double factor) {
  AirwayLabel out = l;
  out.r_a *= factor;
  out.r_b *= factor;
  out.w_a *= factor;
  out.w_b *= factor;
  out.c_x *= factor;
  out.c_y *= factor;
  return out;
}

synth::Patch augment(const synth::Patch& patch, const AugmentConfig& config, bool is_real,
                     std::uint64_t seed, AugmentTrace* trace) {
  config.validate();
  if (config.crop_size_px > patch.image.height || config.crop_size_px > patch.image.width)
    throw ConfigError("crop size " + std::to_string(config.crop_size_px) +
                      " exceeds patch size " + std::to_string(patch.image.height));
  Rng rng(seed);
  AugmentTrace t;
  synth::Patch out = patch;

  if (is_real) {
    t.scale = rng.uniform(config.real_scale.lo, config.real_scale.hi);
    out.image = scale_about_center(out.image, t.scale);
    if (out.label) out.label = scale_label(*out.label, t.scale);
  }

  t.blur_sigma = rng.uniform(config.blur_sigma_px.lo, config.blur_sigma_px.hi);
  out.image = gaussian_blur(out.image, t.blur_sigma);

  if (config.noise_std_hu > 0.0)
    for (float& v : out.image.pixels) v += static_cast<float>(rng.normal(0.0, config.noise_std_hu));

  t.flip_h = rng.bernoulli(config.flip_prob);
  t.flip_v = rng.bernoulli(config.flip_prob);
  if (t.flip_h) {
    out.image = flip_horizontal(out.image);
    if (out.label) out.label = flip_label_horizontal(*out.label);
  }
  if (t.flip_v) {
    out.image = flip_vertical(out.image);
    if (out.label) out.label = flip_label_vertical(*out.label);
  }

  out.image = center_crop(standardize(out.image), config.crop_size_px);
  if (trace) *trace = t;
  return out;
}

synth::Patch prepare(const synth::Patch& patch, int crop_size_px) {
  synth::Patch out = patch;
  out.image = center_crop(standardize(patch.image), crop_size_px);
  return out;
}

}  // namespace atn::augment

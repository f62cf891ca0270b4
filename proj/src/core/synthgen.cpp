#include "atn/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::synth {

namespace {

constexpr std::uint64_t kAdjacentStream = 17;
constexpr std::uint64_t kPseudoRealStream = 23;

void check_range(const Range& r, const char* name) {
  if (!(std::isfinite(r.lo) && std::isfinite(r.hi)) || r.lo > r.hi) {
    std::ostringstream os;
    os << "range " << name << " is empty: [" << r.lo << ", " << r.hi << "]";
    throw ConfigError(os.str());
  }
}

// Ellipse in rotated local coordinates; membership via (u/a)^2 + (v/b)^2 <= 1.
struct EllipseTest {
  double cx, cy, cos_t, sin_t, inv_a2, inv_b2;

  EllipseTest(double cx_, double cy_, double a, double b, double theta)
      : cx(cx_), cy(cy_), cos_t(std::cos(theta)), sin_t(std::sin(theta)),
        inv_a2(1.0 / (a * a)), inv_b2(1.0 / (b * b)) {}

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * cos_t + dy * sin_t;
    const double v = -dx * sin_t + dy * cos_t;
    return u * u * inv_a2 + v * v * inv_b2 <= 1.0;
  }
};

struct Disc {
  double cx, cy, r2;
  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    return dx * dx + dy * dy <= r2;
  }
};

// Distance from an ellipse centre to its boundary along world direction phi.
double polar_radius(double a, double b, double theta, double phi) {
  const double alpha = phi - theta;
  const double ca = b * std::cos(alpha);
  const double sa = a * std::sin(alpha);
  return a * b / std::sqrt(ca * ca + sa * sa);
}

void check_fits(const AirwayLabel& l, const SynthConfig& config) {
  const double half = 0.5 * config.patch_size_px * config.pixel_spacing_mm;
  const double c = std::cos(l.theta);
  const double s = std::sin(l.theta);
  const double hx = std::sqrt(l.w_a * l.w_a * c * c + l.w_b * l.w_b * s * s);
  const double hy = std::sqrt(l.w_a * l.w_a * s * s + l.w_b * l.w_b * c * c);
  if (std::abs(l.c_x) + hx > half || std::abs(l.c_y) + hy > half) {
    std::ostringstream os;
    os << "outer wall radius W_A=" << l.w_a << " mm at centre (" << l.c_x << ", " << l.c_y
       << ") mm exceeds the patch half-extent of " << half << " mm";
    throw RenderError(os.str());
  }
}

// Tissue classes: 0 lumen, 1 wall, 2 parenchyma, 3 vessel.
struct Coverage {
  Image lumen, wall, parenchyma, vessel;
};

Coverage coverage(const AirwayLabel& label, const SynthConfig& config, std::uint64_t seed,
                  const std::optional<Disc>& vessel) {
  validate(label);
  check_fits(label, config);
  const int n = config.patch_size_px;
  const double sp = config.pixel_spacing_mm;
  const int ss = config.supersample;

  const EllipseTest inner(label.c_x, label.c_y, label.r_a, label.r_b, label.theta);
  const EllipseTest outer(label.c_x, label.c_y, label.w_a, label.w_b, label.theta);
  const auto adj = adjacent_airway(label, config, seed);
  std::optional<Disc> adj_lumen, adj_outer;
  if (adj) {
    adj_lumen = Disc{adj->c_x, adj->c_y, adj->lumen_radius * adj->lumen_radius};
    adj_outer = Disc{adj->c_x, adj->c_y, adj->outer_radius * adj->outer_radius};
  }

  Coverage cov{Image(n, n), Image(n, n), Image(n, n), Image(n, n)};
  const double weight = 1.0 / (ss * ss);
  for (int r = 0; r < n; ++r) {
    const double y0 = pixel_centre_mm(r, n, sp);
    for (int c = 0; c < n; ++c) {
      const double x0 = pixel_centre_mm(c, n, sp);
      int counts[4] = {0, 0, 0, 0};
      for (int i = 0; i < ss; ++i) {
        const double y = y0 + ((i + 0.5) / ss - 0.5) * sp;
        for (int j = 0; j < ss; ++j) {
          const double x = x0 + ((j + 0.5) / ss - 0.5) * sp;
          int cls = 2;
          if (inner.contains(x, y)) {
            cls = 0;
          } else if (outer.contains(x, y)) {
            cls = 1;
          } else if (adj_lumen && adj_lumen->contains(x, y)) {
            cls = 0;
          } else if (adj_outer && adj_outer->contains(x, y)) {
            cls = 1;
          } else if (vessel && vessel->contains(x, y)) {
            cls = 3;
          }
          ++counts[cls];
        }
      }
      cov.lumen.at(r, c) = static_cast<float>(counts[0] * weight);
      cov.wall.at(r, c) = static_cast<float>(counts[1] * weight);
      cov.parenchyma.at(r, c) = static_cast<float>(counts[2] * weight);
      cov.vessel.at(r, c) = static_cast<float>(counts[3] * weight);
    }
  }
  return cov;
}

}  // namespace

void SynthConfig::validate() const {
  check_range(lumen_radius_mm, "lumen_radius_mm");
  check_range(adjacent_scale, "adjacent_scale");
  check_range(ellipsoidness, "ellipsoidness");
  if (lumen_radius_mm.lo <= 0.0) throw ConfigError("lumen_radius_mm must be positive");
  if (ellipsoidness.lo <= 0.0 || ellipsoidness.hi > 1.0)
    throw ConfigError("ellipsoidness must lie in (0, 1]");
  if (!(center_jitter_std_mm >= 0.0)) throw ConfigError("center_jitter_std_mm must be >= 0");
  if (!(adjacent_prob >= 0.0 && adjacent_prob <= 1.0))
    throw ConfigError("adjacent_prob must lie in [0, 1]");
  if (patch_size_px <= 0 || patch_size_px % 2 != 0)
    throw ConfigError("patch_size_px must be positive and even");
  if (!(pixel_spacing_mm > 0.0)) throw ConfigError("pixel_spacing_mm must be positive");
  if (supersample < 1) throw ConfigError("supersample must be >= 1");
  // Wall thickness interval [a*LR+b, c*LR+d] must be nonempty over the radius range.
  for (double lr : {lumen_radius_mm.lo, lumen_radius_mm.hi}) {
    const double lo = wall_low_slope * lr + wall_low_offset_mm;
    const double hi = wall_high_slope * lr + wall_high_offset_mm;
    if (!(lo > 0.0) || lo > hi) throw ConfigError("wall thickness interval is empty");
  }
}

void PseudoRealConfig::validate() const {
  check_range(vessel_scale, "vessel_scale");
  if (!(vessel_prob >= 0.0 && vessel_prob <= 1.0))
    throw ConfigError("vessel_prob must lie in [0, 1]");
  if (texture_amplitude_hu < 0.0 || texture_correlation_px < 0.0 || psf_sigma_px < 0.0 ||
      gradient_max_hu < 0.0)
    throw ConfigError("pseudo-real amplitudes must be >= 0");
}

bool inside_ellipse(double x, double y, double cx, double cy, double ra, double rb,
                    double theta) {
  return EllipseTest(cx, cy, ra, rb, theta).contains(x, y);
}

AirwayLabel sample_label(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double lr = rng.uniform(config.lumen_radius_mm.lo, config.lumen_radius_mm.hi);
  const double thickness = rng.uniform(config.wall_low_slope * lr + config.wall_low_offset_mm,
                                       config.wall_high_slope * lr + config.wall_high_offset_mm);
  const double ratio = rng.uniform(config.ellipsoidness.lo, config.ellipsoidness.hi);

  AirwayLabel label;
  // (R_A + R_B) / 2 == LR with R_B / R_A == ratio
  label.r_a = 2.0 * lr / (1.0 + ratio);
  label.r_b = ratio * label.r_a;
  label.w_a = label.r_a + thickness;
  label.w_b = label.r_b + thickness;
  label.c_x = rng.normal(0.0, config.center_jitter_std_mm);
  label.c_y = rng.normal(0.0, config.center_jitter_std_mm);
  label.theta = wrap_pi(rng.uniform(0.0, std::numbers::pi));
  label.has_adjacent = rng.bernoulli(config.adjacent_prob);
  return label;
}

std::optional<AdjacentAirway> adjacent_airway(const AirwayLabel& label, const SynthConfig& config,
                                              std::uint64_t seed) {
  if (!label.has_adjacent) return std::nullopt;
  Rng rng(derive_seed(seed, 0, kAdjacentStream));
  const double scale = rng.uniform(config.adjacent_scale.lo, config.adjacent_scale.hi);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  AdjacentAirway adj;
  adj.lumen_radius = scale * label.lumen_radius();
  adj.outer_radius = adj.lumen_radius + scale * (label.outer_radius() - label.lumen_radius());
  const double dist = polar_radius(label.w_a, label.w_b, label.theta, phi) + adj.outer_radius;
  adj.c_x = label.c_x + dist * std::cos(phi);
  adj.c_y = label.c_y + dist * std::sin(phi);
  return adj;
}

TissueMaps tissue_coverage(const AirwayLabel& label, const SynthConfig& config,
                           std::uint64_t seed) {
  config.validate();
  Coverage cov = coverage(label, config, seed, std::nullopt);
  return TissueMaps{std::move(cov.lumen), std::move(cov.wall), std::move(cov.parenchyma)};
}

Patch render_patch(const AirwayLabel& label, const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const Coverage cov = coverage(label, config, seed, std::nullopt);
  Patch patch{Image(config.patch_size_px, config.patch_size_px), config.pixel_spacing_mm, label};
  for (std::size_t i = 0; i < patch.image.size(); ++i) {
    patch.image.pixels[i] = static_cast<float>(cov.lumen.pixels[i] * config.lumen_hu +
                                               cov.wall.pixels[i] * config.wall_hu +
                                               cov.parenchyma.pixels[i] * config.parenchyma_hu);
  }
  return patch;
}

Patch render_pseudoreal(const AirwayLabel& label, const SynthConfig& config,
                        const PseudoRealConfig& domain, std::uint64_t seed) {
  config.validate();
  domain.validate();
  Rng rng(derive_seed(seed, 0, kPseudoRealStream));

  std::optional<Disc> vessel;
  if (rng.bernoulli(domain.vessel_prob)) {
    const double radius =
        rng.uniform(domain.vessel_scale.lo, domain.vessel_scale.hi) * label.lumen_radius();
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dist = polar_radius(label.w_a, label.w_b, label.theta, phi) + radius;
    vessel = Disc{label.c_x + dist * std::cos(phi), label.c_y + dist * std::sin(phi),
                  radius * radius};
  }
  const Coverage cov = coverage(label, config, seed, vessel);
  const int n = config.patch_size_px;

  Image texture(n, n);
  for (float& v : texture.pixels) v = static_cast<float>(rng.normal());
  texture = gaussian_blur(texture, domain.texture_correlation_px);
  double sum = 0.0, sum2 = 0.0;
  for (float v : texture.pixels) {
    sum += v;
    sum2 += static_cast<double>(v) * v;
  }
  const double mean = sum / texture.size();
  const double sd = std::sqrt(std::max(sum2 / texture.size() - mean * mean, 1e-12));

  const double ramp = rng.uniform(-domain.gradient_max_hu, domain.gradient_max_hu);
  const double ramp_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double half = 0.5 * n * config.pixel_spacing_mm;

  Patch patch{Image(n, n), config.pixel_spacing_mm, label};
  for (int r = 0; r < n; ++r) {
    const double y = pixel_centre_mm(r, n, config.pixel_spacing_mm);
    for (int c = 0; c < n; ++c) {
      const double x = pixel_centre_mm(c, n, config.pixel_spacing_mm);
      const double par = cov.parenchyma.at(r, c);
      const double tex = domain.texture_amplitude_hu * (texture.at(r, c) - mean) / sd;
      const double value = cov.lumen.at(r, c) * domain.lumen_hu +
                           cov.wall.at(r, c) * config.wall_hu +
                           par * (config.parenchyma_hu + tex) +
                           cov.vessel.at(r, c) * domain.vessel_hu +
                           ramp * (x * std::cos(ramp_dir) + y * std::sin(ramp_dir)) / half;
      patch.image.at(r, c) = static_cast<float>(value);
    }
  }
  patch.image = gaussian_blur(patch.image, domain.psf_sigma_px);
  return patch;
}

std::vector<Patch> generate_patches(const GenerateOptions& options) {
  if (options.count == 0) throw ConfigError("dataset size n must be >= 1");
  options.synth.validate();
  std::vector<Patch> out;
  out.reserve(options.count);
  for (std::uint64_t i = 0; i < options.count; ++i) {
    const AirwayLabel label = sample_label(options.synth, derive_seed(options.seed, i, 1));
    const std::uint64_t render_seed = derive_seed(options.seed, i, 2);
    if (options.domain == Domain::Synthetic) {
      out.push_back(render_patch(label, options.synth, render_seed));
    } else {
      out.push_back(render_pseudoreal(label, options.synth, options.pseudoreal, render_seed));
    }
  }
  return out;
}

void generate_dataset(const GenerateOptions& options, const std::filesystem::path& out_dir) {
  const std::vector<Patch> patches = generate_patches(options);
  io::Bundle bundle;
  bundle.height = options.synth.patch_size_px;
  bundle.width = options.synth.patch_size_px;
  bundle.pixel_spacing_mm = options.synth.pixel_spacing_mm;
  for (const Patch& p : patches) bundle.push_back(p);
  bundle.extra["kind"] = options.domain == Domain::Synthetic ? "synthetic" : "pseudoreal";
  bundle.extra["seed"] = std::to_string(options.seed);
  bundle.extra["units"] = "mm";
  io::write_bundle(out_dir, bundle);
}

}  // namespace atn::synth

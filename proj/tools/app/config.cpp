#include "config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "atn/errors.hpp"

namespace atn::app {

using nlohmann::json;

namespace {

// Per-type codecs -----------------------------------------------------------

json encode(double v) { return v; }
json encode(int v) { return v; }
json encode(std::uint64_t v) { return v; }
json encode(bool v) { return v; }
json encode(const std::string& v) { return v; }
json encode(const synth::Range& r) { return json::array({r.lo, r.hi}); }
json encode(const std::vector<std::string>& v) { return v; }
json encode(const std::vector<int>& v) { return v; }
json encode(perceptual::Variant v) { return perceptual::to_string(v); }
json encode(perceptual::Distance v) { return perceptual::to_string(v); }
json encode(biomarkers::Aggregation v) { return biomarkers::to_string(v); }
json encode(patches3d::DiameterMode v) {
  return v == patches3d::DiameterMode::EquivalentArea ? "equivalent_area" : "mean_of_axes";
}
json encode(survival::Ties v) { return v == survival::Ties::Efron ? "efron" : "breslow"; }

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

template <class T>
T get(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    bad(path, "unexpected value " + j.dump());
  }
}

void decode(const json& j, double& v, const std::string& p) {
  if (!j.is_number()) bad(p, "expected a number");
  v = j.get<double>();
}
void decode(const json& j, int& v, const std::string& p) {
  if (!j.is_number_integer()) bad(p, "expected an integer");
  v = get<int>(j, p);
}
void decode(const json& j, std::uint64_t& v, const std::string& p) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    bad(p, "expected a non-negative integer");
  v = get<std::uint64_t>(j, p);
}
void decode(const json& j, bool& v, const std::string& p) {
  if (!j.is_boolean()) bad(p, "expected true or false");
  v = j.get<bool>();
}
void decode(const json& j, std::string& v, const std::string& p) {
  if (!j.is_string()) bad(p, "expected a string");
  v = j.get<std::string>();
}
void decode(const json& j, synth::Range& r, const std::string& p) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    bad(p, "expected [lo, hi]");
  r = {j[0].get<double>(), j[1].get<double>()};
}
void decode(const json& j, std::vector<std::string>& v, const std::string& p) {
  if (!j.is_array()) bad(p, "expected a list of strings");
  v.clear();
  for (const auto& e : j) {
    if (!e.is_string()) bad(p, "expected a list of strings");
    v.push_back(e.get<std::string>());
  }
}
void decode(const json& j, std::vector<int>& v, const std::string& p) {
  if (!j.is_array()) bad(p, "expected a list of integers");
  v.clear();
  for (const auto& e : j) {
    if (!e.is_number_integer()) bad(p, "expected a list of integers");
    v.push_back(get<int>(e, p));
  }
}

template <class E, class Parse>
void decode_enum(const json& j, E& v, const std::string& p, Parse parse) {
  if (!j.is_string()) bad(p, "expected a string");
  try {
    v = parse(j.get<std::string>());
  } catch (const ConfigError& e) {
    bad(p, e.what());
  }
}
void decode(const json& j, perceptual::Variant& v, const std::string& p) {
  decode_enum(j, v, p, perceptual::parse_variant);
}
void decode(const json& j, perceptual::Distance& v, const std::string& p) {
  decode_enum(j, v, p, perceptual::parse_distance);
}
void decode(const json& j, biomarkers::Aggregation& v, const std::string& p) {
  decode_enum(j, v, p, [](const std::string& s) {
    if (s == "mean") return biomarkers::Aggregation::Mean;
    if (s == "median") return biomarkers::Aggregation::Median;
    throw ConfigError("expected mean or median");
  });
}
void decode(const json& j, patches3d::DiameterMode& v, const std::string& p) {
  decode_enum(j, v, p, [](const std::string& s) {
    if (s == "equivalent_area") return patches3d::DiameterMode::EquivalentArea;
    if (s == "mean_of_axes") return patches3d::DiameterMode::MeanOfAxes;
    throw ConfigError("expected equivalent_area or mean_of_axes");
  });
}
void decode(const json& j, survival::Ties& v, const std::string& p) {
  decode_enum(j, v, p, [](const std::string& s) {
    if (s == "efron") return survival::Ties::Efron;
    if (s == "breslow") return survival::Ties::Breslow;
    throw ConfigError("expected efron or breslow");
  });
}

// Field lists ----------------------------------------------------------------

template <class F>
void fields(synth::SynthConfig& c, F&& f) {
  f("lumen_radius_mm", c.lumen_radius_mm);
  f("wall_low_slope", c.wall_low_slope);
  f("wall_low_offset_mm", c.wall_low_offset_mm);
  f("wall_high_slope", c.wall_high_slope);
  f("wall_high_offset_mm", c.wall_high_offset_mm);
  f("center_jitter_std_mm", c.center_jitter_std_mm);
  f("adjacent_prob", c.adjacent_prob);
  f("adjacent_scale", c.adjacent_scale);
  f("ellipsoidness", c.ellipsoidness);
  f("patch_size_px", c.patch_size_px);
  f("pixel_spacing_mm", c.pixel_spacing_mm);
  f("supersample", c.supersample);
  f("lumen_hu", c.lumen_hu);
  f("wall_hu", c.wall_hu);
  f("parenchyma_hu", c.parenchyma_hu);
}

template <class F>
void fields(synth::PseudoRealConfig& c, F&& f) {
  f("texture_amplitude_hu", c.texture_amplitude_hu);
  f("texture_correlation_px", c.texture_correlation_px);
  f("gradient_max_hu", c.gradient_max_hu);
  f("vessel_prob", c.vessel_prob);
  f("vessel_hu", c.vessel_hu);
  f("vessel_scale", c.vessel_scale);
  f("lumen_hu", c.lumen_hu);
  f("psf_sigma_px", c.psf_sigma_px);
}

template <class F>
void fields(augment::AugmentConfig& c, F&& f) {
  f("noise_std_hu", c.noise_std_hu);
  f("blur_sigma_px", c.blur_sigma_px);
  f("flip_prob", c.flip_prob);
  f("real_scale", c.real_scale);
  f("crop_size_px", c.crop_size_px);
}

template <class F>
void fields(ExtractorConfig& c, F&& f) {
  f("variant", c.variant);
  f("weights_path", c.weights_path);
  f("seed", c.seed);
}

template <class F>
void fields(perceptual::LossConfig& c, F&& f) {
  f("feature_layers", c.feature_layers);
  f("style_layers", c.style_layers);
  f("style_cumulative", c.style_cumulative);
  f("reg_lambda", c.reg_lambda);
  f("feature_weight", c.feature_weight);
  f("style_weight", c.style_weight);
  f("distance", c.distance);
}

template <class F>
void fields(nets::RefinerConfig& c, F&& f) {
  f("features", c.features);
  f("blocks", c.blocks);
}

template <class F>
void fields(nets::RefinerTrainConfig& c, F&& f) {
  f("steps", c.steps);
  f("batch_size", c.batch_size);
  f("learning_rate", c.learning_rate);
  f("checkpoint_every", c.checkpoint_every);
}

template <class F>
void fields(nets::CnrConfig& c, F&& f) {
  f("widths", c.widths);
  f("hidden", c.hidden);
  f("input_size", c.input_size);
}

template <class F>
void fields(nets::CnrTrainConfig& c, F&& f) {
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("learning_rate", c.learning_rate);
  f("validation_fraction", c.validation_fraction);
  f("early_stop_patience", c.early_stop_patience);
}

template <class F>
void fields(fwhm::FwhmConfig& c, F&& f) {
  f("n_rays", c.n_rays);
  f("ray_step_px", c.ray_step_px);
  f("max_ray_fraction", c.max_ray_fraction);
  f("min_prominence_hu", c.min_prominence_hu);
  f("max_wall_extent_mm", c.max_wall_extent_mm);
  f("min_valid_fraction", c.min_valid_fraction);
  f("seed_search_radius_mm", c.seed_search_radius_mm);
  f("seed_smoothing_px", c.seed_smoothing_px);
  f("recenter_passes", c.recenter_passes);
}

template <class F>
void fields(patches3d::SeriesConfig& c, F&& f) {
  f("prune_mm", c.prune_mm);
  f("step_mm", c.step_mm);
  f("max_missing_fraction", c.max_missing_fraction);
  f("diameter", c.diameter);
}

template <class F>
void fields(BiomarkerConfig& c, F&& f) {
  f("aggregation", c.aggregation);
}

template <class F>
void fields(survival::CoxOptions& c, F&& f) {
  f("max_iter", c.max_iter);
  f("grad_tol", c.grad_tol);
  f("max_halvings", c.max_halvings);
  f("ties", c.ties);
  f("separation_limit", c.separation_limit);
}

template <class F>
void fields(CohortConfig& c, F&& f) {
  f("patients", c.patients);
  f("dilation_log_hazard", c.dilation_log_hazard);
  f("dilation_effect", c.dilation_effect);
  f("baseline_hazard_per_day", c.baseline_hazard_per_day);
  f("censor_fraction", c.censor_fraction);
  f("age_mean", c.age_mean);
  f("age_sd", c.age_sd);
  f("female_prob", c.female_prob);
  f("smoker_prob", c.smoker_prob);
  f("fvc_missing_prob", c.fvc_missing_prob);
  f("dlco_missing_prob", c.dlco_missing_prob);
  f("voxel_mm", c.voxel_mm);
  f("supersample", c.supersample);
}

template <class S>
json write_section(const S& s) {
  json j = json::object();
  fields(const_cast<S&>(s), [&](const char* key, const auto& v) { j[key] = encode(v); });
  return j;
}

template <class S>
void read_section(const json& j, S& s, const std::string& path) {
  if (!j.is_object()) bad(path, "expected an object");
  std::set<std::string> known;
  fields(s, [&](const char* key, auto& v) {
    known.insert(key);
    if (j.contains(key)) decode(j.at(key), v, path + "." + key);
  });
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) bad(path + "." + k, "unknown key");
}

template <class F>
void sections(RunConfig& c, F&& f) {
  f("synth", c.synth);
  f("pseudoreal", c.pseudoreal);
  f("augment", c.augment);
  f("extractor", c.extractor);
  f("loss", c.loss);
  f("refiner", c.refiner);
  f("train_refiner", c.train_refiner);
  f("cnr", c.cnr);
  f("train_cnr", c.train_cnr);
  f("fwhm", c.fwhm);
  f("series", c.series);
  f("biomarkers", c.biomarkers);
  f("survival", c.survival);
  f("cohort", c.cohort);
}

void set_path(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
  }
  (*node)[parts.back()] = value;
}

}  // namespace

json to_json(const RunConfig& config) {
  json j = json::object();
  j["schema_version"] = config.schema_version;
  j["seed"] = config.seed;
  sections(const_cast<RunConfig&>(config),
           [&](const char* key, const auto& s) { j[key] = write_section(s); });
  return j;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  if (!j.contains("schema_version")) throw ConfigError("config key 'schema_version' is required");
  decode(j.at("schema_version"), c.schema_version, "schema_version");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
  if (j.contains("seed")) decode(j.at("seed"), c.seed, "seed");
  std::set<std::string> known{"schema_version", "seed"};
  sections(c, [&](const char* key, auto& s) {
    known.insert(key);
    if (j.contains(key)) read_section(j.at(key), s, key);
  });
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) bad(k, "unknown key");

  c.synth.validate();
  c.pseudoreal.validate();
  c.augment.validate();
  c.refiner.validate();
  c.train_refiner.validate();
  c.cnr.validate();
  c.train_cnr.validate();
  c.fwhm.validate();
  if (c.cohort.patients < 2) throw ConfigError("cohort.patients must be >= 2");
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides) {
  json j = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError(path->string() + ": cannot open config file");
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(path->string() + ": invalid JSON: " + e.what());
    }
  } else {
    j["schema_version"] = kSchemaVersion;
  }
  for (const auto& o : overrides) set_path(j, o);
  RunConfig c = from_json(j);
  if (path && !c.extractor.weights_path.empty()) {
    std::filesystem::path w(c.extractor.weights_path);
    if (w.is_relative()) c.extractor.weights_path = (path->parent_path() / w).lexically_normal().string();
  }
  return c;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace atn::app

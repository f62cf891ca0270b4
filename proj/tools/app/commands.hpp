#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atn/dataset.hpp"
#include "atn/synthgen.hpp"
#include "config.hpp"

namespace atn::app {

namespace fs = std::filesystem;

struct Context {
  std::string command;
  RunConfig config;
  bool deterministic = false;
  fs::path out;
  std::map<std::string, std::string> arguments;  // recorded in the run manifest
};

/// out/run_manifest.json: command, arguments, full config, config hash, seed.
void write_run_manifest(const Context& ctx);

/// One augmentation draw per item (seed hash(seed, i)) down to the crop
/// size; bundles already at the crop size pass through unchanged.
std::vector<synth::Patch> training_inputs(const io::Bundle& bundle, const RunConfig& config);

io::Bundle to_bundle(const std::vector<synth::Patch>& patches);

/// A bundle directory, or a directory of per-patient bundle directories.
struct Collection {
  std::vector<std::string> names;  // "" for a single bundle
  std::vector<fs::path> dirs;
};
Collection list_collection(const fs::path& dir);

/// id,R_A,...,has_adjacent plus one extra column; NA fields for failures.
void write_measurements(const fs::path& csv, const std::vector<std::optional<AirwayLabel>>& labels,
                        const std::string& extra_name, const std::vector<std::string>& extra);
std::vector<std::optional<AirwayLabel>> read_measurements(const fs::path& csv);

void synth_generate(const Context& ctx, std::uint64_t count, synth::Domain domain);
void train_refiner(const Context& ctx, const fs::path& synthetic, const fs::path& real);
void refine(const Context& ctx, const fs::path& checkpoint, const fs::path& input, bool augment);
void train_cnr(const Context& ctx, const fs::path& data);
void measure(const Context& ctx, const fs::path& checkpoint, const fs::path& input);
void fwhm(const Context& ctx, const fs::path& input);
void simulate_cohort(const Context& ctx);
void extract_patches(const Context& ctx, const std::optional<fs::path>& cohort,
                     const std::optional<fs::path>& volume,
                     const std::optional<fs::path>& centerlines);
void compute_biomarkers(const Context& ctx, const fs::path& patches, const fs::path& measurements,
                        const std::string& method);
void run_survival(const Context& ctx, const fs::path& clinical,
                  const std::vector<fs::path>& biomarker_csvs);
void ablate_style_layers(const Context& ctx, const fs::path& synthetic, const fs::path& real,
                         int samples);
void plot_loss(const Context& ctx, const std::vector<fs::path>& histories);
void plot_pairs(const Context& ctx, const fs::path& input, const fs::path& refined, int count);
void plot_overlay(const Context& ctx, const fs::path& input,
                  const std::vector<fs::path>& measurements, int count);

}  // namespace atn::app

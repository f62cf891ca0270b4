// atn: command line front end for the airway pipeline.

#include <torch/torch.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "app/commands.hpp"
#include "atn/errors.hpp"

namespace {

using atn::app::Context;
namespace fs = std::filesystem;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << "error: kind=" << kind << " exit=" << code << " message=" << one_line(message)
            << "\n";
  return code;
}

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. train_refiner.steps=200");
  cmd->add_option("--seed", c.seed, "Master seed (overrides config seed)");
  cmd->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-reproducible execution");
  cmd->add_option("--out", c.out, "Output directory")->required();
}

Context make_context(const std::string& name, const Common& c,
                     std::map<std::string, std::string> arguments) {
  Context ctx;
  ctx.command = name;
  std::optional<fs::path> path;
  if (c.config) path = fs::path(*c.config);
  ctx.config = atn::app::load_config(path, c.overrides);
  if (c.seed) ctx.config.seed = *c.seed;
  ctx.deterministic = c.deterministic;
  ctx.out = c.out;
  arguments["out"] = c.out;
  if (c.config) arguments["config"] = *c.config;
  for (std::size_t i = 0; i < c.overrides.size(); ++i)
    arguments["set." + std::to_string(i)] = c.overrides[i];
  ctx.arguments = std::move(arguments);
  if (c.deterministic) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
  return ctx;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ";") + x;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic airway refinement, measurement and survival pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "atn 0.1.0");

  Common common;
  std::uint64_t count = 0;
  std::string synthetic, real, checkpoint, input, data, refined, method, clinical;
  std::optional<std::string> cohort, volume, centerlines;
  std::vector<std::string> biomarker_files, histories, measurements;
  bool augment = false;
  int samples = 8;
  std::string kind;

  auto* gen = app.add_subcommand("synth-generate", "Render labelled synthetic patches");
  add_common(gen, common);
  gen->add_option("--count", count, "Number of patches")->required();

  auto* pgen = app.add_subcommand("pseudoreal-generate", "Render labelled pseudo-real patches");
  add_common(pgen, common);
  pgen->add_option("--count", count, "Number of patches")->required();

  auto* trf = app.add_subcommand("train-refiner", "Train the refiner on perceptual losses");
  add_common(trf, common);
  trf->add_option("--synthetic", synthetic, "Synthetic bundle")->required();
  trf->add_option("--real", real, "Style-target bundle")->required();

  auto* ref = app.add_subcommand("refine", "Apply a trained refiner to a bundle");
  add_common(ref, common);
  ref->add_option("--checkpoint", checkpoint, "Refiner checkpoint")->required();
  ref->add_option("--input", input, "Input bundle")->required();
  ref->add_flag("--augment", augment, "Augment each patch once before refining (training sets)");

  auto* tcnr = app.add_subcommand("train-cnr", "Train the measurement regressor");
  add_common(tcnr, common);
  tcnr->add_option("--data", data, "Labelled bundle")->required();

  auto* meas = app.add_subcommand("measure", "Measure patches with a trained regressor");
  add_common(meas, common);
  meas->add_option("--checkpoint", checkpoint, "CNR checkpoint")->required();
  meas->add_option("--input", input, "Bundle or directory of bundles")->required();

  auto* fw = app.add_subcommand("fwhm", "Measure patches with the half-maximum baseline");
  add_common(fw, common);
  fw->add_option("--input", input, "Bundle or directory of bundles")->required();

  auto* sim = app.add_subcommand("simulate-cohort", "Simulate airway-tree volumes and survival data");
  add_common(sim, common);

  auto* ext = app.add_subcommand("extract-patches", "Sample orthogonal patches along centrelines");
  add_common(ext, common);
  ext->add_option("--cohort", cohort, "Cohort directory from simulate-cohort");
  ext->add_option("--volume", volume, "Volume directory");
  ext->add_option("--centerlines", centerlines, "Centreline CSV");

  auto* bio = app.add_subcommand("biomarkers", "Segment series and patient biomarkers");
  add_common(bio, common);
  bio->add_option("--patches", input, "Output of extract-patches")->required();
  bio->add_option("--measurements", data, "Output of measure or fwhm")->required();
  bio->add_option("--method", method, "Method tag, e.g. FWHM")->required();

  auto* surv = app.add_subcommand("survival", "Cox models and concordance per biomarker");
  add_common(surv, common);
  surv->add_option("--clinical", clinical, "Clinical CSV")->required();
  surv->add_option("--biomarkers", biomarker_files, "Patient biomarker CSVs")->required();

  auto* abl = app.add_subcommand("ablate-style-layers", "Cumulative style-layer sweep");
  add_common(abl, common);
  abl->add_option("--synthetic", synthetic, "Synthetic bundle")->required();
  abl->add_option("--real", real, "Style-target bundle")->required();
  abl->add_option("--samples", samples, "Patches shown per grid row");

  auto* plt = app.add_subcommand("plot", "Loss curves, refined pairs and ellipse overlays");
  add_common(plt, common);
  plt->add_option("--kind", kind, "loss | pairs | overlay")
      ->required()
      ->check(CLI::IsMember({"loss", "pairs", "overlay"}));
  plt->add_option("--history", histories, "Refiner history CSVs (loss)");
  plt->add_option("--input", input, "Bundle (pairs, overlay)");
  plt->add_option("--refined", refined, "Refined bundle (pairs)");
  plt->add_option("--measurements", measurements, "Measurement CSVs (overlay)");
  plt->add_option("--count", samples, "Patches to draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", 2, e.what());
  }

  try {
    if (gen->parsed()) {
      atn::app::synth_generate(make_context("synth-generate", common, {{"count", std::to_string(count)}}),
                               count, atn::synth::Domain::Synthetic);
    } else if (pgen->parsed()) {
      atn::app::synth_generate(
          make_context("pseudoreal-generate", common, {{"count", std::to_string(count)}}), count,
          atn::synth::Domain::PseudoReal);
    } else if (trf->parsed()) {
      atn::app::train_refiner(
          make_context("train-refiner", common, {{"synthetic", synthetic}, {"real", real}}),
          synthetic, real);
    } else if (ref->parsed()) {
      atn::app::refine(make_context("refine", common,
                                    {{"checkpoint", checkpoint},
                                     {"input", input},
                                     {"augment", augment ? "true" : "false"}}),
                       checkpoint, input, augment);
    } else if (tcnr->parsed()) {
      atn::app::train_cnr(make_context("train-cnr", common, {{"data", data}}), data);
    } else if (meas->parsed()) {
      atn::app::measure(
          make_context("measure", common, {{"checkpoint", checkpoint}, {"input", input}}),
          checkpoint, input);
    } else if (fw->parsed()) {
      atn::app::fwhm(make_context("fwhm", common, {{"input", input}}), input);
    } else if (sim->parsed()) {
      atn::app::simulate_cohort(make_context("simulate-cohort", common, {}));
    } else if (ext->parsed()) {
      std::map<std::string, std::string> args;
      if (cohort) args["cohort"] = *cohort;
      if (volume) args["volume"] = *volume;
      if (centerlines) args["centerlines"] = *centerlines;
      auto opt = [](const std::optional<std::string>& s) {
        return s ? std::optional<fs::path>(*s) : std::nullopt;
      };
      atn::app::extract_patches(make_context("extract-patches", common, args), opt(cohort),
                                opt(volume), opt(centerlines));
    } else if (bio->parsed()) {
      atn::app::compute_biomarkers(
          make_context("biomarkers", common,
                       {{"patches", input}, {"measurements", data}, {"method", method}}),
          input, data, method);
    } else if (surv->parsed()) {
      std::vector<fs::path> files(biomarker_files.begin(), biomarker_files.end());
      atn::app::run_survival(make_context("survival", common,
                                          {{"clinical", clinical}, {"biomarkers", join(biomarker_files)}}),
                             clinical, files);
    } else if (abl->parsed()) {
      atn::app::ablate_style_layers(
          make_context("ablate-style-layers", common,
                       {{"synthetic", synthetic}, {"real", real}, {"samples", std::to_string(samples)}}),
          synthetic, real, samples);
    } else if (plt->parsed()) {
      auto ctx = make_context("plot", common,
                              {{"kind", kind},
                               {"history", join(histories)},
                               {"input", input},
                               {"refined", refined},
                               {"measurements", join(measurements)}});
      if (kind == "loss") {
        atn::app::plot_loss(ctx, {histories.begin(), histories.end()});
      } else if (kind == "pairs") {
        if (input.empty() || refined.empty())
          throw atn::ConfigError("plot --kind pairs needs --input and --refined");
        atn::app::plot_pairs(ctx, input, refined, samples);
      } else {
        if (input.empty()) throw atn::ConfigError("plot --kind overlay needs --input");
        atn::app::plot_overlay(ctx, input, {measurements.begin(), measurements.end()}, samples);
      }
    }
  } catch (const atn::Error& e) {
    const char* kinds[] = {"config", "data", "numerical"};
    return fail(kinds[static_cast<int>(e.kind())], atn::exit_code(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", 3, e.what());
  } catch (const c10::Error& e) {
    return fail("numerical", 4, e.what_without_backtrace());
  }
  return 0;
}

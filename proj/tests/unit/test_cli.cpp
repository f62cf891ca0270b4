#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "atn/errors.hpp"
#include "atn/nets.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace atn;
using namespace atn::app;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Run {
  int status = -1;
  std::string err;
};

Run atn_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(ATN_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

std::string config_error(const json& j) {
  try {
    from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("atn_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  const json defaults = to_json(RunConfig{});
  CHECK(to_json(from_json(defaults)) == defaults);
  CHECK(defaults.at("schema_version") == kSchemaVersion);

  json j = defaults;
  j["bogus"] = 1;
  CHECK(config_error(j).find("'bogus'") != std::string::npos);
  j = defaults;
  j["loss"]["bogus"] = 1;
  CHECK(config_error(j).find("'loss.bogus'") != std::string::npos);
  j = defaults;
  j["loss"]["style_weight"] = "heavy";
  CHECK(config_error(j).find("loss.style_weight") != std::string::npos);
  j = defaults;
  j.erase("schema_version");
  CHECK_FALSE(config_error(j).empty());
  j = defaults;
  j["schema_version"] = kSchemaVersion + 1;
  CHECK_FALSE(config_error(j).empty());
  j = defaults;
  j["train_refiner"]["learning_rate"] = -1.0;
  CHECK_FALSE(config_error(j).empty());
}

TEST_CASE("overrides and config files") {
  const RunConfig c = load_config(std::nullopt, {"train_refiner.steps=7", "loss.distance=\"l2\"",
                                                 "extractor.variant=hermetic"});
  CHECK(c.train_refiner.steps == 7);
  CHECK(c.loss.distance == perceptual::Distance::L2);
  CHECK_THROWS_AS(load_config(std::nullopt, {"train_refiner.stepz=7"}), ConfigError);

  const fs::path dir = scratch_dir("config");
  json j = to_json(RunConfig{});
  j["extractor"]["weights_path"] = "weights/vgg16.ckpt";
  j["seed"] = 42;
  std::ofstream(dir / "run.json") << j.dump();
  const RunConfig f = load_config(dir / "run.json", {});
  CHECK(f.seed == 42);
  CHECK(fs::path(f.extractor.weights_path) == dir / "weights" / "vgg16.ckpt");

  const json a = to_json(RunConfig{});
  json b = a;
  b["seed"] = 1;
  CHECK(config_hash(a) == config_hash(to_json(RunConfig{})));
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
  fs::remove_all(dir);
}

TEST_CASE("refine keeps count and bundle schema") {
  const fs::path dir = scratch_dir("refine");
  Context ctx;
  ctx.command = "synth-generate";
  ctx.out = dir / "input";
  synth_generate(ctx, 5, synth::Domain::Synthetic);

  const nets::RefinerConfig arch{4, 1};
  auto model = nets::make_refiner(arch, 1);
  nets::save_refiner(dir / "r.ckpt", model, arch, json::object(), {});
  ctx.command = "refine";
  ctx.out = dir / "refined";
  refine(ctx, dir / "r.ckpt", dir / "input", false);

  const io::Bundle in = io::read_bundle(dir / "input");
  const io::Bundle out = io::read_bundle(dir / "refined");
  CHECK(out.count == 5);
  CHECK(out.height == 32);
  CHECK(out.width == 32);
  REQUIRE(out.has_labels());
  CHECK(out.labels[3].r_a == in.labels[3].r_a);
  CHECK(fs::exists(dir / "refined" / "run_manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("loss plot per learning rate") {
  const fs::path dir = scratch_dir("plot");
  std::vector<fs::path> histories;
  for (const char* lr : {"0.001", "0.1"}) {
    const fs::path run = dir / (std::string("lr") + lr);
    Context ctx;
    ctx.command = "train-refiner";
    ctx.out = run;
    ctx.config.train_refiner.learning_rate = std::stod(lr);
    write_run_manifest(ctx);
    std::ofstream(run / "history.csv") << "step,total,feature,style,reg\n1,3,1,1,1\n2,2,1,0.5,0.5\n";
    histories.push_back(run / "history.csv");
  }
  Context ctx;
  ctx.command = "plot";
  ctx.out = dir / "plots";
  plot_loss(ctx, histories);
  CHECK(fs::exists(dir / "plots" / "loss_LR_0.001.png"));
  CHECK(fs::exists(dir / "plots" / "loss_LR_0.1.png"));
  CHECK(fs::exists(dir / "plots" / "loss_overlay.png"));
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch_dir("exit");
  Run r = atn_cli("no-such-command --out " + dir.string(), dir);
  CHECK(r.status == 2);
  CHECK(r.err.rfind("error: kind=config exit=2 ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  r = atn_cli("fwhm --input " + (dir / "missing").string() + " --out " + (dir / "o").string(), dir);
  CHECK(r.status == 3);
  CHECK(r.err.rfind("error: kind=data exit=3 ", 0) == 0);

  r = atn_cli("synth-generate --count 3 --set loss.bogus=1 --out " + (dir / "o").string(), dir);
  CHECK(r.status == 2);

  r = atn_cli("synth-generate --count 3 --seed 9 --deterministic --out " + (dir / "gen").string(), dir);
  CHECK(r.status == 0);
  const json m = json::parse(slurp(dir / "gen" / "run_manifest.json"));
  CHECK(m.at("seed") == 9);
  CHECK(m.at("command") == "synth-generate");
  CHECK(m.at("config_hash") == config_hash(m.at("config")));
  CHECK(io::read_bundle(dir / "gen").count == 3);
  fs::remove_all(dir);
}

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "atn/augment.hpp"
#include "atn/biomarkers.hpp"
#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/nets.hpp"
#include "atn/patches3d.hpp"
#include "atn/random.hpp"
#include "atn/survival.hpp"
#include "cohort.hpp"
#include "plot.hpp"

namespace atn::app {

using nlohmann::json;

namespace {

constexpr std::uint64_t kAugmentStream = 40;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::unique_ptr<perceptual::ConvExtractor> extractor(const RunConfig& c) {
  return perceptual::make_extractor(c.extractor.variant, c.extractor.weights_path, c.extractor.seed);
}

std::vector<Image> images_of(const std::vector<synth::Patch>& patches) {
  std::vector<Image> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(p.image);
  return out;
}

bool is_bundle(const fs::path& dir) { return fs::exists(dir / "manifest.txt"); }

}  // namespace

void write_run_manifest(const Context& ctx) {
  ensure_dir(ctx.out);
  const json cfg = to_json(ctx.config);
  json m;
  m["command"] = ctx.command;
  m["arguments"] = ctx.arguments;
  m["config"] = cfg;
  m["config_hash"] = config_hash(cfg);
  m["seed"] = ctx.config.seed;
  m["deterministic"] = ctx.deterministic;
  m["schema_version"] = kSchemaVersion;
  write_text(ctx.out / "run_manifest.json", m.dump(2) + "\n");
}

std::vector<synth::Patch> training_inputs(const io::Bundle& bundle, const RunConfig& config) {
  std::vector<synth::Patch> out;
  out.reserve(bundle.count);
  const int crop = config.augment.crop_size_px;
  for (std::uint64_t i = 0; i < bundle.count; ++i) {
    if (bundle.height == crop && bundle.width == crop) {
      out.push_back(bundle.patch(i));
    } else {
      out.push_back(augment::augment(bundle.patch(i), config.augment, false,
                                     derive_seed(config.seed, i, kAugmentStream)));
    }
  }
  return out;
}

io::Bundle to_bundle(const std::vector<synth::Patch>& patches) {
  io::Bundle b;
  for (const auto& p : patches) b.push_back(p);
  return b;
}

Collection list_collection(const fs::path& dir) {
  Collection c;
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
  if (is_bundle(dir)) {
    c.names.push_back("");
    c.dirs.push_back(dir);
    return c;
  }
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && is_bundle(e.path())) subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  if (subs.empty()) throw IoError(dir.string(), "contains no dataset bundles");
  for (const auto& s : subs) {
    c.names.push_back(s.filename().string());
    c.dirs.push_back(s);
  }
  return c;
}

void write_measurements(const fs::path& csv, const std::vector<std::optional<AirwayLabel>>& labels,
                        const std::string& extra_name, const std::vector<std::string>& extra) {
  io::CsvTable t;
  t.header = io::label_header();
  t.header.push_back(extra_name);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::string> row;
    if (labels[i]) {
      row = io::label_row(i, *labels[i]);
    } else {
      row.assign(t.header.size() - 1, "NA");
      row[0] = std::to_string(i);
    }
    row.push_back(extra.at(i));
    t.rows.push_back(std::move(row));
  }
  io::write_csv(csv, t);
}

std::vector<std::optional<AirwayLabel>> read_measurements(const fs::path& csv) {
  const io::CsvTable t = io::read_csv(csv);
  const std::size_t c_ra = t.column("R_A");
  std::vector<std::optional<AirwayLabel>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][c_ra] == "NA") {
      out.emplace_back();
    } else {
      out.emplace_back(io::parse_label_row(t, r));
    }
  }
  return out;
}

void synth_generate(const Context& ctx, std::uint64_t count, synth::Domain domain) {
  if (count == 0) throw ConfigError("--count must be >= 1");
  synth::GenerateOptions g;
  g.count = count;
  g.seed = ctx.config.seed;
  g.domain = domain;
  g.synth = ctx.config.synth;
  g.pseudoreal = ctx.config.pseudoreal;
  synth::generate_dataset(g, ctx.out);
  write_run_manifest(ctx);
}

void train_refiner(const Context& ctx, const fs::path& synthetic, const fs::path& real) {
  const RunConfig& c = ctx.config;
  const io::Bundle syn = io::read_bundle(synthetic);
  const io::Bundle rea = io::read_bundle(real);
  const auto phi = extractor(c);
  nets::BundleSampler s(syn, c.augment, false, derive_seed(c.seed, 0, 51));
  nets::BundleSampler r(rea, c.augment, true, derive_seed(c.seed, 0, 52));
  nets::RefinerTrainConfig tc = c.train_refiner;
  tc.seed = c.seed;
  ensure_dir(ctx.out / "checkpoints");
  const json snapshot = to_json(c);
  auto result = nets::train_refiner(
      s, r, *phi, c.loss, c.refiner, tc,
      [&](int step, nets::Refiner& model, const std::vector<nets::RefinerHistoryRow>& history) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%06d.ckpt", step);
        nets::save_refiner(ctx.out / "checkpoints" / name, model, c.refiner, snapshot, history);
      });
  nets::save_refiner(ctx.out / "refiner.ckpt", result.model, c.refiner, snapshot, result.history);
  write_text(ctx.out / "history.csv", nets::refiner_history_csv(result.history));
  write_run_manifest(ctx);
  if (result.status == nets::TrainStatus::Diverged)
    throw NumericalError("refiner loss became non-finite after step " +
                         std::to_string(result.history.size()) +
                         "; last good weights saved to refiner.ckpt");
}

void refine(const Context& ctx, const fs::path& checkpoint, const fs::path& input, bool augment) {
  auto loaded = nets::load_refiner(checkpoint);
  const io::Bundle in = io::read_bundle(input);
  std::vector<synth::Patch> prepared;
  if (augment) {
    prepared = training_inputs(in, ctx.config);
  } else {
    for (std::uint64_t i = 0; i < in.count; ++i)
      prepared.push_back(augment::prepare(in.patch(i), ctx.config.augment.crop_size_px));
  }
  const auto refined = nets::refine(loaded.model, images_of(prepared));
  for (std::size_t i = 0; i < prepared.size(); ++i) prepared[i].image = refined[i];
  io::Bundle out = to_bundle(prepared);
  out.extra["kind"] = "refined";
  out.extra["units"] = "mm";
  io::write_bundle(ctx.out, out);
  write_run_manifest(ctx);
}

void train_cnr(const Context& ctx, const fs::path& data) {
  const RunConfig& c = ctx.config;
  const io::Bundle b = io::read_bundle(data);
  if (!b.has_labels()) throw DataError(data.string() + ": CNR training needs labels.csv");
  const auto inputs = training_inputs(b, c);
  std::vector<AirwayLabel> labels;
  for (const auto& p : inputs) labels.push_back(*p.label);
  nets::CnrTrainConfig tc = c.train_cnr;
  tc.seed = c.seed;
  nets::CnrConfig arch = c.cnr;
  auto result = nets::train_cnr(images_of(inputs), labels, arch, tc);
  ensure_dir(ctx.out);
  nets::save_cnr(ctx.out / "cnr.ckpt", result.model, arch, to_json(c), result.history);
  write_text(ctx.out / "history.csv", nets::cnr_history_csv(result.history));
  write_run_manifest(ctx);
}

void measure(const Context& ctx, const fs::path& checkpoint, const fs::path& input) {
  auto loaded = nets::load_cnr(checkpoint);
  const Collection col = list_collection(input);
  for (std::size_t k = 0; k < col.dirs.size(); ++k) {
    const io::Bundle b = io::read_bundle(col.dirs[k]);
    std::vector<Image> imgs;
    for (std::uint64_t i = 0; i < b.count; ++i)
      imgs.push_back(augment::prepare(b.patch(i), loaded.arch.input_size).image);
    const auto decoded = nets::measure(loaded.model, imgs);
    std::vector<std::optional<AirwayLabel>> labels;
    std::vector<std::string> clamped;
    for (const auto& d : decoded) {
      labels.emplace_back(d.label);
      clamped.push_back(d.clamped ? "1" : "0");
    }
    const fs::path dir = ctx.out / col.names[k];
    ensure_dir(dir);
    write_measurements(dir / "measurements.csv", labels, "clamped", clamped);
  }
  write_run_manifest(ctx);
}

void fwhm(const Context& ctx, const fs::path& input) {
  const Collection col = list_collection(input);
  for (std::size_t k = 0; k < col.dirs.size(); ++k) {
    const io::Bundle b = io::read_bundle(col.dirs[k]);
    std::vector<std::optional<AirwayLabel>> labels;
    std::vector<std::string> fraction;
    for (std::uint64_t i = 0; i < b.count; ++i) {
      try {
        const auto r = fwhm::measure_fwhm(b.image(i), b.pixel_spacing_mm, ctx.config.fwhm);
        labels.emplace_back(r.label);
        fraction.push_back(io::format_double(r.valid_ray_fraction));
      } catch (const NumericalError&) {
        labels.emplace_back();
        fraction.push_back("NA");
      }
    }
    const fs::path dir = ctx.out / col.names[k];
    ensure_dir(dir);
    write_measurements(dir / "measurements.csv", labels, "valid_ray_fraction", fraction);
  }
  write_run_manifest(ctx);
}

void simulate_cohort(const Context& ctx) {
  write_cohort(ctx.config.cohort, ctx.config.seed, ctx.out);
  write_run_manifest(ctx);
}

namespace {

void extract_one(const fs::path& volume_dir, const fs::path& centerlines_csv,
                 const patches3d::SeriesConfig& series, const fs::path& out) {
  const auto volume = patches3d::read_volume(volume_dir);
  const auto segments = patches3d::read_centerlines(centerlines_csv);
  io::Bundle b;
  io::CsvTable pos;
  pos.header = {"id", "segment_id", "position", "arclength_mm", "x_mm", "y_mm", "z_mm"};
  for (const auto& seg : segments) {
    patches3d::validate(seg);
    const auto points = patches3d::sample_positions(seg, series);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& sp = points[k];
      if (!volume.contains(sp.point)) {
        throw DataError("segment " + std::to_string(seg.segment_id) +
                        " leaves the volume at arclength " + io::format_double(sp.arclength));
      }
      b.push_back({patches3d::extract_patch(volume, sp.point, sp.tangent), 0.5, std::nullopt});
      pos.rows.push_back({std::to_string(b.count - 1), std::to_string(seg.segment_id),
                          std::to_string(k), io::format_double(sp.arclength),
                          io::format_double(sp.point[0]), io::format_double(sp.point[1]),
                          io::format_double(sp.point[2])});
    }
  }
  if (b.count == 0) throw DataError(centerlines_csv.string() + ": no measurable positions");
  b.extra["kind"] = "orthogonal";
  io::write_bundle(out, b);
  io::write_csv(out / "positions.csv", pos);
  patches3d::write_centerlines(out / "centerlines.csv", segments);
}

}  // namespace

void extract_patches(const Context& ctx, const std::optional<fs::path>& cohort,
                     const std::optional<fs::path>& volume,
                     const std::optional<fs::path>& centerlines) {
  if (cohort) {
    if (volume || centerlines) throw ConfigError("give either --cohort or --volume/--centerlines");
    std::vector<fs::path> patients;
    for (const auto& e : fs::directory_iterator(*cohort / "patients"))
      if (e.is_directory()) patients.push_back(e.path());
    std::sort(patients.begin(), patients.end());
    if (patients.empty()) throw IoError(cohort->string(), "cohort has no patients");
    for (const auto& p : patients)
      extract_one(p / "volume", p / "centerlines.csv", ctx.config.series,
                  ctx.out / p.filename());
  } else {
    if (!volume || !centerlines) throw ConfigError("--volume and --centerlines are both required");
    extract_one(*volume, *centerlines, ctx.config.series, ctx.out);
  }
  write_run_manifest(ctx);
}

void compute_biomarkers(const Context& ctx, const fs::path& patches, const fs::path& measurements,
                        const std::string& method) {
  if (method.empty() || method.find(',') != std::string::npos)
    throw ConfigError("--method must be a non-empty name without commas");
  const Collection col = list_collection(patches);
  std::vector<biomarkers::PatientBiomarker> rows;
  io::CsvTable excluded;
  excluded.header = {"patient_id", "segment_id", "reason"};
  ensure_dir(ctx.out / "series");
  for (std::size_t k = 0; k < col.dirs.size(); ++k) {
    const std::string pid = col.names[k].empty() ? "patient" : col.names[k];
    const auto segments = patches3d::read_centerlines(col.dirs[k] / "centerlines.csv");
    const io::CsvTable pos = io::read_csv(col.dirs[k] / "positions.csv");
    const auto labels = read_measurements(measurements / col.names[k] / "measurements.csv");
    if (labels.size() != pos.rows.size())
      throw DataError(pid + ": " + std::to_string(labels.size()) + " measurements for " +
                      std::to_string(pos.rows.size()) + " positions");
    const std::size_t c_seg = pos.column("segment_id");
    std::vector<patches3d::SegmentSeries> series;
    for (const auto& seg : segments) {
      const auto points = patches3d::sample_positions(seg, ctx.config.series);
      std::vector<std::optional<AirwayLabel>> meas;
      for (std::size_t r = 0; r < pos.rows.size(); ++r)
        if (io::parse_int(pos.rows[r][c_seg], "segment_id") == seg.segment_id)
          meas.push_back(labels[r]);
      if (meas.size() != points.size())
        throw DataError(pid + ": segment " + std::to_string(seg.segment_id) +
                        " positions do not match the series configuration");
      const auto outcome =
          patches3d::assemble_series(seg, points, meas, method, ctx.config.series);
      if (outcome.series) {
        series.push_back(*outcome.series);
      } else {
        excluded.rows.push_back({pid, std::to_string(seg.segment_id), outcome.exclusion_reason});
      }
    }
    patches3d::write_series_csv(ctx.out / "series" / (pid + ".csv"), series);
    const auto segs = biomarkers::compute_segments(series);
    for (auto& r : biomarkers::aggregate_patient(pid, method, segs)) rows.push_back(std::move(r));
  }
  biomarkers::write_patient_csv(ctx.out / "biomarkers.csv", rows);
  io::write_csv(ctx.out / "exclusions.csv", excluded);
  write_run_manifest(ctx);
}

void run_survival(const Context& ctx, const fs::path& clinical,
                  const std::vector<fs::path>& biomarker_csvs) {
  if (biomarker_csvs.empty()) throw ConfigError("at least one --biomarkers file is required");
  const auto records = survival::read_records(clinical);
  std::vector<biomarkers::PatientBiomarker> values;
  for (const auto& f : biomarker_csvs)
    for (auto& v : biomarkers::read_patient_csv(f)) values.push_back(std::move(v));
  const auto rows =
      survival::analyze(records, values, ctx.config.biomarkers.aggregation, ctx.config.survival);
  ensure_dir(ctx.out);
  survival::write_table(ctx.out / "table.csv", rows);
  survival::write_coefficients(ctx.out / "coefficients.csv", rows);
  write_run_manifest(ctx);
}

void ablate_style_layers(const Context& ctx, const fs::path& synthetic, const fs::path& real,
                         int samples) {
  const RunConfig& c = ctx.config;
  if (samples < 1) throw ConfigError("--samples must be >= 1");
  const io::Bundle syn = io::read_bundle(synthetic);
  const io::Bundle rea = io::read_bundle(real);
  const auto phi = extractor(c);
  std::vector<Image> inputs;
  for (std::uint64_t i = 0; i < std::min<std::uint64_t>(samples, syn.count); ++i)
    inputs.push_back(augment::prepare(syn.patch(i), c.augment.crop_size_px).image);
  std::vector<std::vector<Image>> grid{inputs};
  const json snapshot = to_json(c);
  for (const auto& tap : perceptual::canonical_layers()) {
    if (!phi->has_layer(tap)) continue;
    perceptual::LossConfig loss = c.loss;
    loss.style_layers = {tap};
    loss.style_cumulative = true;
    nets::BundleSampler s(syn, c.augment, false, derive_seed(c.seed, 0, 51));
    nets::BundleSampler r(rea, c.augment, true, derive_seed(c.seed, 0, 52));
    nets::RefinerTrainConfig tc = c.train_refiner;
    tc.seed = c.seed;
    auto result = nets::train_refiner(s, r, *phi, loss, c.refiner, tc);
    const fs::path dir = ctx.out / ("upto_" + tap);
    ensure_dir(dir);
    nets::save_refiner(dir / "refiner.ckpt", result.model, c.refiner, snapshot, result.history);
    write_text(dir / "history.csv", nets::refiner_history_csv(result.history));
    auto refined = nets::refine(result.model, inputs);
    patch_grid({inputs, refined}, 3).save(dir / "grid.png");
    grid.push_back(std::move(refined));
  }
  patch_grid(grid, 3).save(ctx.out / "ablation_grid.png");
  write_run_manifest(ctx);
}

void plot_loss(const Context& ctx, const std::vector<fs::path>& histories) {
  if (histories.empty()) throw ConfigError("at least one --history file is required");
  ensure_dir(ctx.out);
  std::vector<Series> all;
  std::set<std::string> used;
  for (const auto& h : histories) {
    std::ifstream in(h, std::ios::binary);
    if (!in) throw IoError(h.string(), "cannot open history");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto rows = nets::parse_refiner_history(text);
    std::string name = h.parent_path().filename().string();
    const fs::path manifest = h.parent_path() / "run_manifest.json";
    if (fs::exists(manifest)) {
      try {
        std::ifstream m(manifest);
        const json j = json::parse(m);
        name = "LR=" + io::format_double(
                           j.at("config").at("train_refiner").at("learning_rate").get<double>());
      } catch (const json::exception&) {
      }
    }
    if (name.empty()) name = h.stem().string();
    while (used.count(name)) name += "+";
    used.insert(name);
    Series s{name, {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(r.step);
      s.y.push_back(r.total);
    }
    std::string file = name;
    for (char& ch : file)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
    line_chart({s}, "REFINER LOSS " + name, "STEP", "TOTAL LOSS", true)
        .save(ctx.out / ("loss_" + file + ".png"));
    all.push_back(std::move(s));
  }
  line_chart(all, "REFINER LOSS BY LEARNING RATE", "STEP", "TOTAL LOSS", true)
      .save(ctx.out / "loss_overlay.png");
  write_run_manifest(ctx);
}

void plot_pairs(const Context& ctx, const fs::path& input, const fs::path& refined, int count) {
  const io::Bundle a = io::read_bundle(input);
  const io::Bundle b = io::read_bundle(refined);
  if (count < 1) throw ConfigError("--count must be >= 1");
  const auto n = std::min<std::uint64_t>({static_cast<std::uint64_t>(count), a.count, b.count});
  std::vector<Image> top, bottom;
  for (std::uint64_t i = 0; i < n; ++i) {
    top.push_back(augment::prepare(a.patch(i), b.height).image);
    bottom.push_back(b.image(i));
  }
  ensure_dir(ctx.out);
  patch_grid({top, bottom}, 3).save(ctx.out / "pairs.png");
  write_run_manifest(ctx);
}

void plot_overlay(const Context& ctx, const fs::path& input,
                  const std::vector<fs::path>& measurements, int count) {
  const io::Bundle b = io::read_bundle(input);
  if (count < 1) throw ConfigError("--count must be >= 1");
  std::vector<std::vector<std::optional<AirwayLabel>>> sets;
  for (const auto& m : measurements) sets.push_back(read_measurements(m));
  std::vector<EllipseOverlay> items;
  for (std::uint64_t i = 0; i < std::min<std::uint64_t>(count, b.count); ++i) {
    EllipseOverlay o{b.image(i), b.pixel_spacing_mm, {}};
    if (b.has_labels()) o.labels.push_back(b.labels[i]);
    for (const auto& s : sets)
      if (i < s.size() && s[i]) o.labels.push_back(*s[i]);
    items.push_back(std::move(o));
  }
  ensure_dir(ctx.out);
  overlay_grid(items, 3, 6).save(ctx.out / "overlay.png");
  write_run_manifest(ctx);
}

}  // namespace atn::app

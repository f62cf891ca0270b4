#include "atn/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "atn/container.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::nets {

namespace {

torch::nn::Conv2dOptions conv3x3(int in, int out, int stride = 1) {
  return torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1);
}

std::vector<io::NamedArray> to_arrays(torch::nn::Module& module) {
  std::vector<io::NamedArray> out;
  for (const auto& item : module.named_parameters(true)) {
    io::NamedArray a;
    a.name = item.key();
    const auto t = item.value().detach().to(torch::kFloat32).contiguous();
    a.shape.assign(t.sizes().begin(), t.sizes().end());
    a.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    out.push_back(std::move(a));
  }
  return out;
}

void from_arrays(torch::nn::Module& module, const io::Container& c, const std::string& where) {
  torch::NoGradGuard guard;
  auto params = module.named_parameters(true);
  if (params.size() != c.arrays.size())
    throw DataError(where + ": checkpoint holds " + std::to_string(c.arrays.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  for (auto& item : params) {
    const io::NamedArray& a = c.array(item.key());
    std::vector<std::int64_t> shape(item.value().sizes().begin(), item.value().sizes().end());
    if (shape != a.shape) throw ShapeError(where + ": tensor '" + a.name + "' has the wrong shape");
    auto src = torch::from_blob(const_cast<float*>(a.values.data()), a.shape, torch::kFloat32);
    item.value().copy_(src);
  }
}

void restore(torch::nn::Module& module, const std::vector<torch::Tensor>& values) {
  torch::NoGradGuard guard;
  auto params = module.parameters(true);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(values[i]);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  return io::format_double(v);
}

}  // namespace

void RefinerConfig::validate() const {
  if (features < 1) throw ConfigError("refiner features must be >= 1");
  if (blocks < 0) throw ConfigError("refiner blocks must be >= 0");
}

ResidualBlockImpl::ResidualBlockImpl(int features) {
  conv1 = register_module("conv1", torch::nn::Conv2d(conv3x3(features, features)));
  conv2 = register_module("conv2", torch::nn::Conv2d(conv3x3(features, features)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return torch::relu(x + conv2->forward(torch::relu(conv1->forward(x))));
}

RefinerImpl::RefinerImpl(const RefinerConfig& config) {
  config.validate();
  conv_in = register_module("conv_in", torch::nn::Conv2d(conv3x3(1, config.features)));
  blocks = register_module("blocks", torch::nn::Sequential());
  for (int i = 0; i < config.blocks; ++i) blocks->push_back(ResidualBlock(config.features));
  conv_out = register_module(
      "conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.features, 1, 1)));
}

torch::Tensor RefinerImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1) throw ShapeError("refiner input must be [B, 1, H, W]");
  auto h = torch::relu(conv_in->forward(x));
  if (!blocks->is_empty()) h = blocks->forward(h);
  return conv_out->forward(h);
}

void CnrConfig::validate() const {
  if (widths.empty()) throw ConfigError("CNR needs at least one conv block");
  for (int w : widths)
    if (w < 1) throw ConfigError("CNR widths must be >= 1");
  if (hidden < 1) throw ConfigError("CNR hidden width must be >= 1");
  const int factor = 1 << widths.size();
  if (input_size < factor || input_size % factor != 0)
    throw ConfigError("CNR input_size must be a multiple of 2^blocks");
}

CnrImpl::CnrImpl(const CnrConfig& config) : input_size(config.input_size) {
  config.validate();
  trunk = register_module("trunk", torch::nn::Sequential());
  int cin = 1;
  for (int w : config.widths) {
    trunk->push_back(torch::nn::Conv2d(conv3x3(cin, w, 2)));
    trunk->push_back(torch::nn::ReLU());
    cin = w;
  }
  const int side = config.input_size >> config.widths.size();
  fc1 = register_module("fc1", torch::nn::Linear(cin * side * side, config.hidden));
  fc2 = register_module("fc2", torch::nn::Linear(config.hidden, codec::kEncodedSize));
}

torch::Tensor CnrImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != input_size || x.size(3) != input_size)
    throw ShapeError("CNR input must be [B, 1, " + std::to_string(input_size) + ", " +
                     std::to_string(input_size) + "]");
  auto h = trunk->forward(x).flatten(1);
  return fc2->forward(torch::relu(fc1->forward(h)));
}

Refiner make_refiner(const RefinerConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Refiner(config);
}

Cnr make_cnr(const CnrConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Cnr(config);
}

torch::Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw DataError("no images given");
  const int h = images[0].height, w = images[0].width;
  auto t = torch::empty({static_cast<std::int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (const Image& img : images) {
    if (img.height != h || img.width != w)
      throw ShapeError("images in one batch must share a shape");
    std::memcpy(dst, img.pixels.data(), img.pixels.size() * sizeof(float));
    dst += img.pixels.size();
  }
  return t;
}

std::vector<Image> to_images(const torch::Tensor& t) {
  if (t.dim() != 4 || t.size(1) != 1) throw ShapeError("expected a [N, 1, H, W] tensor");
  const auto c = t.detach().to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(c.size(2)), w = static_cast<int>(c.size(3));
  std::vector<Image> out;
  const float* src = c.data_ptr<float>();
  for (std::int64_t i = 0; i < c.size(0); ++i) {
    Image img(h, w);
    std::memcpy(img.pixels.data(), src, img.pixels.size() * sizeof(float));
    src += img.pixels.size();
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> refine(Refiner& model, std::span<const Image> patches) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<Image> out;
  constexpr std::size_t kChunk = 256;
  for (std::size_t i = 0; i < patches.size(); i += kChunk) {
    const auto n = std::min(kChunk, patches.size() - i);
    auto y = model->forward(to_tensor(patches.subspan(i, n)));
    if (!torch::isfinite(y).all().item<bool>())
      throw NumericalError("refiner produced non-finite output");
    for (auto& img : to_images(y)) out.push_back(std::move(img));
  }
  return out;
}

Image refine(Refiner& model, const Image& patch) {
  return refine(model, std::span<const Image>(&patch, 1)).front();
}

BundleSampler::BundleSampler(const io::Bundle& bundle, augment::AugmentConfig config, bool is_real,
                             std::uint64_t seed)
    : bundle_(&bundle), config_(config), is_real_(is_real), seed_(seed) {
  config_.validate();
  if (bundle.count == 0) throw DataError("cannot sample from an empty bundle");
}

Image BundleSampler::draw(std::uint64_t index) const {
  const std::uint64_t item = derive_seed(seed_, index, 11) % bundle_->count;
  return augment::augment(bundle_->patch(item), config_, is_real_, derive_seed(seed_, index, 12))
      .image;
}

void RefinerTrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

std::vector<torch::Tensor> snapshot(torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& p : module.parameters(true)) out.push_back(p.detach().clone());
  return out;
}

RefinerTrainResult train_refiner(const PatchSampler& synthetic, const PatchSampler& real,
                                 const perceptual::FeatureExtractor& phi,
                                 const perceptual::LossConfig& loss, const RefinerConfig& arch,
                                 const RefinerTrainConfig& config,
                                 const RefinerCheckpointFn& on_checkpoint) {
  config.validate();
  loss.validate(phi);
  RefinerTrainResult result;
  result.model = make_refiner(arch, config.seed);
  result.model->train();
  torch::optim::Adam optimizer(result.model->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  std::vector<torch::Tensor> good = snapshot(*result.model);
  const auto batch = static_cast<std::uint64_t>(config.batch_size);

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<Image> xs, ys;
    for (std::uint64_t b = 0; b < batch; ++b) {
      const std::uint64_t index = (static_cast<std::uint64_t>(step) - 1) * batch + b;
      xs.push_back(synthetic.draw(index));
      ys.push_back(real.draw(index));
    }
    const auto x = to_tensor(xs);
    const auto y_s = to_tensor(ys);
    const auto y_hat = result.model->forward(x);
    const auto terms = perceptual::atn_loss(phi, loss, x, y_hat, y_s);
    const double total = terms.total.item<double>();
    if (!std::isfinite(total)) {
      restore(*result.model, good);
      result.status = TrainStatus::Diverged;
      break;
    }
    good = snapshot(*result.model);
    result.history.push_back({step, total, terms.feature.item<double>(),
                              terms.style.item<double>(), terms.reg.item<double>()});
    optimizer.zero_grad();
    terms.total.backward();
    optimizer.step();
    if (on_checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step < config.steps)
      on_checkpoint(step, result.model, result.history);
  }
  result.model->eval();
  if (on_checkpoint)
    on_checkpoint(result.history.empty() ? 0 : result.history.back().step, result.model,
                  result.history);
  return result;
}

std::string refiner_history_csv(const std::vector<RefinerHistoryRow>& rows) {
  std::string out = "step,total,feature,style,reg\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + fmt(r.total) + "," + fmt(r.feature) + "," +
           fmt(r.style) + "," + fmt(r.reg) + "\n";
  }
  return out;
}

std::vector<RefinerHistoryRow> parse_refiner_history(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,total,feature,style,reg", 0) != 0)
    throw DataError("history CSV must start with header step,total,feature,style,reg");
  std::vector<RefinerHistoryRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 5) throw DataError("history line " + std::to_string(lineno) + " needs 5 fields");
    const std::string ctx = "history line " + std::to_string(lineno);
    rows.push_back({static_cast<int>(io::parse_int(f[0], ctx)), io::parse_double(f[1], ctx),
                    io::parse_double(f[2], ctx), io::parse_double(f[3], ctx),
                    io::parse_double(f[4], ctx)});
  }
  return rows;
}

void CnrTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
}

CnrTrainResult train_cnr(std::span<const Image> inputs, std::span<const AirwayLabel> labels,
                         const CnrConfig& arch, const CnrTrainConfig& config) {
  config.validate();
  arch.validate();
  if (inputs.size() != labels.size())
    throw DataError("CNR training has " + std::to_string(inputs.size()) + " patches but " +
                    std::to_string(labels.size()) + " labels");
  if (inputs.empty()) throw DataError("CNR training set is empty");
  for (const Image& img : inputs)
    if (img.height != arch.input_size || img.width != arch.input_size)
      throw ShapeError("CNR training patches must be " + std::to_string(arch.input_size) + "x" +
                       std::to_string(arch.input_size));

  const auto n = static_cast<std::int64_t>(inputs.size());
  const auto x_all = to_tensor(inputs);
  std::vector<float> targets;
  for (const auto& l : labels)
    for (double v : codec::encode_label(l)) targets.push_back(static_cast<float>(v));
  const auto y_all = torch::from_blob(targets.data(), {n, codec::kEncodedSize}, torch::kFloat32).clone();

  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(config.seed, 0, 31));
  std::shuffle(order.begin(), order.end(), split_rng.engine());
  std::int64_t n_val = static_cast<std::int64_t>(std::floor(config.validation_fraction * n));
  n_val = std::min(n_val, n - 1);
  std::vector<std::int64_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::int64_t> train(order.begin() + n_val, order.end());
  std::sort(val.begin(), val.end());

  CnrTrainResult result;
  result.model = make_cnr(arch, config.seed);
  torch::optim::Adam optimizer(result.model->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  auto val_index = torch::tensor(val, torch::kInt64);

  auto evaluate = [&](const torch::Tensor& idx) {
    torch::NoGradGuard guard;
    result.model->eval();
    double acc = 0.0;
    const auto m = idx.size(0);
    for (std::int64_t i = 0; i < m; i += 512) {
      const auto part = idx.slice(0, i, std::min(m, i + 512));
      const auto pred = result.model->forward(x_all.index_select(0, part));
      acc += torch::mse_loss(pred, y_all.index_select(0, part), torch::Reduction::Sum).item<double>();
    }
    return acc / (static_cast<double>(m) * codec::kEncodedSize);
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<torch::Tensor> best_state;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), 32));
    std::shuffle(train.begin(), train.end(), rng.engine());
    result.model->train();
    double acc = 0.0;
    const auto m = static_cast<std::int64_t>(train.size());
    for (std::int64_t i = 0; i < m; i += config.batch_size) {
      const auto end = std::min<std::int64_t>(m, i + config.batch_size);
      auto idx = torch::tensor(std::vector<std::int64_t>(train.begin() + i, train.begin() + end),
                               torch::kInt64);
      const auto pred = result.model->forward(x_all.index_select(0, idx));
      const auto loss = torch::mse_loss(pred, y_all.index_select(0, idx));
      const double value = loss.item<double>();
      if (!std::isfinite(value)) throw NumericalError("CNR training loss became non-finite");
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      acc += value * static_cast<double>(end - i);
    }
    CnrHistoryRow row;
    row.epoch = epoch;
    row.train_mse = acc / static_cast<double>(m);
    row.val_mse = n_val > 0 ? evaluate(val_index) : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(row);

    if (config.early_stop_patience > 0 && n_val > 0) {
      if (row.val_mse < best) {
        best = row.val_mse;
        best_state = snapshot(*result.model);
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        break;
      }
    }
  }
  if (!best_state.empty()) restore(*result.model, best_state);
  result.model->eval();
  return result;
}

std::string cnr_history_csv(const std::vector<CnrHistoryRow>& rows) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + "," + fmt(r.train_mse) + "," + fmt(r.val_mse) + "\n";
  return out;
}

std::vector<codec::Decoded> measure(Cnr& model, std::span<const Image> patches) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<codec::Decoded> out;
  out.reserve(patches.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t i = 0; i < patches.size(); i += kChunk) {
    const auto n = std::min(kChunk, patches.size() - i);
    const auto y = model->forward(to_tensor(patches.subspan(i, n))).to(torch::kFloat64).contiguous();
    const double* p = y.data_ptr<double>();
    for (std::size_t k = 0; k < n; ++k)
      out.push_back(codec::decode_label({p + k * codec::kEncodedSize, codec::kEncodedSize}));
  }
  return out;
}

void save_refiner(const std::filesystem::path& path, Refiner& model, const RefinerConfig& arch,
                  const nlohmann::json& run_config, const std::vector<RefinerHistoryRow>& history) {
  io::Container c;
  c.arch = "refiner";
  c.config = {{"architecture", {{"features", arch.features}, {"blocks", arch.blocks}}},
              {"run", run_config}};
  c.arrays = to_arrays(*model);
  c.history_csv = refiner_history_csv(history);
  io::write_container(path, c);
}

void save_cnr(const std::filesystem::path& path, Cnr& model, const CnrConfig& arch,
              const nlohmann::json& run_config, const std::vector<CnrHistoryRow>& history) {
  io::Container c;
  c.arch = "cnr";
  c.config = {{"architecture",
               {{"widths", arch.widths}, {"hidden", arch.hidden}, {"input_size", arch.input_size}}},
              {"run", run_config}};
  c.arrays = to_arrays(*model);
  c.history_csv = cnr_history_csv(history);
  io::write_container(path, c);
}

LoadedRefiner load_refiner(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path);
  if (c.arch != "refiner")
    throw DataError(path.string() + ": expected a refiner checkpoint, found '" + c.arch + "'");
  LoadedRefiner out;
  try {
    const auto& a = c.config.at("architecture");
    out.arch.features = a.at("features").get<int>();
    out.arch.blocks = a.at("blocks").get<int>();
    out.run_config = c.config.value("run", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed refiner config: " + e.what());
  }
  out.model = Refiner(out.arch);
  from_arrays(*out.model, c, path.string());
  out.model->eval();
  out.history = parse_refiner_history(c.history_csv);
  return out;
}

LoadedCnr load_cnr(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path);
  if (c.arch != "cnr")
    throw DataError(path.string() + ": expected a cnr checkpoint, found '" + c.arch + "'");
  LoadedCnr out;
  try {
    const auto& a = c.config.at("architecture");
    out.arch.widths = a.at("widths").get<std::vector<int>>();
    out.arch.hidden = a.at("hidden").get<int>();
    out.arch.input_size = a.at("input_size").get<int>();
    out.run_config = c.config.value("run", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed cnr config: " + e.what());
  }
  out.model = Cnr(out.arch);
  from_arrays(*out.model, c, path.string());
  out.model->eval();
  return out;
}

}  // namespace atn::nets

#include "atn/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "atn/container.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::perceptual {

namespace {

void check_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1)
    throw ShapeError("extractor input must be [B, 1, H, W], got " + std::to_string(x.dim()) +
                     " dims");
  if (x.size(2) < 1 || x.size(3) < 1) throw ShapeError("extractor input is empty");
}

std::vector<std::string> wanted(const std::vector<std::string>& requested,
                                const FeatureExtractor& phi) {
  if (requested.empty()) return phi.layer_names();
  for (const auto& name : requested)
    if (!phi.has_layer(name)) throw ConfigError("unknown feature layer '" + name + "'");
  return requested;
}

int canonical_index(const std::string& name) {
  const auto& c = canonical_layers();
  const auto it = std::find(c.begin(), c.end(), name);
  if (it == c.end()) throw ConfigError("unknown feature layer '" + name + "'");
  return static_cast<int>(it - c.begin());
}

}  // namespace

const std::vector<std::string>& canonical_layers() {
  static const std::vector<std::string> names{"relu1_2", "relu2_2", "relu3_3", "relu4_3"};
  return names;
}

const torch::Tensor& FeatureActivations::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw ConfigError("activations do not contain layer '" + name + "'");
}

bool FeatureExtractor::has_layer(const std::string& name) const {
  const auto names = layer_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

IdentityExtractor::IdentityExtractor(std::vector<std::string> layers) : layers_(std::move(layers)) {}

FeatureActivations IdentityExtractor::extract(const torch::Tensor& x,
                                              const std::vector<std::string>& layers) const {
  check_input(x);
  FeatureActivations out;
  for (const auto& name : wanted(layers, *this)) {
    out.names.push_back(name);
    out.values.push_back(x);
  }
  return out;
}

ExtractorSpec vgg16_spec() {
  ExtractorSpec s;
  s.stages = {{2, 64, "relu1_2"}, {2, 128, "relu2_2"}, {3, 256, "relu3_3"}, {3, 512, "relu4_3"}};
  s.mean = {0.485, 0.456, 0.406};
  s.std = {0.229, 0.224, 0.225};
  return s;
}

ExtractorSpec hermetic_spec() {
  ExtractorSpec s;
  s.stages = {{2, 16, "relu1_2"}, {2, 32, "relu2_2"}, {3, 64, "relu3_3"}, {3, 128, "relu4_3"}};
  return s;
}

ConvExtractor::ConvExtractor(ExtractorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.stages.empty()) throw ConfigError("extractor needs at least one stage");
  if (spec_.in_channels < 1 || spec_.in_channels > 3)
    throw ConfigError("extractor in_channels must be 1..3");
  Rng rng(seed);
  int index = 0;
  int cin = spec_.in_channels;
  for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
    const ConvStage& st = spec_.stages[s];
    if (st.convs < 1 || st.width < 1) throw ConfigError("extractor stage needs convs and width >= 1");
    if (s > 0) ++index;  // max pool
    std::vector<Conv> convs;
    for (int k = 0; k < st.convs; ++k) {
      Conv c;
      c.name = "features." + std::to_string(index);
      const double sd = std::sqrt(2.0 / (cin * 9.0));
      std::vector<float> w(static_cast<std::size_t>(st.width) * cin * 9);
      for (float& v : w) v = static_cast<float>(rng.normal(0.0, sd));
      c.weight = torch::from_blob(w.data(), {st.width, cin, 3, 3}, torch::kFloat32).clone();
      if (spec_.bias) c.bias = torch::zeros({st.width}, torch::kFloat32);
      convs.push_back(std::move(c));
      cin = st.width;
      index += 2;  // conv + relu
    }
    stages_.push_back(std::move(convs));
  }
}

std::vector<std::string> ConvExtractor::layer_names() const {
  std::vector<std::string> names;
  for (const auto& st : spec_.stages) names.push_back(st.tap);
  return names;
}

FeatureActivations ConvExtractor::extract(const torch::Tensor& x,
                                          const std::vector<std::string>& layers) const {
  check_input(x);
  const auto names = wanted(layers, *this);
  std::size_t deepest = 0;
  for (const auto& n : names)
    for (std::size_t s = 0; s < spec_.stages.size(); ++s)
      if (spec_.stages[s].tap == n) deepest = std::max(deepest, s);
  const std::int64_t factor = std::int64_t{1} << deepest;
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0)
    throw ShapeError("extractor input " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)) + " is not divisible by " + std::to_string(factor));

  const auto& w0 = stages_[0][0].weight;
  torch::Tensor h = x.to(w0.scalar_type()).expand({x.size(0), spec_.in_channels, x.size(2), x.size(3)});
  auto mean = torch::tensor(std::vector<double>(spec_.mean.begin(), spec_.mean.begin() + spec_.in_channels))
                  .to(w0.scalar_type())
                  .view({1, spec_.in_channels, 1, 1});
  auto stdv = torch::tensor(std::vector<double>(spec_.std.begin(), spec_.std.begin() + spec_.in_channels))
                  .to(w0.scalar_type())
                  .view({1, spec_.in_channels, 1, 1});
  h = (h - mean) / stdv;

  std::vector<torch::Tensor> taps(spec_.stages.size());
  for (std::size_t s = 0; s <= deepest; ++s) {
    if (s > 0) h = torch::max_pool2d(h, 2);
    for (const Conv& c : stages_[s]) h = torch::relu(torch::conv2d(h, c.weight, c.bias, 1, 1));
    taps[s] = h;
  }
  FeatureActivations out;
  for (const auto& n : names) {
    for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
      if (spec_.stages[s].tap == n) {
        out.names.push_back(n);
        out.values.push_back(taps[s]);
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> ConvExtractor::parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& st : stages_) {
    for (const Conv& c : st) {
      out.emplace_back(c.name + ".weight", c.weight);
      if (c.bias.defined()) out.emplace_back(c.name + ".bias", c.bias);
    }
  }
  return out;
}

void ConvExtractor::load_parameters(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  auto find = [&](const std::string& name) -> const torch::Tensor& {
    for (const auto& [n, t] : named)
      if (n == name) return t;
    throw DataError("weights file has no tensor '" + name + "'");
  };
  for (auto& st : stages_) {
    for (Conv& c : st) {
      const auto& w = find(c.name + ".weight");
      if (w.sizes() != c.weight.sizes())
        throw ShapeError("tensor '" + c.name + ".weight' has the wrong shape");
      c.weight = w.to(c.weight.scalar_type()).clone();
      if (c.bias.defined()) {
        const auto& b = find(c.name + ".bias");
        if (b.sizes() != c.bias.sizes())
          throw ShapeError("tensor '" + c.name + ".bias' has the wrong shape");
        c.bias = b.to(c.bias.scalar_type()).clone();
      }
    }
  }
}

void ConvExtractor::to(torch::Dtype dtype) {
  for (auto& st : stages_) {
    for (Conv& c : st) {
      c.weight = c.weight.to(dtype);
      if (c.bias.defined()) c.bias = c.bias.to(dtype);
    }
  }
}

Variant parse_variant(const std::string& text) {
  if (text == "hermetic") return Variant::Hermetic;
  if (text == "vgg16") return Variant::Vgg16;
  throw ConfigError("unknown extractor variant '" + text + "' (expected hermetic or vgg16)");
}

std::string to_string(Variant v) { return v == Variant::Hermetic ? "hermetic" : "vgg16"; }

std::unique_ptr<ConvExtractor> make_extractor(Variant variant,
                                              const std::filesystem::path& weights_path,
                                              std::uint64_t seed) {
  if (variant == Variant::Hermetic) return std::make_unique<ConvExtractor>(hermetic_spec(), seed);
  std::filesystem::path path = weights_path;
  if (path.empty()) {
    const char* env = std::getenv(kWeightsEnv);
    if (env == nullptr || *env == '\0')
      throw ConfigError(std::string("vgg16 extractor needs a weights path or $") + kWeightsEnv);
    path = env;
  }
  const io::Container c = io::read_container(path);
  if (c.arch != "vgg16-features")
    throw DataError(path.string() + ": expected arch vgg16-features, found " + c.arch);
  std::vector<std::pair<std::string, torch::Tensor>> named;
  for (const auto& a : c.arrays) {
    named.emplace_back(a.name, torch::from_blob(const_cast<float*>(a.values.data()), a.shape,
                                                torch::kFloat32)
                                   .clone());
  }
  auto phi = std::make_unique<ConvExtractor>(vgg16_spec(), seed);
  phi->load_parameters(named);
  return phi;
}

void save_extractor_weights(const std::filesystem::path& path, const ConvExtractor& phi) {
  io::Container c;
  c.arch = "vgg16-features";
  for (const auto& [name, t] : phi.parameters()) {
    io::NamedArray a;
    a.name = name;
    a.shape.assign(t.sizes().begin(), t.sizes().end());
    const auto f = t.to(torch::kFloat32).contiguous();
    a.values.assign(f.data_ptr<float>(), f.data_ptr<float>() + f.numel());
    c.arrays.push_back(std::move(a));
  }
  io::write_container(path, c);
}

FeatureActivations extract_features(const FeatureExtractor& phi, const Image& patch) {
  if (patch.height != 32 || patch.width != 32)
    throw ShapeError("feature extraction expects a 32x32 patch, got " +
                     std::to_string(patch.height) + "x" + std::to_string(patch.width));
  auto x = torch::from_blob(const_cast<float*>(patch.pixels.data()), {1, 1, 32, 32}, torch::kFloat32)
               .clone();
  return phi.extract(x);
}

torch::Tensor gram(const torch::Tensor& a) {
  if (a.dim() == 3) return gram(a.unsqueeze(0)).squeeze(0);
  if (a.dim() != 4) throw ShapeError("gram expects [B,C,H,W] or [C,H,W] activations");
  const auto b = a.size(0), c = a.size(1), hw = a.size(2) * a.size(3);
  const auto f = a.reshape({b, c, hw});
  return torch::bmm(f, f.transpose(1, 2)) / static_cast<double>(c * hw);
}

Distance parse_distance(const std::string& text) {
  if (text == "l1") return Distance::L1;
  if (text == "l2") return Distance::L2;
  throw ConfigError("unknown distance '" + text + "' (expected l1 or l2)");
}

std::string to_string(Distance d) { return d == Distance::L1 ? "l1" : "l2"; }

torch::Tensor feature_loss(const FeatureExtractor& phi, const std::vector<std::string>& layers,
                           const torch::Tensor& y_hat, const torch::Tensor& x, Distance distance) {
  if (y_hat.sizes() != x.sizes()) throw ShapeError("feature_loss inputs differ in shape");
  for (const auto& name : layers)
    if (!phi.has_layer(name)) throw ConfigError("unknown feature layer '" + name + "'");
  torch::Tensor total = torch::zeros({}, y_hat.options());
  if (layers.empty()) return total;
  const auto a = phi.extract(y_hat, layers);
  const auto b = phi.extract(x, layers);
  for (std::size_t j = 0; j < layers.size(); ++j) {
    const auto d = a.values[j] - b.values[j];
    total = total + (distance == Distance::L1 ? d.abs().mean() : d.square().mean());
  }
  return total;
}

torch::Tensor style_loss(const FeatureExtractor& phi, const std::vector<std::string>& layers,
                         const torch::Tensor& y_hat, const torch::Tensor& y_s) {
  if (y_hat.sizes() != y_s.sizes()) throw ShapeError("style_loss inputs differ in shape");
  for (const auto& name : layers)
    if (!phi.has_layer(name)) throw ConfigError("unknown style layer '" + name + "'");
  torch::Tensor total = torch::zeros({}, y_hat.options());
  if (layers.empty()) return total;
  const auto a = phi.extract(y_hat, layers);
  const auto b = phi.extract(y_s, layers);
  for (std::size_t j = 0; j < layers.size(); ++j) {
    const auto& t = a.values[j];
    const double chw = static_cast<double>(t.size(1) * t.size(2) * t.size(3));
    const auto d = (gram(t) - gram(b.values[j])).abs().sum({1, 2}) / chw;
    total = total + d.mean();
  }
  return total;
}

std::vector<std::string> LossConfig::effective_style_layers() const {
  if (!style_cumulative) return style_layers;
  int deepest = -1;
  for (const auto& n : style_layers) deepest = std::max(deepest, canonical_index(n));
  std::vector<std::string> out;
  for (int i = 0; i <= deepest; ++i) out.push_back(canonical_layers()[i]);
  return out;
}

void LossConfig::validate(const FeatureExtractor& phi) const {
  for (const auto& n : feature_layers)
    if (!phi.has_layer(n)) throw ConfigError("unknown feature layer '" + n + "'");
  for (const auto& n : effective_style_layers())
    if (!phi.has_layer(n)) throw ConfigError("unknown style layer '" + n + "'");
  if (!(reg_lambda >= 0.0)) throw ConfigError("reg_lambda must be >= 0");
  if (!(feature_weight >= 0.0) || !(style_weight >= 0.0))
    throw ConfigError("loss weights must be >= 0");
}

LossTerms atn_loss(const FeatureExtractor& phi, const LossConfig& config, const torch::Tensor& x,
                   const torch::Tensor& y_hat, const torch::Tensor& y_s) {
  config.validate(phi);
  if (x.sizes() != y_hat.sizes()) throw ShapeError("atn_loss: x and y_hat differ in shape");
  LossTerms t;
  t.feature = config.feature_weight * feature_loss(phi, config.feature_layers, y_hat, x, config.distance);
  t.style = config.style_weight * style_loss(phi, config.effective_style_layers(), y_hat, y_s);
  t.reg = config.reg_lambda * (y_hat - x).abs().mean();
  t.total = t.feature + t.style + t.reg;
  return t;
}

}  // namespace atn::perceptual

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atn/image.hpp"

namespace atn::perceptual {

/// relu1_2, relu2_2, relu3_3, relu4_3 in network order.
const std::vector<std::string>& canonical_layers();

struct FeatureActivations {
  std::vector<std::string> names;
  std::vector<torch::Tensor> values;  // each [B, C_j, H_j, W_j]

  const torch::Tensor& at(const std::string& name) const;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> layer_names() const = 0;
  /// x is [B, 1, H, W]. Returns the requested layers (all when `layers` is empty).
  virtual FeatureActivations extract(const torch::Tensor& x,
                                     const std::vector<std::string>& layers = {}) const = 0;
  bool has_layer(const std::string& name) const;
};

/// Every layer returns its input unchanged. Used by the loss oracles.
class IdentityExtractor final : public FeatureExtractor {
 public:
  explicit IdentityExtractor(std::vector<std::string> layers = canonical_layers());
  std::vector<std::string> layer_names() const override { return layers_; }
  FeatureActivations extract(const torch::Tensor& x,
                             const std::vector<std::string>& layers = {}) const override;

 private:
  std::vector<std::string> layers_;
};

struct ConvStage {
  int convs = 2;
  int width = 64;
  std::string tap;  // name of the ReLU output after the last conv
};

/// VGG-style stack: stage k is `convs` 3x3 conv+ReLU layers preceded (k > 0)
/// by 2x2 max pooling. Parameters are named as in torchvision's
/// `features.<index>.weight` so pretrained VGG16 weights load directly.
struct ExtractorSpec {
  std::vector<ConvStage> stages;
  int in_channels = 3;
  bool bias = true;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
};

ExtractorSpec vgg16_spec();
/// VGG16 layout at 1/4 width with random fixed weights; needs no download.
ExtractorSpec hermetic_spec();

class ConvExtractor final : public FeatureExtractor {
 public:
  /// Kaiming-normal weights from a fixed seed, zero biases.
  ConvExtractor(ExtractorSpec spec, std::uint64_t seed);

  std::vector<std::string> layer_names() const override;
  FeatureActivations extract(const torch::Tensor& x,
                             const std::vector<std::string>& layers = {}) const override;

  const ExtractorSpec& spec() const { return spec_; }
  /// Parameter name -> tensor, torchvision naming.
  std::vector<std::pair<std::string, torch::Tensor>> parameters() const;
  void load_parameters(const std::vector<std::pair<std::string, torch::Tensor>>& named);
  void to(torch::Dtype dtype);

 private:
  struct Conv {
    std::string name;
    torch::Tensor weight, bias;
  };
  ExtractorSpec spec_;
  std::vector<std::vector<Conv>> stages_;
};

enum class Variant { Hermetic, Vgg16 };
Variant parse_variant(const std::string& text);
std::string to_string(Variant v);

/// Name of the environment variable consulted for the VGG16 weights file when
/// no path is configured.
inline constexpr const char* kWeightsEnv = "ATN_VGG16_WEIGHTS";

/// Hermetic: random weights from `seed`. Vgg16: weights read from `weights_path`
/// (or $ATN_VGG16_WEIGHTS), a container written by tools/export_vgg16_weights.py.
std::unique_ptr<ConvExtractor> make_extractor(Variant variant,
                                              const std::filesystem::path& weights_path,
                                              std::uint64_t seed);

void save_extractor_weights(const std::filesystem::path& path, const ConvExtractor& phi);

/// Single 32x32 patch -> activations of every layer.
FeatureActivations extract_features(const FeatureExtractor& phi, const Image& patch);

/// [B,C,H,W] -> [B,C,C] (or [C,H,W] -> [C,C]), normalised by C*H*W.
torch::Tensor gram(const torch::Tensor& activations);

enum class Distance { L1, L2 };
Distance parse_distance(const std::string& text);
std::string to_string(Distance d);

/// Sum over layers of mean |phi_j(y_hat) - phi_j(x)| (L2: mean squared difference).
torch::Tensor feature_loss(const FeatureExtractor& phi, const std::vector<std::string>& layers,
                           const torch::Tensor& y_hat, const torch::Tensor& x,
                           Distance distance = Distance::L1);

/// Sum over layers of |G_j(y_hat) - G_j(y_s)|_1 / (C_j H_j W_j), averaged over the batch.
torch::Tensor style_loss(const FeatureExtractor& phi, const std::vector<std::string>& layers,
                         const torch::Tensor& y_hat, const torch::Tensor& y_s);

struct LossConfig {
  std::vector<std::string> feature_layers{"relu3_3"};
  std::vector<std::string> style_layers{"relu1_2", "relu2_2"};
  /// Style over every canonical layer up to the deepest one listed.
  bool style_cumulative = false;
  double reg_lambda = 0.01;
  double feature_weight = 1.0;
  double style_weight = 1.0;
  Distance distance = Distance::L1;

  std::vector<std::string> effective_style_layers() const;
  void validate(const FeatureExtractor& phi) const;
};

/// Terms are reported already weighted, so total == feature + style + reg.
struct LossTerms {
  torch::Tensor total, feature, style, reg;
};

LossTerms atn_loss(const FeatureExtractor& phi, const LossConfig& config, const torch::Tensor& x,
                   const torch::Tensor& y_hat, const torch::Tensor& y_s);

}  // namespace atn::perceptual

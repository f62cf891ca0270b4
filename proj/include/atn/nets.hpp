#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atn/augment.hpp"
#include "atn/codec.hpp"
#include "atn/dataset.hpp"
#include "atn/perceptual.hpp"
#include "json.hpp"

namespace atn::nets {

struct RefinerConfig {
  int features = 64;
  int blocks = 4;
  void validate() const;
};

struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int features);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// 3x3 conv -> ReLU -> residual blocks -> 1x1 conv to one channel. Zero
/// padding throughout, so any input size is preserved.
struct RefinerImpl : torch::nn::Module {
  explicit RefinerImpl(const RefinerConfig& config = {});
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv_in{nullptr}, conv_out{nullptr};
  torch::nn::Sequential blocks{nullptr};
};
TORCH_MODULE(Refiner);

struct CnrConfig {
  std::vector<int> widths{32, 64, 128, 128};
  int hidden = 256;
  int input_size = 32;
  void validate() const;
};

/// Stride-2 3x3 conv blocks -> flatten -> FC hidden -> FC 8 (encoded label).
struct CnrImpl : torch::nn::Module {
  explicit CnrImpl(const CnrConfig& config = {});
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  int input_size = 32;
};
TORCH_MODULE(Cnr);

/// Models are created under torch::manual_seed(seed) so initial weights are
/// reproducible.
Refiner make_refiner(const RefinerConfig& config, std::uint64_t seed);
Cnr make_cnr(const CnrConfig& config, std::uint64_t seed);

torch::Tensor to_tensor(std::span<const Image> images);  // [N,1,H,W] float32
std::vector<Image> to_images(const torch::Tensor& t);

/// Forward pass in inference mode, batched. All images must share one shape.
std::vector<Image> refine(Refiner& model, std::span<const Image> patches);
Image refine(Refiner& model, const Image& patch);

/// Source of augmented 32x32 training patches, addressed by a draw index so a
/// run is reproducible independent of call order.
class PatchSampler {
 public:
  virtual ~PatchSampler() = default;
  virtual Image draw(std::uint64_t index) const = 0;
};

/// Draw i picks bundle item hash(seed, i) and augments it with seed hash(seed, i).
class BundleSampler final : public PatchSampler {
 public:
  BundleSampler(const io::Bundle& bundle, augment::AugmentConfig config, bool is_real,
                std::uint64_t seed);
  Image draw(std::uint64_t index) const override;

 private:
  const io::Bundle* bundle_;
  augment::AugmentConfig config_;
  bool is_real_;
  std::uint64_t seed_;
};

struct RefinerTrainConfig {
  int steps = 10000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  void validate() const;
};

struct RefinerHistoryRow {
  int step = 0;
  double total = 0.0, feature = 0.0, style = 0.0, reg = 0.0;
};

enum class TrainStatus { Completed, Diverged };

struct RefinerTrainResult {
  Refiner model{nullptr};
  std::vector<RefinerHistoryRow> history;
  TrainStatus status = TrainStatus::Completed;
};

using RefinerCheckpointFn =
    std::function<void(int step, Refiner& model, const std::vector<RefinerHistoryRow>& history)>;

/// Adam on atn_loss. Step s uses synthetic draws and style draws with indices
/// (s-1)*B .. s*B-1, one style target per example. A non-finite loss stops
/// training and restores the last weights that produced a finite loss.
RefinerTrainResult train_refiner(const PatchSampler& synthetic, const PatchSampler& real,
                                 const perceptual::FeatureExtractor& phi,
                                 const perceptual::LossConfig& loss, const RefinerConfig& arch,
                                 const RefinerTrainConfig& config,
                                 const RefinerCheckpointFn& on_checkpoint = {});

std::string refiner_history_csv(const std::vector<RefinerHistoryRow>& rows);
std::vector<RefinerHistoryRow> parse_refiner_history(const std::string& csv);

struct CnrTrainConfig {
  int epochs = 40;
  int batch_size = 2000;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  int early_stop_patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;
  void validate() const;
};

struct CnrHistoryRow {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;  // NaN without a validation split
};

struct CnrTrainResult {
  Cnr model{nullptr};
  std::vector<CnrHistoryRow> history;
};

/// MSE between the network output and encode_label(label).
CnrTrainResult train_cnr(std::span<const Image> inputs, std::span<const AirwayLabel> labels,
                         const CnrConfig& arch, const CnrTrainConfig& config);

std::string cnr_history_csv(const std::vector<CnrHistoryRow>& rows);

std::vector<codec::Decoded> measure(Cnr& model, std::span<const Image> patches);

/// Checkpoints use the io::Container format with arch "refiner" / "cnr".
void save_refiner(const std::filesystem::path& path, Refiner& model, const RefinerConfig& arch,
                  const nlohmann::json& run_config, const std::vector<RefinerHistoryRow>& history);
void save_cnr(const std::filesystem::path& path, Cnr& model, const CnrConfig& arch,
              const nlohmann::json& run_config, const std::vector<CnrHistoryRow>& history);

struct LoadedRefiner {
  Refiner model{nullptr};
  RefinerConfig arch;
  nlohmann::json run_config;
  std::vector<RefinerHistoryRow> history;
};
struct LoadedCnr {
  Cnr model{nullptr};
  CnrConfig arch;
  nlohmann::json run_config;
};

LoadedRefiner load_refiner(const std::filesystem::path& path);
LoadedCnr load_cnr(const std::filesystem::path& path);

/// Flat parameter snapshot, for comparisons in tests and the divergence guard.
std::vector<torch::Tensor> snapshot(torch::nn::Module& module);

}  // namespace atn::nets

#pragma once

#include "lsm/layers.hpp"
#include "lsm/model_config.hpp"
#include "lsm/rfa.hpp"

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

namespace lsm {

/// Raw logits of one detection level.
struct HeadLevel {
  torch::Tensor cls;  // (b, num_classes, H, W)
  torch::Tensor box;  // (b, 4 * reg_max, H, W)
  std::int64_t stride = 0;
};

struct RawHeadOutput {
  std::vector<HeadLevel> levels;
};

/// Named intermediate features captured during a forward pass (for CAM).
using FeatureTaps = std::map<std::string, torch::Tensor>;

/// RFAConv followed by BatchNorm and SiLU.
class RFABlockImpl : public torch::nn::Module {
 public:
  RFABlockImpl(std::int64_t in, std::int64_t out, std::int64_t k);
  torch::Tensor forward(const torch::Tensor& x);

  RFAConv conv{nullptr};
  NormAct post{nullptr};
};
TORCH_MODULE(RFABlock);

/// Decoupled head: two 3x3 layers then a 1x1 predictor for each of the
/// box-distribution and classification branches.
class DetectHeadImpl : public torch::nn::Module {
 public:
  DetectHeadImpl(std::int64_t in, const ModelConfig& cfg);
  HeadLevel forward(const torch::Tensor& x);

  torch::nn::Sequential box{nullptr};
  torch::nn::Sequential cls{nullptr};
  torch::nn::Conv2d box_pred{nullptr};
  torch::nn::Conv2d cls_pred{nullptr};
};
TORCH_MODULE(DetectHead);

/// Four-level PA-FPN neck: a top-down pass from stride 32 to stride 4, then a
/// bottom-up pass back to stride 32. Each fusion is a non-residual MatchNeck.
class NeckImpl : public torch::nn::Module {
 public:
  explicit NeckImpl(const ModelConfig& cfg);

  /// Inputs and outputs ordered by stride 4, 8, 16, 32.
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& feats,
                                     FeatureTaps* taps = nullptr);

  static const std::vector<std::string>& block_names();

  torch::nn::Sequential td4{nullptr}, td3{nullptr}, td2{nullptr};
  ConvBnAct down2{nullptr}, down3{nullptr}, down4{nullptr};
  torch::nn::Sequential bu3{nullptr}, bu4{nullptr}, bu5{nullptr};
};
TORCH_MODULE(Neck);

/// Backbone (stem, RFABlock, four LAE + residual MatchNeck stages), neck and
/// four detection heads at strides 4, 8, 16 and 32.
class DetectorImpl : public torch::nn::Module {
 public:
  explicit DetectorImpl(const ModelConfig& cfg);

  /// images: (b, 3, S, S) with S = input_size, values in [0, 1].
  RawHeadOutput forward(const torch::Tensor& images, FeatureTaps* taps = nullptr);

  const ModelConfig& config() const { return cfg_; }

  /// Names accepted as CAM layers (every tapped feature).
  static std::vector<std::string> layer_names();

  ConvBnAct stem{nullptr};
  torch::nn::Sequential early{nullptr};
  torch::nn::Sequential stage1{nullptr}, stage2{nullptr}, stage3{nullptr}, stage4{nullptr};
  Neck neck{nullptr};
  DetectHead head_p2{nullptr}, head_p3{nullptr}, head_p4{nullptr}, head_p5{nullptr};

 private:
  void initialize();

  ModelConfig cfg_;
};
TORCH_MODULE(Detector);

/// Validates the config, seeds the generator with cfg.seed and builds the
/// model. Two builds with the same config have bit-identical parameters.
Detector build_model(const ModelConfig& cfg);

/// Initial classification bias so that sigmoid(bias) = 0.01.
double prior_class_bias();

}  // namespace lsm

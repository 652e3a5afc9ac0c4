#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace lsm {

/// Hyperparameters of one Lightweight Adaptive Extraction (LAE) unit. The
/// enable_* switches select the ablation variants: LE (grouped projection
/// instead of a standard one), AE (softmax neighbour weights instead of a
/// plain mean) and DM (separate grouped dimension mapping).
struct LAEConfig {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t groups = 4;
  std::int64_t kernel_size = 1;
  bool enable_le = true;
  bool enable_ae = true;
  bool enable_dm = true;

  /// Throws Error(invalid-config) when groups does not divide the widths or
  /// the kernel size is even.
  void validate() const;
};

/// Number of neighbour slices produced by one 2x2 regrouping.
inline constexpr std::int64_t kLaeSlices = 4;

/// (b, c, h, w) -> (b, c, h/2, w/2, 4). Slice n enumerates the 2x2 block in
/// row-major order: top-left, top-right, bottom-left, bottom-right.
torch::Tensor space_to_depth_regroup(const torch::Tensor& fm);

/// Exact inverse of space_to_depth_regroup.
torch::Tensor depth_to_space_regroup(const torch::Tensor& fm5);

/// Shared-parameter projection applied identically to each of the four
/// slices. With `grouped` the convolution uses cfg.groups groups, otherwise it
/// is the standard (ungrouped) convolution of the same shape.
class LightweightBranchImpl : public torch::nn::Module {
 public:
  LightweightBranchImpl(const LAEConfig& cfg, bool grouped = true);

  /// (b, in, h, w, 4) -> (b, out, h, w, 4).
  torch::Tensor forward(const torch::Tensor& fm5);
  /// Slice-major layout used inside the LAE: (b*4, in, h, w) -> (b*4, out, h, w).
  torch::Tensor forward_slices(const torch::Tensor& slices);

  std::int64_t in_channels() const { return in_; }
  torch::nn::Conv2d conv{nullptr};

 private:
  std::int64_t in_;
};
TORCH_MODULE(LightweightBranch);

/// 2x2 average pooling, a 1x1 convolution to four logits and a softmax over
/// the slice axis. One weight per slice per output cell, shared by channels.
class AdaptiveWeightsImpl : public torch::nn::Module {
 public:
  explicit AdaptiveWeightsImpl(const LAEConfig& cfg);

  /// (b, c, h, w) -> logits (b, 4, h/2, w/2).
  torch::Tensor logits(const torch::Tensor& fm);
  /// (b, c, h, w) -> weights (b, 1, h/2, w/2, 4).
  torch::Tensor forward(const torch::Tensor& fm);

  torch::nn::Conv2d conv{nullptr};

 private:
  std::int64_t in_;
};
TORCH_MODULE(AdaptiveWeights);

/// Grouped 1x1 channel projection in -> out. When disabled it is the identity
/// and the widths must already agree.
class DimensionMappingImpl : public torch::nn::Module {
 public:
  explicit DimensionMappingImpl(const LAEConfig& cfg);

  torch::Tensor forward(const torch::Tensor& fm);
  bool enabled() const { return !conv.is_empty(); }

  torch::nn::Conv2d conv{nullptr};

 private:
  std::int64_t in_;
};
TORCH_MODULE(DimensionMapping);

/// Downsamples (b, in, h, w) to (b, out, h/2, w/2) as the adaptive-weighted
/// sum over the four regrouped slices of the projected features.
class LAEImpl : public torch::nn::Module {
 public:
  explicit LAEImpl(const LAEConfig& cfg);

  torch::Tensor forward(const torch::Tensor& fm);
  /// Projected slice features (b, out, h/2, w/2, 4) before weighting.
  torch::Tensor branch_slices(const torch::Tensor& fm);

  const LAEConfig& config() const { return cfg_; }

  LightweightBranch branch{nullptr};
  DimensionMapping mapping{nullptr};
  AdaptiveWeights weights{nullptr};  // empty when AE is disabled

 private:
  torch::Tensor projected_slices(const torch::Tensor& fm);  // (b, 4, out, h/2, w/2)

  LAEConfig cfg_;
};
TORCH_MODULE(LAE);

}  // namespace lsm

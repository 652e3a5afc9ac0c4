#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace lsm {

struct RFAConfig {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  std::int64_t stride = 1;

  void validate() const;
};

/// Receptive-field attention convolution. Every k x k receptive field is
/// reweighted by a per-location, per-channel softmax over its k^2 positions
/// (average pooling -> grouped 1x1 convolution) before a location-shared
/// kernel combines it.
class RFAConvImpl : public torch::nn::Module {
 public:
  explicit RFAConvImpl(const RFAConfig& cfg);

  torch::Tensor forward(const torch::Tensor& fm);

  /// Attention logits (b, c, k^2, h', w').
  torch::Tensor attention_logits(const torch::Tensor& fm);
  /// Softmax-normalized attention (b, c, k^2, h', w').
  torch::Tensor attention(const torch::Tensor& fm);
  /// Unfolded receptive fields (b, c, k^2, h', w').
  torch::Tensor receptive_fields(const torch::Tensor& fm) const;

  const RFAConfig& config() const { return cfg_; }

  torch::nn::Conv2d attend{nullptr};
  torch::Tensor weight;  // (out, in, k, k), shared across locations

 private:
  std::pair<std::int64_t, std::int64_t> output_hw(const torch::Tensor& fm) const;

  RFAConfig cfg_;
};
TORCH_MODULE(RFAConv);

}  // namespace lsm

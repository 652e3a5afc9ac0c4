#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace lsm {

/// Multipath Shunt Feature Matching configuration. `channels` is the width of
/// the stream the block attends over; `reduction` is the bottleneck ratio of
/// the spatial descriptor transform.
struct MSFMConfig {
  std::int64_t channels = 0;
  bool with_residual = true;
  std::int64_t reduction = 2;
  bool enable_spatial = true;
  bool enable_channel = true;

  void validate() const;
};

/// Axis means of one feature map: per-height (b,c,h,1), per-width (b,c,1,w)
/// and global (b,c,1,1).
struct DirectionalDescriptors {
  torch::Tensor f_h;
  torch::Tensor f_w;
  torch::Tensor f_c;
};

DirectionalDescriptors directional_pools(const torch::Tensor& fm);

/// Result of the spatial branch. `stream` is the post-transform logit stream
/// (b, c, h+w, 1) the weights were taken from.
struct SpatialMatch {
  torch::Tensor h_hat;     // (b, c, h, 1)
  torch::Tensor weight_h;  // (b, c, h, 1)
  torch::Tensor w_hat;     // (b, c, 1, w)
  torch::Tensor weight_w;  // (b, c, 1, w)
  torch::Tensor stream;
};

/// Concatenates F_h and F_w along the spatial axis.
torch::Tensor concat_descriptors(const DirectionalDescriptors& d);
/// Splits a (b, c, h+w, 1) stream back at `h` into (b,c,h,1) and (b,c,1,w).
std::pair<torch::Tensor, torch::Tensor> split_stream(const torch::Tensor& stream, std::int64_t h);

/// Channel branch: a (b,c,1,1) channel descriptor scaled by the spatially
/// averaged sigmoid of a (b,c,h+w,1) stream.
torch::Tensor channel_match(const torch::Tensor& f_c, const torch::Tensor& stream);

class MSFMImpl : public torch::nn::Module {
 public:
  explicit MSFMImpl(const MSFMConfig& cfg);

  torch::Tensor forward(const torch::Tensor& fm);

  /// Bottleneck transform over the concatenated h/w stream (spatial branch).
  torch::Tensor align(const torch::Tensor& stream);
  SpatialMatch spatial_match(const DirectionalDescriptors& d);
  /// Aligned F_c times the averaged sigmoid of the raw h/w stream.
  torch::Tensor channel_factor(const DirectionalDescriptors& d);
  /// The attended product before concatenation and projection.
  torch::Tensor attended(const torch::Tensor& fm);

  const MSFMConfig& config() const { return cfg_; }

  // Spatial branch; empty when disabled.
  torch::nn::Conv2d reduce{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Conv2d expand{nullptr};
  // Channel branch; empty when disabled.
  torch::nn::Conv2d channel_align{nullptr};
  torch::nn::Conv2d project{nullptr};

 private:
  MSFMConfig cfg_;
};
TORCH_MODULE(MSFM);

struct MatchNeckConfig {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  bool with_residual = true;
  std::int64_t reduction = 2;
  bool enable_spatial = true;
  bool enable_channel = true;

  MSFMConfig msfm_config() const;
};

/// Split/concat wrapper: the first channel half is kept as-is, the second
/// passes through MSFM, and a 1x1 convolution maps the concatenation to
/// out_channels.
class MatchNeckImpl : public torch::nn::Module {
 public:
  explicit MatchNeckImpl(const MatchNeckConfig& cfg);

  torch::Tensor forward(const torch::Tensor& fm);

  MSFM msfm{nullptr};
  torch::nn::Conv2d project{nullptr};

 private:
  MatchNeckConfig cfg_;
};
TORCH_MODULE(MatchNeck);

}  // namespace lsm

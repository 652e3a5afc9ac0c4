#include "lsm/msfm.hpp"

#include "lsm/error.hpp"
#include "lsm/layers.hpp"

#include <string>

namespace lsm {

void MSFMConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) {
    throw Error(errc::kInvalidConfig, "MSFM channels must be even, got " + std::to_string(channels));
  }
  if (reduction < 1 || channels / reduction < 4) {
    throw Error(errc::kInvalidConfig, "MSFM reduction " + std::to_string(reduction) +
                                          " leaves fewer than 4 bottleneck channels");
  }
}

DirectionalDescriptors directional_pools(const torch::Tensor& fm) {
  DirectionalDescriptors d;
  d.f_h = fm.mean(3, /*keepdim=*/true);
  d.f_w = fm.mean(2, /*keepdim=*/true);
  d.f_c = fm.mean({2, 3}, /*keepdim=*/true);
  return d;
}

torch::Tensor concat_descriptors(const DirectionalDescriptors& d) {
  return torch::cat({d.f_h, d.f_w.permute({0, 1, 3, 2})}, 2);
}

std::pair<torch::Tensor, torch::Tensor> split_stream(const torch::Tensor& stream, std::int64_t h) {
  auto parts = stream.split_with_sizes({h, stream.size(2) - h}, 2);
  return {parts[0], parts[1].permute({0, 1, 3, 2})};
}

torch::Tensor channel_match(const torch::Tensor& f_c, const torch::Tensor& stream) {
  return f_c * torch::sigmoid(stream).mean(2, /*keepdim=*/true);
}

MSFMImpl::MSFMImpl(const MSFMConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto c = cfg_.channels;
  const auto mid = c / cfg_.reduction;
  if (cfg_.enable_spatial) {
    reduce = register_module("reduce", torch::nn::Conv2d(conv_options(c, mid, 1)));
    norm = register_module("norm", torch::nn::BatchNorm2d(bn_options(mid)));
    expand = register_module("expand", torch::nn::Conv2d(conv_options(mid, c, 1, 1, 1, true)));
  }
  if (cfg_.enable_channel) {
    channel_align = register_module("channel_align", torch::nn::Conv2d(conv_options(c, c, 1, 1, 1, true)));
  }
  project = register_module("project", torch::nn::Conv2d(conv_options(2 * c, c, 1)));
}

torch::Tensor MSFMImpl::align(const torch::Tensor& stream) {
  return counted_conv(expand, torch::silu(norm->forward(counted_conv(reduce, stream))));
}

SpatialMatch MSFMImpl::spatial_match(const DirectionalDescriptors& d) {
  if (!cfg_.enable_spatial) throw Error(errc::kConfigMismatch, "MSFM spatial branch is disabled");
  SpatialMatch m;
  m.stream = align(concat_descriptors(d));
  const auto h = d.f_h.size(2);
  std::tie(m.h_hat, m.w_hat) = split_stream(m.stream, h);
  std::tie(m.weight_h, m.weight_w) = split_stream(torch::sigmoid(m.stream), h);
  return m;
}

torch::Tensor MSFMImpl::channel_factor(const DirectionalDescriptors& d) {
  if (!cfg_.enable_channel) throw Error(errc::kConfigMismatch, "MSFM channel branch is disabled");
  return channel_match(counted_conv(channel_align, d.f_c), concat_descriptors(d));
}

torch::Tensor MSFMImpl::attended(const torch::Tensor& fm) {
  if (fm.dim() != 4 || fm.size(1) != cfg_.channels) {
    throw Error(errc::kConfigMismatch, "MSFM expects " + std::to_string(cfg_.channels) +
                                           " channels");
  }
  torch::Tensor out = fm;
  if (cfg_.enable_spatial || cfg_.enable_channel) {
    const auto d = directional_pools(fm);
    // channel -> input -> height -> width
    if (cfg_.enable_channel) {
      out = channel_factor(d) * out;
      record_macs(out.numel());
    }
    if (cfg_.enable_spatial) {
      const auto m = spatial_match(d);
      out = out * (m.h_hat * m.weight_h);
      out = out * (m.w_hat * m.weight_w);
      record_macs(2 * out.numel());
    }
  }
  if (cfg_.with_residual) out = out + fm;
  return out;
}

torch::Tensor MSFMImpl::forward(const torch::Tensor& fm) {
  auto a = attended(fm);
  return counted_conv(project, torch::cat({fm, a}, 1));
}

MSFMConfig MatchNeckConfig::msfm_config() const {
  MSFMConfig m;
  m.channels = in_channels / 2;
  m.with_residual = with_residual;
  m.reduction = reduction;
  m.enable_spatial = enable_spatial;
  m.enable_channel = enable_channel;
  return m;
}

MatchNeckImpl::MatchNeckImpl(const MatchNeckConfig& cfg) : cfg_(cfg) {
  if (cfg_.in_channels % 2 != 0) {
    throw Error(errc::kConfigMismatch,
                "MatchNeck needs an even width, got " + std::to_string(cfg_.in_channels));
  }
  if (cfg_.out_channels < 1) throw Error(errc::kInvalidConfig, "MatchNeck output width < 1");
  msfm = register_module("msfm", MSFM(cfg_.msfm_config()));
  project = register_module(
      "project", torch::nn::Conv2d(conv_options(cfg_.in_channels, cfg_.out_channels, 1)));
}

torch::Tensor MatchNeckImpl::forward(const torch::Tensor& fm) {
  if (fm.dim() != 4 || fm.size(1) != cfg_.in_channels) {
    throw Error(errc::kConfigMismatch, "MatchNeck expects " + std::to_string(cfg_.in_channels) +
                                           " channels");
  }
  auto halves = fm.chunk(2, 1);
  return counted_conv(project, torch::cat({halves[0], msfm->forward(halves[1])}, 1));
}

}  // namespace lsm

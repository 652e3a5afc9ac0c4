#include "lsm/lae.hpp"

#include "lsm/error.hpp"
#include "lsm/layers.hpp"

#include <string>

namespace lsm {

namespace {

void require_even(const torch::Tensor& fm) {
  if (fm.dim() != 4) {
    throw Error(errc::kConfigMismatch,
                "expected a (b, c, h, w) feature map, got " + std::to_string(fm.dim()) + " dims");
  }
  if (fm.size(2) % 2 != 0 || fm.size(3) % 2 != 0) {
    throw Error(errc::kOddSpatialDims, "spatial dims " + std::to_string(fm.size(2)) + "x" +
                                           std::to_string(fm.size(3)) + " are not even");
  }
}

void require_channels(const torch::Tensor& t, std::int64_t dim, std::int64_t expected) {
  if (t.size(dim) != expected) {
    throw Error(errc::kConfigMismatch, "expected " + std::to_string(expected) +
                                           " channels, got " + std::to_string(t.size(dim)));
  }
}

// (b, c, h, w) -> (b*4, c, h/2, w/2), slice-major.
torch::Tensor regroup_slices(const torch::Tensor& fm) {
  const auto b = fm.size(0), c = fm.size(1), h2 = fm.size(2) / 2, w2 = fm.size(3) / 2;
  return fm.view({b, c, h2, 2, w2, 2})
      .permute({0, 3, 5, 1, 2, 4})
      .reshape({b * kLaeSlices, c, h2, w2});
}

}  // namespace

void LAEConfig::validate() const {
  if (groups < 1 || in_channels < 1 || out_channels < 1) {
    throw Error(errc::kInvalidConfig, "LAE widths and groups must be >= 1");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw Error(errc::kInvalidConfig, "LAE widths " + std::to_string(in_channels) + "/" +
                                          std::to_string(out_channels) +
                                          " not divisible by groups " + std::to_string(groups));
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw Error(errc::kInvalidConfig, "LAE kernel size must be odd");
  }
}

torch::Tensor space_to_depth_regroup(const torch::Tensor& fm) {
  require_even(fm);
  const auto b = fm.size(0), c = fm.size(1), h2 = fm.size(2) / 2, w2 = fm.size(3) / 2;
  return fm.view({b, c, h2, 2, w2, 2})
      .permute({0, 1, 2, 4, 3, 5})
      .reshape({b, c, h2, w2, kLaeSlices});
}

torch::Tensor depth_to_space_regroup(const torch::Tensor& fm5) {
  if (fm5.dim() != 5 || fm5.size(4) != kLaeSlices) {
    throw Error(errc::kConfigMismatch, "expected a (b, c, h, w, 4) tensor");
  }
  const auto b = fm5.size(0), c = fm5.size(1), h2 = fm5.size(2), w2 = fm5.size(3);
  return fm5.reshape({b, c, h2, w2, 2, 2})
      .permute({0, 1, 2, 4, 3, 5})
      .reshape({b, c, h2 * 2, w2 * 2});
}

LightweightBranchImpl::LightweightBranchImpl(const LAEConfig& cfg, bool grouped)
    : in_(cfg.in_channels) {
  cfg.validate();
  conv = register_module("conv", torch::nn::Conv2d(conv_options(
                                     cfg.in_channels, cfg.out_channels, cfg.kernel_size, 1,
                                     grouped ? cfg.groups : 1)));
}

torch::Tensor LightweightBranchImpl::forward_slices(const torch::Tensor& slices) {
  require_channels(slices, 1, in_);
  return counted_conv(conv, slices);
}

torch::Tensor LightweightBranchImpl::forward(const torch::Tensor& fm5) {
  if (fm5.dim() != 5 || fm5.size(4) != kLaeSlices) {
    throw Error(errc::kConfigMismatch, "expected a (b, c, h, w, 4) tensor");
  }
  require_channels(fm5, 1, in_);
  const auto b = fm5.size(0), h = fm5.size(2), w = fm5.size(3);
  auto slices = fm5.permute({0, 4, 1, 2, 3}).reshape({b * kLaeSlices, in_, h, w});
  auto out = forward_slices(slices);
  return out.view({b, kLaeSlices, out.size(1), h, w}).permute({0, 2, 3, 4, 1}).contiguous();
}

AdaptiveWeightsImpl::AdaptiveWeightsImpl(const LAEConfig& cfg) : in_(cfg.in_channels) {
  conv = register_module(
      "conv", torch::nn::Conv2d(conv_options(cfg.in_channels, kLaeSlices, 1, 1, 1, true)));
}

torch::Tensor AdaptiveWeightsImpl::logits(const torch::Tensor& fm) {
  require_even(fm);
  require_channels(fm, 1, in_);
  return counted_conv(conv, torch::avg_pool2d(fm, 2, 2));
}

torch::Tensor AdaptiveWeightsImpl::forward(const torch::Tensor& fm) {
  return torch::softmax(logits(fm), 1).permute({0, 2, 3, 1}).unsqueeze(1);
}

DimensionMappingImpl::DimensionMappingImpl(const LAEConfig& cfg) : in_(cfg.in_channels) {
  if (cfg.enable_dm) {
    cfg.validate();
    conv = register_module("conv", torch::nn::Conv2d(conv_options(
                                       cfg.in_channels, cfg.out_channels, 1, 1, cfg.groups)));
  } else if (cfg.in_channels != cfg.out_channels) {
    throw Error(errc::kConfigMismatch,
                "dimension mapping disabled but widths differ (" +
                    std::to_string(cfg.in_channels) + " vs " + std::to_string(cfg.out_channels) +
                    ")");
  }
}

torch::Tensor DimensionMappingImpl::forward(const torch::Tensor& fm) {
  require_channels(fm, 1, in_);
  if (!enabled()) return fm;
  return counted_conv(conv, fm);
}

LAEImpl::LAEImpl(const LAEConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // With DM the grouped projection keeps the input width and the mapping
  // lifts it to the output width; without DM the projection does both.
  LAEConfig branch_cfg = cfg_;
  if (cfg_.enable_dm) branch_cfg.out_channels = cfg_.in_channels;
  branch = register_module("branch", LightweightBranch(branch_cfg, cfg_.enable_le));

  LAEConfig map_cfg = cfg_;
  map_cfg.in_channels = branch_cfg.out_channels;
  map_cfg.kernel_size = 1;
  mapping = register_module("mapping", DimensionMapping(map_cfg));

  if (cfg_.enable_ae) weights = register_module("weights", AdaptiveWeights(cfg_));
}

torch::Tensor LAEImpl::projected_slices(const torch::Tensor& fm) {
  require_even(fm);
  require_channels(fm, 1, cfg_.in_channels);
  const auto b = fm.size(0), h2 = fm.size(2) / 2, w2 = fm.size(3) / 2;
  auto v = mapping->forward(branch->forward_slices(regroup_slices(fm)));
  return v.view({b, kLaeSlices, cfg_.out_channels, h2, w2});
}

torch::Tensor LAEImpl::branch_slices(const torch::Tensor& fm) {
  return projected_slices(fm).permute({0, 2, 3, 4, 1}).contiguous();
}

torch::Tensor LAEImpl::forward(const torch::Tensor& fm) {
  auto v = projected_slices(fm);
  if (weights.is_empty()) return v.mean(1);
  // (b, 1, h, w, 4) -> (b, 4, 1, h, w) to broadcast over channels.
  auto w = weights->forward(fm).permute({0, 4, 1, 2, 3});
  record_macs(v.numel());
  return (v * w).sum(1);
}

}  // namespace lsm

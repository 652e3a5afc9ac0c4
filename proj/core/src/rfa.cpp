#include "lsm/rfa.hpp"

#include "lsm/error.hpp"
#include "lsm/layers.hpp"

#include <cmath>
#include <string>

namespace lsm {

void RFAConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw Error(errc::kInvalidConfig, "RFAConv widths must be >= 1");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw Error(errc::kInvalidConfig, "RFAConv kernel size must be odd");
  }
  if (stride != 1 && stride != 2) throw Error(errc::kInvalidConfig, "RFAConv stride must be 1 or 2");
}

RFAConvImpl::RFAConvImpl(const RFAConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto k = cfg_.kernel_size;
  const auto c = cfg_.in_channels;
  attend = register_module("attend", torch::nn::Conv2d(conv_options(c, c * k * k, 1, 1, c, true)));
  weight = register_parameter("weight", torch::empty({cfg_.out_channels, c, k, k}));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
}

std::pair<std::int64_t, std::int64_t> RFAConvImpl::output_hw(const torch::Tensor& fm) const {
  const auto k = cfg_.kernel_size, s = cfg_.stride, p = k / 2;
  return {(fm.size(2) + 2 * p - k) / s + 1, (fm.size(3) + 2 * p - k) / s + 1};
}

torch::Tensor RFAConvImpl::attention_logits(const torch::Tensor& fm) {
  if (fm.dim() != 4 || fm.size(1) != cfg_.in_channels) {
    throw Error(errc::kConfigMismatch, "RFAConv expects " + std::to_string(cfg_.in_channels) +
                                           " channels");
  }
  const auto k = cfg_.kernel_size;
  auto pooled = torch::avg_pool2d(fm, k, cfg_.stride, k / 2, /*ceil_mode=*/false,
                                  /*count_include_pad=*/false);
  auto logits = counted_conv(attend, pooled);
  return logits.view({fm.size(0), cfg_.in_channels, k * k, logits.size(2), logits.size(3)});
}

torch::Tensor RFAConvImpl::attention(const torch::Tensor& fm) {
  return torch::softmax(attention_logits(fm), 2);
}

torch::Tensor RFAConvImpl::receptive_fields(const torch::Tensor& fm) const {
  const auto k = cfg_.kernel_size;
  auto cols = torch::nn::functional::unfold(
      fm, torch::nn::functional::UnfoldFuncOptions({k, k}).padding(k / 2).stride(cfg_.stride));
  const auto [oh, ow] = output_hw(fm);
  return cols.view({fm.size(0), cfg_.in_channels, k * k, oh, ow});
}

torch::Tensor RFAConvImpl::forward(const torch::Tensor& fm) {
  auto att = attention(fm);
  auto fields = receptive_fields(fm) * att;
  const auto b = fm.size(0), k2 = att.size(2), oh = att.size(3), ow = att.size(4);
  const auto depth = cfg_.in_channels * k2;
  record_macs(fields.numel());
  auto out = torch::matmul(weight.view({cfg_.out_channels, depth}), fields.view({b, depth, oh * ow}));
  record_macs(b * cfg_.out_channels * depth * oh * ow);
  return out.view({b, cfg_.out_channels, oh, ow});
}

}  // namespace lsm

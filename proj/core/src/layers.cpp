#include "lsm/layers.hpp"

#include <numeric>

namespace lsm {

namespace {
thread_local MacRecorder* g_recorder = nullptr;
}

void MacRecorder::add(std::int64_t macs) { by_scope_[scope_] += macs; }

std::int64_t MacRecorder::total() const {
  return std::accumulate(by_scope_.begin(), by_scope_.end(), std::int64_t{0},
                         [](std::int64_t acc, const auto& kv) { return acc + kv.second; });
}

MacRecorderGuard::MacRecorderGuard(MacRecorder& recorder) : previous_(g_recorder) {
  g_recorder = &recorder;
}

MacRecorderGuard::~MacRecorderGuard() { g_recorder = previous_; }

MacRecorder* active_recorder() { return g_recorder; }

void record_macs(std::int64_t macs) {
  if (g_recorder != nullptr) g_recorder->add(macs);
}

void record_scope(const std::string& scope) {
  if (g_recorder != nullptr) g_recorder->set_scope(scope);
}

torch::Tensor counted_conv(torch::nn::Conv2d& conv, const torch::Tensor& x) {
  auto y = conv->forward(x);
  if (g_recorder != nullptr) {
    const auto& opt = conv->options;
    const auto& k = opt.kernel_size();
    const std::int64_t per_out = (opt.in_channels() / opt.groups()) * k->at(0) * k->at(1);
    g_recorder->add(y.numel() * per_out);
  }
  return y;
}

torch::nn::Conv2dOptions conv_options(std::int64_t in, std::int64_t out, std::int64_t k,
                                      std::int64_t stride, std::int64_t groups, bool bias) {
  return torch::nn::Conv2dOptions(in, out, k)
      .stride(stride)
      .padding(k / 2)
      .groups(groups)
      .bias(bias);
}

torch::nn::BatchNormOptions bn_options(std::int64_t channels) {
  return torch::nn::BatchNormOptions(channels).eps(1e-3).momentum(0.03);
}

ConvBnActImpl::ConvBnActImpl(std::int64_t in, std::int64_t out, std::int64_t k,
                             std::int64_t stride, std::int64_t groups)
    : conv(conv_options(in, out, k, stride, groups)), bn(bn_options(out)) {
  register_module("conv", conv);
  register_module("bn", bn);
}

torch::Tensor ConvBnActImpl::forward(const torch::Tensor& x) {
  return torch::silu(bn->forward(counted_conv(conv, x)));
}

NormActImpl::NormActImpl(std::int64_t channels) : bn(bn_options(channels)) {
  register_module("bn", bn);
}

torch::Tensor NormActImpl::forward(const torch::Tensor& x) { return torch::silu(bn->forward(x)); }

}  // namespace lsm

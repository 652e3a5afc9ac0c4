#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>

namespace lsm {

/// Multiply-accumulate tally used by the profiler. Layers report into the
/// active recorder (if any) during a forward pass; nothing is recorded when no
/// recorder is installed.
class MacRecorder {
 public:
  void add(std::int64_t macs);
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }
  std::int64_t total() const;
  const std::map<std::string, std::int64_t>& by_scope() const { return by_scope_; }

 private:
  std::string scope_ = "other";
  std::map<std::string, std::int64_t> by_scope_;
};

/// Installs a recorder for the current thread for the lifetime of the guard.
class MacRecorderGuard {
 public:
  explicit MacRecorderGuard(MacRecorder& recorder);
  ~MacRecorderGuard();
  MacRecorderGuard(const MacRecorderGuard&) = delete;
  MacRecorderGuard& operator=(const MacRecorderGuard&) = delete;

 private:
  MacRecorder* previous_;
};

MacRecorder* active_recorder();
void record_macs(std::int64_t macs);
/// Sets the profiler scope if a recorder is active.
void record_scope(const std::string& scope);

/// Conv2d forward that reports its MACs: out elements x (in/groups) x k^2.
torch::Tensor counted_conv(torch::nn::Conv2d& conv, const torch::Tensor& x);

torch::nn::Conv2dOptions conv_options(std::int64_t in, std::int64_t out, std::int64_t k,
                                      std::int64_t stride = 1, std::int64_t groups = 1,
                                      bool bias = false);

/// Convolution -> BatchNorm -> SiLU.
class ConvBnActImpl : public torch::nn::Module {
 public:
  ConvBnActImpl(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                std::int64_t groups = 1);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnAct);

/// BatchNorm -> SiLU applied after blocks that end in a bare convolution.
class NormActImpl : public torch::nn::Module {
 public:
  explicit NormActImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(NormAct);

torch::nn::BatchNormOptions bn_options(std::int64_t channels);

}  // namespace lsm

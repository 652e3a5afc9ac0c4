#pragma once

#include <stdexcept>
#include <string>

namespace lsm {

/// Error carrying a stable, machine-parseable code ("odd-spatial-dims",
/// "config-mismatch", "input-size", "corrupt-checkpoint", ...) next to a
/// human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message);

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kOddSpatialDims = "odd-spatial-dims";
inline constexpr const char* kConfigMismatch = "config-mismatch";
inline constexpr const char* kInvalidConfig = "invalid-config";
inline constexpr const char* kInputSize = "input-size";
inline constexpr const char* kCorruptCheckpoint = "corrupt-checkpoint";
inline constexpr const char* kCheckpointMismatch = "checkpoint-mismatch";
inline constexpr const char* kDegenerateBox = "degenerate-box";
inline constexpr const char* kOutOfRange = "out-of-range";
inline constexpr const char* kDataset = "dataset";
inline constexpr const char* kIo = "io";
inline constexpr const char* kNonFiniteLoss = "non-finite-loss";
inline constexpr const char* kUnknownLayer = "unknown-layer";
}  // namespace errc

}  // namespace lsm

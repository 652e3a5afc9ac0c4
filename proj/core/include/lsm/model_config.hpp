#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lsm {

/// Detector topology. Every field is written explicitly to the JSON config so
/// widths and depths are data, not code.
struct ModelConfig {
  std::int64_t num_classes = 3;
  std::vector<std::string> class_names = {"RBC", "WBC", "Platelets"};
  std::int64_t input_size = 640;
  std::int64_t stem_channels = 16;
  std::int64_t rfa_channels = 16;
  std::array<std::int64_t, 4> stage_widths = {32, 64, 128, 256};
  std::array<std::int64_t, 4> stage_depths = {1, 1, 1, 2};
  std::int64_t neck_depth = 0;
  std::array<std::int64_t, 4> head_strides = {4, 8, 16, 32};
  std::int64_t reg_max = 16;
  std::int64_t head_box_channels = 64;
  std::int64_t head_cls_channels = 32;
  std::int64_t lae_groups = 4;
  std::int64_t lae_kernel = 1;
  std::int64_t msfm_reduction = 2;
  std::int64_t rfa_kernel = 3;
  // Block-level ablation switches.
  bool use_rfablock = true;
  bool use_lae = true;
  bool use_msfm = true;
  // LAE internals.
  bool lae_enable_le = true;
  bool lae_enable_ae = true;
  bool lae_enable_dm = true;
  // MSFM internals.
  bool msfm_enable_spatial = true;
  bool msfm_enable_channel = true;
  std::uint64_t seed = 0;

  /// Throws Error(invalid-config) on any violated invariant.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace lsm

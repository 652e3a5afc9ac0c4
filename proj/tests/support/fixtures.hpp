#pragma once

#include "lsm/model_config.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fixture {

// Smallest topology the validators accept; fast enough for exhaustive checks.
inline lsm::ModelConfig mini_config(std::int64_t input_size = 64) {
  lsm::ModelConfig c;
  c.input_size = input_size;
  c.stem_channels = 8;
  c.rfa_channels = 8;
  c.stage_widths = {16, 16, 16, 16};
  c.stage_depths = {1, 1, 1, 1};
  c.head_box_channels = 16;
  c.head_cls_channels = 16;
  c.reg_max = 8;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lsm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture

#pragma once

#include "lsm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lsm {

/// Exact number of learnable scalars.
std::int64_t count_params(Detector& model);

/// 2 x multiply-accumulates of convolutions and attention products for one
/// image at input_size x input_size. Pooling, activations, normalization and
/// additions are not counted.
std::int64_t estimate_flops(Detector& model, std::int64_t input_size);

struct ProfileRow {
  std::string module;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct ProfileReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t input_size = 0;
  std::vector<ProfileRow> rows;  // sums to the totals exactly

  double params_m() const { return static_cast<double>(params) / 1e6; }
  double gflops() const { return static_cast<double>(flops) / 1e9; }
  std::string to_table() const;
  std::string to_json() const;
};

ProfileReport profile(const ModelConfig& cfg);
ProfileReport profile(Detector& model, std::int64_t input_size);

}  // namespace lsm

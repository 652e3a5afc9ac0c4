#pragma once

#include "lsm/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lsm {

/// Blood-smear-like scenes: pink background, red cells, larger purple
/// leukocytes with a nucleus, small dark platelets. Objects do not overlap.
struct SyntheticSpec {
  int num_train = 8;
  int num_val = 0;
  int width = 320;
  int height = 240;
  int min_objects = 3;
  int max_objects = 7;
  std::uint64_t seed = 0;
  AnnotationFormat format = AnnotationFormat::kYoloText;
  std::vector<std::string> class_names{"RBC", "WBC", "Platelets"};
};

/// Renders one scene with its boxes. Deterministic in (spec.seed, index).
struct SyntheticImage {
  std::vector<unsigned char> png;
  ImageRecord record;
};
SyntheticImage render_synthetic(const SyntheticSpec& spec, int index);

/// Writes images/, labels/ or annotations.json, classes.txt and the split
/// manifests under `root`. Returns the dataset as load_dataset would see it.
Dataset write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec);

}  // namespace lsm

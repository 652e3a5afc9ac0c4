#pragma once

#include "lsm/box.hpp"
#include "lsm/model.hpp"

#include <torch/torch.h>

#include <vector>

namespace lsm {

struct Detection {
  Box box;
  double score = 0;
  int class_id = 0;
};

/// Detections of one image.
using ImageDetections = std::vector<Detection>;
/// Detections of a batch, one entry per image.
using DetectionSet = std::vector<ImageDetections>;

/// All levels flattened to one location axis, ordered level by level
/// (stride 4 first), row-major within a level.
struct FlatPredictions {
  torch::Tensor cls_logits;   // (b, A, num_classes)
  torch::Tensor dist_logits;  // (b, A, 4, reg_max)
  torch::Tensor anchors;      // (A, 2) cell centres in pixels
  torch::Tensor strides;      // (A, 1)
};

FlatPredictions flatten(const RawHeadOutput& raw, std::int64_t reg_max);

/// Expected bin index per side: sum_i i * softmax(logits)_i, (..., reg_max) -> (...).
torch::Tensor distribution_expectation(const torch::Tensor& dist_logits);

/// Boxes (b, A, 4) as x1, y1, x2, y2 in pixels.
torch::Tensor decode_box_tensor(const FlatPredictions& flat);

/// Pre-NMS detections: best class per location, sigmoid score, keeps scores
/// >= score_thr. Boxes are clipped to [0, image_size] and degenerate ones dropped.
DetectionSet decode_boxes(const RawHeadOutput& raw, std::int64_t reg_max, double score_thr,
                          double image_size);

}  // namespace lsm

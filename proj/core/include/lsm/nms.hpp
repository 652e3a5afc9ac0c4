#pragma once

#include "lsm/decode.hpp"

#include <cstddef>

namespace lsm {

struct NmsOptions {
  double score_thr = 0.001;
  double iou_thr = 0.7;
  std::size_t max_det = 300;
  // Highest-scoring candidates considered before suppression.
  std::size_t max_candidates = 3000;
};

/// Per-class greedy suppression. Candidates are ordered by score descending,
/// ties by input index; a candidate is dropped when it overlaps a kept box of
/// the same class with IoU > iou_thr. Output is in that order.
ImageDetections nms(const ImageDetections& dets, const NmsOptions& opts = {});

}  // namespace lsm

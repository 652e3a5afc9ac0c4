#pragma once

#include "lsm/box.hpp"
#include "lsm/decode.hpp"
#include "lsm/model.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace lsm {

/// Composite loss weights and assigner settings. Loss = gamma * BCE +
/// zeta * DFL + eta * SIoU.
struct LossConfig {
  double gamma = 0.5;
  double zeta = 1.5;
  double eta = 7.5;
  std::int64_t reg_max = 16;
  // Task-aligned assignment: score^alpha * IoU^beta, top-k per ground truth.
  std::int64_t topk = 10;
  double alpha = 0.5;
  double beta = 6.0;
  // SIoU shape-cost exponent.
  double siou_theta = 4.0;

  void validate() const;
};

/// Ground truth of one image in network-input pixel coordinates.
struct ImageTargets {
  std::vector<Box> boxes;
  std::vector<int> classes;
};

/// SIoU loss for one pair of boxes. Throws Error(degenerate-box) if either box
/// has zero area.
double siou_loss(const Box& pred, const Box& target, double theta = 4.0);

/// Row-wise SIoU loss, (n, 4) x (n, 4) -> (n). Boxes are x1, y1, x2, y2.
torch::Tensor siou_loss(const torch::Tensor& pred, const torch::Tensor& target,
                        double theta = 4.0);

/// Distribution focal loss per row: cross-entropy on the two bins bracketing
/// the target, linearly weighted. logits (n, reg_max), target (n) in
/// [0, reg_max - 1]; throws Error(out-of-range) otherwise.
torch::Tensor dfl_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// Elementwise binary cross-entropy on sigmoid(logits), summed and divided by
/// `normalizer`.
torch::Tensor bce_cls_loss(const torch::Tensor& logits, const torch::Tensor& targets,
                           double normalizer = 1.0);

struct ImageAssignment {
  std::vector<int> matched_gt;  // per location, -1 for background
  std::vector<double> score;    // normalized alignment in [0, 1]
};

struct AssignmentResult {
  std::vector<ImageAssignment> images;

  std::int64_t num_positive() const;
};

/// Task-aligned assignment. Candidates for a ground truth are locations whose
/// centre lies strictly inside it, ranked by score^alpha * IoU^beta (ties by
/// lower location index); the top k are kept. A location claimed by several
/// ground truths goes to the highest alignment (ties to the lower gt index).
/// A ground truth left without locations then takes its best candidate from
/// an owner that keeps at least one.
AssignmentResult assign_targets(const FlatPredictions& flat, const std::vector<ImageTargets>& targets,
                                const LossConfig& cfg);
AssignmentResult assign_targets(const RawHeadOutput& raw, const std::vector<ImageTargets>& targets,
                                const LossConfig& cfg);

struct LossComponents {
  torch::Tensor total;
  torch::Tensor bce;
  torch::Tensor dfl;
  torch::Tensor siou;
};

/// Combines already computed components with the configured weights.
torch::Tensor combine_loss(const torch::Tensor& bce, const torch::Tensor& dfl,
                           const torch::Tensor& siou, const LossConfig& cfg);

/// Composite loss under a fixed assignment. All three terms are divided by
/// max(1, number of positives).
LossComponents total_loss(const FlatPredictions& flat, const std::vector<ImageTargets>& targets,
                          const AssignmentResult& assignment, const LossConfig& cfg);
LossComponents total_loss(const RawHeadOutput& raw, const std::vector<ImageTargets>& targets,
                          const AssignmentResult& assignment, const LossConfig& cfg);

}  // namespace lsm

#include "lsm/error.hpp"
#include "lsm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lsm {

namespace {

ImageAssignment assign_image(const torch::Tensor& boxes,    // (A, 4) double
                             const torch::Tensor& scores,   // (A, nc) double
                             const torch::Tensor& anchors,  // (A, 2) double
                             const ImageTargets& targets, const LossConfig& cfg) {
  const auto a = boxes.size(0);
  const auto nc = scores.size(1);
  ImageAssignment out;
  out.matched_gt.assign(static_cast<std::size_t>(a), -1);
  out.score.assign(static_cast<std::size_t>(a), 0.0);
  const auto num_gt = targets.boxes.size();
  if (num_gt == 0) return out;
  if (targets.classes.size() != num_gt) {
    throw Error(errc::kConfigMismatch, "ground truth boxes and classes differ in length");
  }

  auto box = boxes.accessor<double, 2>();
  auto score = scores.accessor<double, 2>();
  auto anc = anchors.accessor<double, 2>();

  // Per gt: candidate (location, alignment, iou), sorted by alignment desc,
  // location asc, truncated to top-k.
  struct Candidate {
    std::int64_t loc;
    double align;
    double iou;
  };
  std::vector<std::vector<Candidate>> cands(num_gt);
  for (std::size_t g = 0; g < num_gt; ++g) {
    const Box& gt = targets.boxes[g];
    const int cls = targets.classes[g];
    if (cls < 0 || cls >= nc) throw Error(errc::kOutOfRange, "ground-truth class id out of range");
    if (!gt.valid()) continue;
    for (std::int64_t j = 0; j < a; ++j) {
      const double ax = anc[j][0], ay = anc[j][1];
      if (!(ax > gt.x1 && ax < gt.x2 && ay > gt.y1 && ay < gt.y2)) continue;
      const Box pred{box[j][0], box[j][1], box[j][2], box[j][3]};
      const double ov = iou(pred, gt);
      const double s = std::max(score[j][cls], 0.0);
      const double align = std::pow(s, cfg.alpha) * std::pow(ov, cfg.beta);
      cands[g].push_back({j, align, ov});
    }
    auto& c = cands[g];
    std::stable_sort(c.begin(), c.end(), [](const Candidate& l, const Candidate& r) {
      if (l.align != r.align) return l.align > r.align;
      return l.loc < r.loc;
    });
    if (static_cast<std::int64_t>(c.size()) > cfg.topk) c.resize(static_cast<std::size_t>(cfg.topk));
  }

  // Resolve locations claimed by more than one gt.
  std::vector<double> owner_align(static_cast<std::size_t>(a), -1.0);
  for (std::size_t g = 0; g < num_gt; ++g) {
    for (const auto& c : cands[g]) {
      auto& owner = out.matched_gt[static_cast<std::size_t>(c.loc)];
      auto& best = owner_align[static_cast<std::size_t>(c.loc)];
      if (owner < 0 || c.align > best) {  // ties keep the lower gt index
        owner = static_cast<int>(g);
        best = c.align;
      }
    }
  }

  std::vector<std::int64_t> owned(num_gt, 0);
  for (int g : out.matched_gt) {
    if (g >= 0) ++owned[static_cast<std::size_t>(g)];
  }
  for (std::size_t g = 0; g < num_gt; ++g) {
    if (owned[g] > 0) continue;
    for (const auto& c : cands[g]) {
      auto& owner = out.matched_gt[static_cast<std::size_t>(c.loc)];
      if (owner >= 0 && owned[static_cast<std::size_t>(owner)] > 1) {
        --owned[static_cast<std::size_t>(owner)];
        owner = static_cast<int>(g);
        owned[g] = 1;
        break;
      }
    }
  }

  // Normalized alignment targets: align * max_iou_g / max_align_g.
  std::vector<double> max_align(num_gt, 0.0), max_iou(num_gt, 0.0);
  std::vector<double> loc_align(static_cast<std::size_t>(a), 0.0);
  for (std::size_t g = 0; g < num_gt; ++g) {
    for (const auto& c : cands[g]) {
      if (out.matched_gt[static_cast<std::size_t>(c.loc)] != static_cast<int>(g)) continue;
      loc_align[static_cast<std::size_t>(c.loc)] = c.align;
      max_align[g] = std::max(max_align[g], c.align);
      max_iou[g] = std::max(max_iou[g], c.iou);
    }
  }
  for (std::int64_t j = 0; j < a; ++j) {
    const int g = out.matched_gt[static_cast<std::size_t>(j)];
    if (g < 0) continue;
    const auto gi = static_cast<std::size_t>(g);
    const double v = loc_align[static_cast<std::size_t>(j)] * max_iou[gi] / (max_align[gi] + 1e-9);
    out.score[static_cast<std::size_t>(j)] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace

AssignmentResult assign_targets(const FlatPredictions& flat, const std::vector<ImageTargets>& targets,
                                const LossConfig& cfg) {
  torch::NoGradGuard no_grad;
  const auto b = flat.cls_logits.size(0);
  if (static_cast<std::int64_t>(targets.size()) != b) {
    throw Error(errc::kConfigMismatch, "one ImageTargets entry per image is required");
  }
  auto boxes = decode_box_tensor(flat).detach().to(torch::kFloat64).contiguous();
  auto scores = torch::sigmoid(flat.cls_logits.detach()).to(torch::kFloat64).contiguous();
  auto anchors = flat.anchors.detach().to(torch::kFloat64).contiguous();
  AssignmentResult result;
  for (std::int64_t i = 0; i < b; ++i) {
    result.images.push_back(assign_image(boxes[i], scores[i], anchors,
                                         targets[static_cast<std::size_t>(i)], cfg));
  }
  return result;
}

AssignmentResult assign_targets(const RawHeadOutput& raw, const std::vector<ImageTargets>& targets,
                                const LossConfig& cfg) {
  return assign_targets(flatten(raw, cfg.reg_max), targets, cfg);
}

}  // namespace lsm

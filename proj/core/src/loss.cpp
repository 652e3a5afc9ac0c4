#include "lsm/loss.hpp"

#include "lsm/error.hpp"

#include <cmath>
#include <numbers>

namespace lsm {

namespace {
constexpr double kEps = 1e-7;
}

void LossConfig::validate() const {
  if (!(gamma > 0 && zeta > 0 && eta > 0)) throw Error(errc::kInvalidConfig, "loss weights must be > 0");
  if (reg_max < 2) throw Error(errc::kInvalidConfig, "reg_max must be >= 2");
  if (topk < 1) throw Error(errc::kInvalidConfig, "assigner topk must be >= 1");
  if (siou_theta <= 0) throw Error(errc::kInvalidConfig, "siou theta must be > 0");
}

torch::Tensor siou_loss(const torch::Tensor& pred, const torch::Tensor& target, double theta) {
  auto p = pred.unbind(-1);
  auto t = target.unbind(-1);
  const auto &px1 = p[0], &py1 = p[1], &px2 = p[2], &py2 = p[3];
  const auto &tx1 = t[0], &ty1 = t[1], &tx2 = t[2], &ty2 = t[3];

  auto w1 = px2 - px1, h1 = py2 - py1 + kEps;
  auto w2 = tx2 - tx1, h2 = ty2 - ty1 + kEps;

  auto inter = (torch::minimum(px2, tx2) - torch::maximum(px1, tx1)).clamp_min(0) *
               (torch::minimum(py2, ty2) - torch::maximum(py1, ty1)).clamp_min(0);
  auto uni = w1 * h1 + w2 * h2 - inter + kEps;
  auto iou = inter / uni;

  auto cw = torch::maximum(px2, tx2) - torch::minimum(px1, tx1) + kEps;
  auto ch = torch::maximum(py2, ty2) - torch::minimum(py1, ty1) + kEps;

  // Angle cost.
  auto s_cw = (tx1 + tx2 - px1 - px2) * 0.5;
  auto s_ch = (ty1 + ty2 - py1 - py2) * 0.5;
  auto sigma = torch::sqrt(s_cw * s_cw + s_ch * s_ch + kEps);
  auto sin_alpha_1 = torch::abs(s_cw) / sigma;
  auto sin_alpha_2 = torch::abs(s_ch) / sigma;
  const double threshold = std::numbers::sqrt2 / 2.0;
  auto sin_alpha = torch::where(sin_alpha_1 > threshold, sin_alpha_2, sin_alpha_1);
  auto angle_cost = torch::cos(torch::arcsin(sin_alpha) * 2 - std::numbers::pi / 2);

  // Distance cost.
  auto rho_x = (s_cw / cw).pow(2);
  auto rho_y = (s_ch / ch).pow(2);
  auto g = angle_cost - 2;
  auto distance_cost = 2 - torch::exp(g * rho_x) - torch::exp(g * rho_y);

  // Shape cost.
  auto omega_w = torch::abs(w1 - w2) / torch::maximum(w1, w2);
  auto omega_h = torch::abs(h1 - h2) / torch::maximum(h1, h2);
  auto shape_cost = (1 - torch::exp(-omega_w)).pow(theta) + (1 - torch::exp(-omega_h)).pow(theta);

  return 1 - (iou - 0.5 * (distance_cost + shape_cost));
}

double siou_loss(const Box& pred, const Box& target, double theta) {
  if (!pred.valid()) throw Error(errc::kDegenerateBox, "predicted box has zero area");
  if (!target.valid()) throw Error(errc::kDegenerateBox, "target box has zero area");
  auto p = torch::tensor({pred.x1, pred.y1, pred.x2, pred.y2}, torch::kFloat64).view({1, 4});
  auto t = torch::tensor({target.x1, target.y1, target.x2, target.y2}, torch::kFloat64).view({1, 4});
  return siou_loss(p, t, theta).item<double>();
}

torch::Tensor dfl_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  const auto bins = logits.size(-1);
  if (target.numel() > 0) {
    const double lo = target.min().item<double>();
    const double hi = target.max().item<double>();
    if (lo < 0 || hi > static_cast<double>(bins - 1)) {
      throw Error(errc::kOutOfRange, "DFL target outside [0, " + std::to_string(bins - 1) + "]");
    }
  }
  auto left = target.floor().clamp_max(static_cast<double>(bins - 2)).to(torch::kLong);
  auto right = left + 1;
  auto w_left = right.to(target.scalar_type()) - target;
  auto w_right = target - left.to(target.scalar_type());
  auto logp = torch::log_softmax(logits, -1);
  auto nll_left = -logp.gather(-1, left.unsqueeze(-1)).squeeze(-1);
  auto nll_right = -logp.gather(-1, right.unsqueeze(-1)).squeeze(-1);
  return w_left * nll_left + w_right * nll_right;
}

torch::Tensor bce_cls_loss(const torch::Tensor& logits, const torch::Tensor& targets,
                           double normalizer) {
  return torch::binary_cross_entropy_with_logits(logits, targets, {}, {}, at::Reduction::Sum) /
         normalizer;
}

std::int64_t AssignmentResult::num_positive() const {
  std::int64_t n = 0;
  for (const auto& img : images) {
    for (int g : img.matched_gt) n += g >= 0 ? 1 : 0;
  }
  return n;
}

torch::Tensor combine_loss(const torch::Tensor& bce, const torch::Tensor& dfl,
                           const torch::Tensor& siou, const LossConfig& cfg) {
  return cfg.gamma * bce + cfg.zeta * dfl + cfg.eta * siou;
}

LossComponents total_loss(const FlatPredictions& flat, const std::vector<ImageTargets>& targets,
                          const AssignmentResult& assignment, const LossConfig& cfg) {
  const auto b = flat.cls_logits.size(0);
  const auto a = flat.cls_logits.size(1);
  const auto nc = flat.cls_logits.size(2);
  const auto reg_max = flat.dist_logits.size(-1);
  const auto opts = flat.cls_logits.options();
  if (static_cast<std::int64_t>(targets.size()) != b ||
      static_cast<std::int64_t>(assignment.images.size()) != b) {
    throw Error(errc::kConfigMismatch, "targets/assignment batch size differs from predictions");
  }

  std::vector<double> scores(static_cast<std::size_t>(b * a * nc), 0.0);
  std::vector<std::int64_t> pos_b, pos_a;
  std::vector<double> pos_boxes;
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& img = assignment.images[static_cast<std::size_t>(i)];
    const auto& tg = targets[static_cast<std::size_t>(i)];
    if (static_cast<std::int64_t>(img.matched_gt.size()) != a) {
      throw Error(errc::kConfigMismatch, "assignment does not cover every location");
    }
    for (std::int64_t j = 0; j < a; ++j) {
      const int g = img.matched_gt[static_cast<std::size_t>(j)];
      if (g < 0) continue;
      const auto cls = tg.classes.at(static_cast<std::size_t>(g));
      scores[static_cast<std::size_t>((i * a + j) * nc + cls)] = img.score[static_cast<std::size_t>(j)];
      pos_b.push_back(i);
      pos_a.push_back(j);
      const Box& bx = tg.boxes[static_cast<std::size_t>(g)];
      pos_boxes.insert(pos_boxes.end(), {bx.x1, bx.y1, bx.x2, bx.y2});
    }
  }
  const auto npos = static_cast<std::int64_t>(pos_b.size());
  const double norm = static_cast<double>(std::max<std::int64_t>(npos, 1));

  auto target_scores = torch::tensor(scores, torch::kFloat64).view({b, a, nc}).to(opts.dtype());
  LossComponents out;
  out.bce = bce_cls_loss(flat.cls_logits, target_scores, norm);

  if (npos == 0) {
    out.dfl = torch::zeros({}, opts);
    out.siou = torch::zeros({}, opts);
  } else {
    auto ib = torch::tensor(pos_b, torch::kLong);
    auto ia = torch::tensor(pos_a, torch::kLong);
    auto dist = flat.dist_logits.index({ib, ia});  // (P, 4, reg_max)
    auto anchors = flat.anchors.index_select(0, ia);
    auto strides = flat.strides.index_select(0, ia);
    auto tgt = torch::tensor(pos_boxes, torch::kFloat64).view({npos, 4}).to(opts.dtype());

    auto ltrb = distribution_expectation(dist) * strides;
    auto pred_boxes = torch::cat({anchors - ltrb.narrow(1, 0, 2), anchors + ltrb.narrow(1, 2, 2)}, 1);
    auto target_ltrb = torch::cat({anchors - tgt.narrow(1, 0, 2), tgt.narrow(1, 2, 2) - anchors}, 1) /
                       strides;
    target_ltrb = target_ltrb.clamp(0.0, static_cast<double>(reg_max - 1) - 0.01);

    out.dfl = dfl_loss(dist.reshape({npos * 4, reg_max}), target_ltrb.reshape({-1}))
                  .view({npos, 4})
                  .mean(1)
                  .sum() /
              norm;
    out.siou = siou_loss(pred_boxes, tgt, cfg.siou_theta).sum() / norm;
  }
  out.total = combine_loss(out.bce, out.dfl, out.siou, cfg);
  return out;
}

LossComponents total_loss(const RawHeadOutput& raw, const std::vector<ImageTargets>& targets,
                          const AssignmentResult& assignment, const LossConfig& cfg) {
  return total_loss(flatten(raw, cfg.reg_max), targets, assignment, cfg);
}

}  // namespace lsm

#include "lsm/decode.hpp"

#include <algorithm>

namespace lsm {

FlatPredictions flatten(const RawHeadOutput& raw, std::int64_t reg_max) {
  std::vector<torch::Tensor> cls, dist, anchors, strides;
  for (const auto& level : raw.levels) {
    const auto b = level.cls.size(0), nc = level.cls.size(1);
    const auto h = level.cls.size(2), w = level.cls.size(3);
    cls.push_back(level.cls.permute({0, 2, 3, 1}).reshape({b, h * w, nc}));
    dist.push_back(level.box.view({b, 4, reg_max, h, w}).permute({0, 3, 4, 1, 2}).reshape(
        {b, h * w, 4, reg_max}));
    auto opts = torch::TensorOptions().dtype(level.cls.dtype());
    auto ys = (torch::arange(h, opts) + 0.5) * static_cast<double>(level.stride);
    auto xs = (torch::arange(w, opts) + 0.5) * static_cast<double>(level.stride);
    auto grid = torch::meshgrid({ys, xs}, "ij");
    anchors.push_back(torch::stack({grid[1].reshape(-1), grid[0].reshape(-1)}, 1));
    strides.push_back(torch::full({h * w, 1}, static_cast<double>(level.stride), opts));
  }
  return {torch::cat(cls, 1), torch::cat(dist, 1), torch::cat(anchors, 0), torch::cat(strides, 0)};
}

torch::Tensor distribution_expectation(const torch::Tensor& dist_logits) {
  const auto bins = dist_logits.size(-1);
  auto proj = torch::arange(bins, dist_logits.options());
  return (torch::softmax(dist_logits, -1) * proj).sum(-1);
}

torch::Tensor decode_box_tensor(const FlatPredictions& flat) {
  auto ltrb = distribution_expectation(flat.dist_logits) * flat.strides;  // (b, A, 4)
  auto lt = ltrb.narrow(-1, 0, 2);
  auto rb = ltrb.narrow(-1, 2, 2);
  return torch::cat({flat.anchors - lt, flat.anchors + rb}, -1);
}

DetectionSet decode_boxes(const RawHeadOutput& raw, std::int64_t reg_max, double score_thr,
                          double image_size) {
  torch::NoGradGuard no_grad;
  auto flat = flatten(raw, reg_max);
  auto boxes = decode_box_tensor(flat).to(torch::kFloat64).contiguous();
  auto best = torch::sigmoid(flat.cls_logits).max(-1);
  auto scores = std::get<0>(best).to(torch::kFloat64).contiguous();
  auto classes = std::get<1>(best).contiguous();

  const auto b = boxes.size(0), a = boxes.size(1);
  auto box_acc = boxes.accessor<double, 3>();
  auto score_acc = scores.accessor<double, 2>();
  auto cls_acc = classes.accessor<std::int64_t, 2>();

  DetectionSet out(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < a; ++j) {
      const double s = score_acc[i][j];
      if (s < score_thr) continue;
      Box bx{std::clamp(box_acc[i][j][0], 0.0, image_size), std::clamp(box_acc[i][j][1], 0.0, image_size),
             std::clamp(box_acc[i][j][2], 0.0, image_size), std::clamp(box_acc[i][j][3], 0.0, image_size)};
      if (!bx.valid()) continue;
      out[static_cast<std::size_t>(i)].push_back({bx, s, static_cast<int>(cls_acc[i][j])});
    }
  }
  return out;
}

}  // namespace lsm

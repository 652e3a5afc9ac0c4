#include "lsm/nms.hpp"

#include <algorithm>
#include <numeric>

namespace lsm {

ImageDetections nms(const ImageDetections& dets, const NmsOptions& opts) {
  std::vector<std::size_t> order;
  order.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= opts.score_thr && dets[i].box.valid()) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  if (order.size() > opts.max_candidates) order.resize(opts.max_candidates);

  ImageDetections kept;
  std::vector<char> suppressed(order.size(), 0);
  for (std::size_t i = 0; i < order.size() && kept.size() < opts.max_det; ++i) {
    if (suppressed[i]) continue;
    const auto& d = dets[order[i]];
    kept.push_back(d);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (suppressed[j]) continue;
      const auto& o = dets[order[j]];
      if (o.class_id == d.class_id && iou(d.box, o.box) > opts.iou_thr) suppressed[j] = 1;
    }
  }
  return kept;
}

}  // namespace lsm

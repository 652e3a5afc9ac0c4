#include "lsm/metrics.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <numeric>

namespace lsm {

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

bool in_range(double area, const AreaRange& r) { return area >= r.lo && area <= r.hi; }

struct Scored {
  double score;
  bool tp;
};

}  // namespace

double average_precision(const std::vector<EvalImage>& images, int class_id, double iou_thr,
                         const AreaRange& area, std::size_t max_dets) {
  std::vector<Scored> all;
  std::size_t num_gt = 0;
  for (const auto& img : images) {
    // Ground truth of this class, non-ignored first (stable).
    std::vector<const Box*> gts;
    std::vector<char> ignore;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& g : img.ground_truth) {
        if (g.class_id != class_id) continue;
        const bool ig = !in_range(g.box.area(), area);
        if (ig != (pass == 1)) continue;
        gts.push_back(&g.box);
        ignore.push_back(ig);
        num_gt += ig ? 0 : 1;
      }
    }
    std::vector<const Detection*> dets;
    for (const auto& d : img.detections) {
      if (d.class_id == class_id) dets.push_back(&d);
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection* a, const Detection* b) { return a->score > b->score; });
    if (dets.size() > max_dets) dets.resize(max_dets);

    std::vector<char> taken(gts.size(), 0);
    for (const auto* d : dets) {
      int best = -1;
      double best_iou = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g]) continue;
        // A real match beats any ignored ground truth.
        if (best >= 0 && !ignore[static_cast<std::size_t>(best)] && ignore[g]) break;
        const double ov = iou(d->box, *gts[g]);
        if (ov < iou_thr) continue;
        if (best < 0 || ov > best_iou) {
          best = static_cast<int>(g);
          best_iou = ov;
        }
      }
      if (best >= 0) {
        taken[static_cast<std::size_t>(best)] = 1;
        if (ignore[static_cast<std::size_t>(best)]) continue;
        all.push_back({d->score, true});
      } else {
        if (!in_range(d->box.area(), area)) continue;
        all.push_back({d->score, false});
      }
    }
  }
  if (num_gt == 0) return -1;

  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  const std::size_t n = all.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (all[i].tp ? tp : fp) += 1;
    recall[i] = tp / static_cast<double>(num_gt);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

double class_ap(const std::vector<EvalImage>& images, int class_id, const std::vector<double>& thresholds,
                const AreaRange& area, std::size_t max_dets) {
  double sum = 0;
  for (double t : thresholds) {
    const double ap = average_precision(images, class_id, t, area, max_dets);
    if (ap < 0) return -1;
    sum += ap;
  }
  return thresholds.empty() ? -1 : sum / static_cast<double>(thresholds.size());
}

double mean_ap(const std::vector<EvalImage>& images, int num_classes, const std::vector<double>& thresholds,
               const AreaRange& area, std::size_t max_dets) {
  double sum = 0;
  int valid = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double ap = class_ap(images, c, thresholds, area, max_dets);
    if (ap < 0) continue;
    sum += ap;
    ++valid;
  }
  return valid ? sum / valid : -1;
}

std::string MetricsReport::to_json() const {
  detail::json j{{"ap", ap}, {"ap50", ap50}, {"ap_s", ap_s}, {"ap_m", ap_m}, {"ap_l", ap_l}};
  j["per_class"] = detail::json::object();
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    const auto name = i < class_names.size() ? class_names[i] : std::to_string(i);
    j["per_class"][name] = per_class[i];
  }
  return j.dump();
}

MetricsReport evaluate(const std::vector<EvalImage>& images, const std::vector<std::string>& class_names,
                       std::size_t max_dets) {
  const auto thr = coco_iou_thresholds();
  const int nc = static_cast<int>(class_names.size());
  MetricsReport r;
  r.class_names = class_names;
  r.ap = mean_ap(images, nc, thr, kAreaAll, max_dets);
  r.ap50 = mean_ap(images, nc, {0.5}, kAreaAll, max_dets);
  r.ap_s = mean_ap(images, nc, thr, kAreaSmall, max_dets);
  r.ap_m = mean_ap(images, nc, thr, kAreaMedium, max_dets);
  r.ap_l = mean_ap(images, nc, thr, kAreaLarge, max_dets);
  for (int c = 0; c < nc; ++c) r.per_class.push_back(class_ap(images, c, thr, kAreaAll, max_dets));
  return r;
}

}  // namespace lsm

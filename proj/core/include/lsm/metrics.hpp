#pragma once

#include "lsm/dataset.hpp"
#include "lsm/decode.hpp"

#include <limits>
#include <string>
#include <vector>

namespace lsm {

struct EvalImage {
  std::vector<Annotation> ground_truth;
  ImageDetections detections;
};

/// Inclusive area bounds in square pixels.
struct AreaRange {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
};
inline constexpr double kSmallArea = 32.0 * 32.0;
inline constexpr double kMediumArea = 96.0 * 96.0;
inline const AreaRange kAreaAll{};
inline const AreaRange kAreaSmall{0, kSmallArea};
inline const AreaRange kAreaMedium{kSmallArea, kMediumArea};
inline const AreaRange kAreaLarge{kMediumArea, std::numeric_limits<double>::infinity()};

/// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

/// Average precision of one class at one IoU threshold with 101-point
/// interpolation, or -1 when the class has no ground truth in `area`.
/// Detections are matched in descending score order (ties by image then
/// input order) to the unmatched ground truth of highest IoU >= thr, ties to
/// the lowest index. Ground truth outside `area` is ignored, as are unmatched
/// detections outside it.
double average_precision(const std::vector<EvalImage>& images, int class_id, double iou_thr,
                         const AreaRange& area = kAreaAll, std::size_t max_dets = 100);

/// Mean over thresholds for one class, -1 if the class has no ground truth.
double class_ap(const std::vector<EvalImage>& images, int class_id, const std::vector<double>& thresholds,
                const AreaRange& area = kAreaAll, std::size_t max_dets = 100);

/// Mean over classes with ground truth, -1 if none has any.
double mean_ap(const std::vector<EvalImage>& images, int num_classes, const std::vector<double>& thresholds,
               const AreaRange& area = kAreaAll, std::size_t max_dets = 100);

struct MetricsReport {
  double ap = -1;
  double ap50 = -1;
  double ap_s = -1;
  double ap_m = -1;
  double ap_l = -1;
  std::vector<std::string> class_names;
  std::vector<double> per_class;  // AP@[.5:.95], -1 for absent classes

  /// {"ap", "ap50", "ap_s", "ap_m", "ap_l", "per_class": {name: ap}}.
  std::string to_json() const;
};

MetricsReport evaluate(const std::vector<EvalImage>& images, const std::vector<std::string>& class_names,
                       std::size_t max_dets = 100);

}  // namespace lsm

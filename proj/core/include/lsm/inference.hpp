#pragma once

#include "lsm/dataset.hpp"
#include "lsm/metrics.hpp"
#include "lsm/model.hpp"
#include "lsm/nms.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace lsm {

/// Letterbox, forward, decode and NMS. Detections are in the pixel frame of
/// each input image.
std::vector<ImageDetections> predict(Detector& model, const std::vector<cv::Mat>& images,
                                     const NmsOptions& opts = {});

/// Runs the model over every record and scores it. Eval mode, no grad.
MetricsReport evaluate_model(Detector& model, const std::vector<ImageRecord>& records,
                             const std::vector<std::string>& class_names, const NmsOptions& opts = {},
                             int batch_size = 8);

/// Boxes with "name score" labels drawn onto a copy of the image.
cv::Mat render_detections(const cv::Mat& image, const ImageDetections& dets,
                          const std::vector<std::string>& class_names);

/// JSON record {"image", "width", "height", "detections": [{"box", "score",
/// "class_id", "class_name"}]}.
std::string detection_record(const std::string& image, int width, int height, const ImageDetections& dets,
                             const std::vector<std::string>& class_names);

struct DetectFileResult {
  std::filesystem::path input;
  bool ok = false;
  std::string error;
  ImageDetections detections;
};

/// For each file writes <out>/<name> (annotated copy) and <out>/<stem>.json.
/// Unreadable files are reported and skipped. <out>/detections.jsonl gets one
/// line per input, in input order.
std::vector<DetectFileResult> detect_files(Detector& model, const std::vector<std::filesystem::path>& files,
                                           double score_thr, const std::filesystem::path& out,
                                           double iou_thr = 0.7);

/// Sorted paths matching a shell glob pattern.
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

}  // namespace lsm

#pragma once

#include "lsm/model.hpp"

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <string>

namespace lsm {

/// Gradient-weighted activation map. activation and gradient are (c, h, w)
/// or (1, c, h, w); weights are the per-channel mean gradient, the map is
/// relu(sum_c w_c A_c) divided by its maximum. An all-zero map stays zero.
torch::Tensor gradcam_map(const torch::Tensor& activation, const torch::Tensor& gradient);

struct CamResult {
  cv::Mat heatmap;  // CV_32F, input image size, values in [0, 1]
  cv::Mat overlay;  // CV_8UC3, input image size
};

/// CAM for `layer` (one of Detector::layer_names()) on a BGR image. The
/// objective is the sum of the best class score at every location that
/// reaches `score_thr`, or the single best location if none does. Throws
/// Error(unknown-layer) listing the valid names.
CamResult class_activation_map(Detector& model, const cv::Mat& image, const std::string& layer,
                               double score_thr = 0.25, double alpha = 0.5);

}  // namespace lsm

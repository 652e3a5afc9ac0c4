#include "lsm/cam.hpp"

#include "lsm/decode.hpp"
#include "lsm/error.hpp"
#include "lsm/transforms.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>

namespace lsm {

torch::Tensor gradcam_map(const torch::Tensor& activation, const torch::Tensor& gradient) {
  auto a = activation.dim() == 4 ? activation.squeeze(0) : activation;
  auto g = gradient.dim() == 4 ? gradient.squeeze(0) : gradient;
  if (a.dim() != 3 || a.sizes() != g.sizes()) {
    throw Error(errc::kConfigMismatch, "activation and gradient must both be (c, h, w)");
  }
  auto weights = g.mean({1, 2}, true);
  auto map = torch::relu((weights * a).sum(0));
  const double peak = map.max().item<double>();
  if (peak > 0) map = map / peak;
  return map.clamp(0.0, 1.0);
}

CamResult class_activation_map(Detector& model, const cv::Mat& image, const std::string& layer, double score_thr,
                               double alpha) {
  const auto names = DetectorImpl::layer_names();
  if (std::find(names.begin(), names.end(), layer) == names.end()) {
    std::string all;
    for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
    throw Error(errc::kUnknownLayer, "unknown layer '" + layer + "'; valid: " + all);
  }
  if (image.empty()) throw Error(errc::kInputSize, "empty image");

  const auto size = static_cast<int>(model->config().input_size);
  auto lb = letterbox(image, {}, size);
  const bool was_training = model->is_training();
  model->eval();

  torch::Tensor activation, gradient;
  {
    torch::AutoGradMode grad_on(true);
    FeatureTaps taps;
    auto raw = model->forward(encode_batch({lb.image}), &taps);
    activation = taps.at(layer);
    auto flat = flatten(raw, model->config().reg_max);
    auto best = std::get<0>(torch::sigmoid(flat.cls_logits[0]).max(-1));
    auto mask = best >= score_thr;
    auto objective = mask.any().item<bool>() ? (best * mask).sum() : best.max();
    gradient = torch::autograd::grad({objective}, {activation}, {}, false, false, true)[0];
    if (!gradient.defined()) gradient = torch::zeros_like(activation);
  }
  model->train(was_training);

  auto map = gradcam_map(activation.detach(), gradient.detach()).to(torch::kFloat32).contiguous();
  cv::Mat small(static_cast<int>(map.size(0)), static_cast<int>(map.size(1)), CV_32F, map.data_ptr<float>());
  cv::Mat full;
  cv::resize(small, full, {size, size}, 0, 0, cv::INTER_LINEAR);
  const auto& t = lb.transform;
  cv::Mat cropped = full(cv::Rect(t.pad_left, t.pad_top, t.resized_width, t.resized_height));

  CamResult out;
  cv::resize(cropped, out.heatmap, image.size(), 0, 0, cv::INTER_LINEAR);
  cv::min(cv::max(out.heatmap, 0.0), 1.0, out.heatmap);

  cv::Mat u8, color, base = image;
  out.heatmap.convertTo(u8, CV_8U, 255.0);
  cv::applyColorMap(u8, color, cv::COLORMAP_JET);
  if (base.channels() == 1) cv::cvtColor(base, base, cv::COLOR_GRAY2BGR);
  cv::addWeighted(base, 1 - alpha, color, alpha, 0, out.overlay);
  return out;
}

}  // namespace lsm

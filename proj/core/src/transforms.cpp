#include "lsm/transforms.hpp"

#include "lsm/error.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace lsm {

Box LetterboxTransform::forward(const Box& b) const {
  return {b.x1 * scale + pad_left, b.y1 * scale + pad_top, b.x2 * scale + pad_left, b.y2 * scale + pad_top};
}

Box LetterboxTransform::inverse(const Box& b) const {
  return {(b.x1 - pad_left) / scale, (b.y1 - pad_top) / scale, (b.x2 - pad_left) / scale,
          (b.y2 - pad_top) / scale};
}

LetterboxTransform letterbox_transform(int width, int height, int target) {
  if (target <= 0 || target % 32 != 0) {
    throw Error(errc::kInvalidConfig, "letterbox target must be a positive multiple of 32, got " +
                                          std::to_string(target));
  }
  if (width <= 0 || height <= 0) throw Error(errc::kInvalidConfig, "image has no pixels");
  LetterboxTransform t;
  t.scale = static_cast<double>(target) / std::max(width, height);
  t.resized_width = std::clamp(static_cast<int>(std::lround(width * t.scale)), 1, target);
  t.resized_height = std::clamp(static_cast<int>(std::lround(height * t.scale)), 1, target);
  t.pad_left = (target - t.resized_width) / 2;
  t.pad_top = (target - t.resized_height) / 2;
  return t;
}

Letterboxed letterbox(const cv::Mat& image, const std::vector<Annotation>& objects, int target) {
  Letterboxed out;
  out.transform = letterbox_transform(image.cols, image.rows, target);
  const auto& t = out.transform;
  cv::Mat resized;
  if (t.resized_width == image.cols && t.resized_height == image.rows) {
    resized = image;
  } else {
    cv::resize(image, resized, {t.resized_width, t.resized_height}, 0, 0,
               t.scale < 1 ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  cv::copyMakeBorder(resized, out.image, t.pad_top, target - t.resized_height - t.pad_top, t.pad_left,
                     target - t.resized_width - t.pad_left, cv::BORDER_CONSTANT,
                     cv::Scalar::all(kLetterboxPadValue));
  out.objects.reserve(objects.size());
  for (const auto& o : objects) out.objects.push_back({t.forward(o.box), o.class_id});
  return out;
}

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.flip_prob = 0;
  p.scale_jitter = 0;
  p.hsv_h = p.hsv_s = p.hsv_v = 0;
  p.mosaic = false;
  return p;
}

bool AugmentPolicy::is_identity() const {
  return flip_prob == 0 && scale_jitter == 0 && hsv_h == 0 && hsv_s == 0 && hsv_v == 0 && !mosaic;
}

std::vector<Annotation> hflip(const std::vector<Annotation>& objects, int width) {
  std::vector<Annotation> out;
  out.reserve(objects.size());
  for (const auto& o : objects) {
    out.push_back({{width - o.box.x2, o.box.y1, width - o.box.x1, o.box.y2}, o.class_id});
  }
  return out;
}

namespace {

std::vector<Annotation> warp_boxes(const std::vector<Annotation>& objects, double s, double tx, double ty,
                                   int width, int height) {
  std::vector<Annotation> out;
  for (const auto& o : objects) {
    Box b{o.box.x1 * s + tx, o.box.y1 * s + ty, o.box.x2 * s + tx, o.box.y2 * s + ty};
    const double full = b.area();
    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(width));
    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(width));
    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(height));
    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(height));
    if (!b.valid() || b.width() < 2 || b.height() < 2 || b.area() < 0.2 * full) continue;
    out.push_back({b, o.class_id});
  }
  return out;
}

void hsv_jitter(cv::Mat& bgr, double gh, double gs, double gv) {
  cv::Mat hsv;
  cv::cvtColor(bgr, hsv, cv::COLOR_BGR2HSV);
  cv::Mat lut(1, 256, CV_8UC3);
  for (int i = 0; i < 256; ++i) {
    auto& px = lut.at<cv::Vec3b>(0, i);
    px[0] = static_cast<uchar>(static_cast<int>(std::lround(i * gh)) % 180);
    px[1] = cv::saturate_cast<uchar>(i * gs);
    px[2] = cv::saturate_cast<uchar>(i * gv);
  }
  cv::LUT(hsv, lut, hsv);
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
}

}  // namespace

Augmented augment(const cv::Mat& image, const std::vector<Annotation>& objects, const AugmentPolicy& policy,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Augmented out{image.clone(), objects};
  const int w = image.cols, h = image.rows;

  if (policy.scale_jitter > 0) {
    const double s = 1.0 + (2 * unit(rng) - 1) * policy.scale_jitter;
    const double tx = (1 - s) * w / 2, ty = (1 - s) * h / 2;
    cv::Mat m = (cv::Mat_<double>(2, 3) << s, 0, tx, 0, s, ty);
    cv::warpAffine(out.image, out.image, m, {w, h}, cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                   cv::Scalar::all(kLetterboxPadValue));
    out.objects = warp_boxes(out.objects, s, tx, ty, w, h);
  }
  if (policy.flip_prob > 0 && unit(rng) < policy.flip_prob) {
    cv::flip(out.image, out.image, 1);
    out.objects = hflip(out.objects, w);
  }
  if (policy.hsv_h > 0 || policy.hsv_s > 0 || policy.hsv_v > 0) {
    const double gh = 1 + (2 * unit(rng) - 1) * policy.hsv_h;
    const double gs = 1 + (2 * unit(rng) - 1) * policy.hsv_s;
    const double gv = 1 + (2 * unit(rng) - 1) * policy.hsv_v;
    hsv_jitter(out.image, gh, gs, gv);
  }
  return out;
}

Augmented mosaic4(const std::vector<Augmented>& tiles) {
  if (tiles.size() != 4) throw Error(errc::kInvalidConfig, "mosaic needs exactly four tiles");
  const int size = tiles[0].image.cols;
  for (const auto& t : tiles) {
    if (t.image.cols != size || t.image.rows != size || t.image.type() != tiles[0].image.type()) {
      throw Error(errc::kInvalidConfig, "mosaic tiles must be square and equally sized");
    }
  }
  const int half = size / 2;
  Augmented out{cv::Mat(size, size, tiles[0].image.type(), cv::Scalar::all(kLetterboxPadValue)), {}};
  for (int i = 0; i < 4; ++i) {
    const int ox = (i % 2) * half, oy = (i / 2) * half;
    cv::Mat small;
    cv::resize(tiles[i].image, small, {half, half}, 0, 0, cv::INTER_AREA);
    small.copyTo(out.image(cv::Rect(ox, oy, half, half)));
    const double s = static_cast<double>(half) / size;
    auto boxes = warp_boxes(tiles[i].objects, s, ox, oy, size, size);
    out.objects.insert(out.objects.end(), boxes.begin(), boxes.end());
  }
  return out;
}

torch::Tensor image_to_tensor(const cv::Mat& bgr) {
  if (bgr.type() != CV_8UC3) throw Error(errc::kInputSize, "expected an 8-bit 3-channel image");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0).contiguous();
}

torch::Tensor encode_batch(const std::vector<cv::Mat>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto& im : images) ts.push_back(image_to_tensor(im));
  return torch::stack(ts);
}

ImageTargets to_targets(const std::vector<Annotation>& objects) {
  ImageTargets t;
  for (const auto& o : objects) {
    t.boxes.push_back(o.box);
    t.classes.push_back(o.class_id);
  }
  return t;
}

}  // namespace lsm

#pragma once

#include "lsm/dataset.hpp"
#include "lsm/loss.hpp"

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <random>
#include <vector>

namespace lsm {

inline constexpr int kLetterboxPadValue = 114;

/// Maps original image pixels to letterboxed pixels and back.
struct LetterboxTransform {
  double scale = 1.0;
  int pad_left = 0;
  int pad_top = 0;
  int resized_width = 0;
  int resized_height = 0;

  Box forward(const Box& b) const;
  Box inverse(const Box& b) const;
};

/// Uniform scale target / max(w, h), symmetric padding with gray 114.
LetterboxTransform letterbox_transform(int width, int height, int target);

struct Letterboxed {
  cv::Mat image;
  std::vector<Annotation> objects;
  LetterboxTransform transform;
};

/// Throws Error(invalid-config) unless target is a positive multiple of 32.
Letterboxed letterbox(const cv::Mat& image, const std::vector<Annotation>& objects, int target);

struct AugmentPolicy {
  double flip_prob = 0.5;
  double scale_jitter = 0.1;
  double hsv_h = 0.015;
  double hsv_s = 0.7;
  double hsv_v = 0.4;
  bool mosaic = false;

  static AugmentPolicy identity();
  bool is_identity() const;
};

/// Mirrors boxes about the vertical centre line of an image `width` wide.
std::vector<Annotation> hflip(const std::vector<Annotation>& objects, int width);

struct Augmented {
  cv::Mat image;
  std::vector<Annotation> objects;
};

/// Scale jitter about the centre, horizontal flip and HSV gain jitter on an
/// already letterboxed image. Boxes that shrink below 20% of their area after
/// cropping are dropped. Deterministic given the generator state.
Augmented augment(const cv::Mat& image, const std::vector<Annotation>& objects,
                  const AugmentPolicy& policy, std::mt19937_64& rng);

/// Tiles four square images of equal size into one of the same size, each
/// downscaled by half.
Augmented mosaic4(const std::vector<Augmented>& tiles);

/// BGR uint8 (h, w, 3) -> float RGB (3, h, w) in [0, 1].
torch::Tensor image_to_tensor(const cv::Mat& bgr);
torch::Tensor encode_batch(const std::vector<cv::Mat>& images);

ImageTargets to_targets(const std::vector<Annotation>& objects);

}  // namespace lsm

#pragma once

#include "lsm/box.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lsm {

struct Annotation {
  Box box;
  int class_id = 0;
  bool operator==(const Annotation&) const = default;
};

/// Ground truth of one image: pixel boxes inside [0, width] x [0, height].
struct ImageRecord {
  std::string id;
  std::filesystem::path file;
  int width = 0;
  int height = 0;
  std::vector<Annotation> objects;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> val;
  /// Non-fatal findings, e.g. dropped zero-area annotations.
  std::vector<std::string> warnings;
};

enum class AnnotationFormat {
  kAuto,
  /// labels/<stem>.txt next to images/, lines "class cx cy w h" normalized to
  /// [0, 1]; class names in classes.txt.
  kYoloText,
  /// annotations.json: {images: [{id, file, width, height}], annotations:
  /// [{image_id, bbox: [x, y, w, h], category_id}], categories: [...]}.
  kJsonIndex,
};

/// Loads `root` with split manifests train.txt (required) and val.txt
/// (optional): newline-separated image paths relative to `root`. Throws
/// Error(dataset) with file/line context on a missing image, malformed line,
/// unknown class or out-of-range box.
Dataset load_dataset(const std::filesystem::path& root, AnnotationFormat format = AnnotationFormat::kAuto);

/// Label file for an image under the YOLO convention: the last "images"
/// directory component becomes "labels" and the extension becomes .txt.
std::filesystem::path label_path_for(const std::filesystem::path& image);

/// Parses one "class cx cy w h" line against an image size. Returns false for
/// blank lines. Throws std::invalid_argument with a reason on malformed input.
bool parse_yolo_line(const std::string& line, int width, int height, Annotation& out);

}  // namespace lsm

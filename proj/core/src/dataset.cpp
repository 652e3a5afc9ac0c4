#include "lsm/dataset.hpp"

#include "json_io.hpp"
#include "lsm/error.hpp"

#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lsm {

namespace fs = std::filesystem;

namespace {

constexpr double kBoundsTolerance = 1e-3;

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kDataset, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> read_manifest(const fs::path& path) {
  std::vector<std::string> files;
  for (const auto& line : read_lines(path)) {
    auto t = trim(line);
    if (!t.empty() && t[0] != '#') files.push_back(t);
  }
  return files;
}

// Clamps tiny excursions, rejects real ones; false for zero-area boxes.
bool check_box(Box& b, int width, int height, const std::string& where) {
  const double w = width, h = height;
  if (b.x1 < -kBoundsTolerance || b.y1 < -kBoundsTolerance || b.x2 > w + kBoundsTolerance ||
      b.y2 > h + kBoundsTolerance || b.x2 < b.x1 || b.y2 < b.y1) {
    std::ostringstream os;
    os << where << ": box (" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2
       << ") outside image " << width << "x" << height;
    throw Error(errc::kDataset, os.str());
  }
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.y1 = std::clamp(b.y1, 0.0, h);
  b.x2 = std::clamp(b.x2, 0.0, w);
  b.y2 = std::clamp(b.y2, 0.0, h);
  return b.valid();
}

std::pair<int, int> image_size(const fs::path& file) {
  if (!fs::exists(file)) throw Error(errc::kDataset, "missing image " + file.string());
  const cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw Error(errc::kDataset, "unreadable image " + file.string());
  return {img.cols, img.rows};
}

void check_disjoint(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& r : ds.train) ids.insert(r.id);
  for (const auto& r : ds.val) {
    if (ids.count(r.id)) throw Error(errc::kDataset, "image " + r.id + " is in both train and val");
  }
}

Dataset load_yolo(const fs::path& root) {
  Dataset ds;
  const auto classes_file = root / "classes.txt";
  for (const auto& line : read_lines(classes_file)) {
    auto t = trim(line);
    if (!t.empty()) ds.class_names.push_back(t);
  }
  if (ds.class_names.empty()) throw Error(errc::kDataset, classes_file.string() + ": no classes");

  auto load_split = [&](const fs::path& manifest, std::vector<ImageRecord>& out) {
    if (!fs::exists(manifest)) return;
    for (const auto& rel : read_manifest(manifest)) {
      ImageRecord rec;
      rec.file = root / rel;
      rec.id = fs::path(rel).lexically_normal().generic_string();
      std::tie(rec.width, rec.height) = image_size(rec.file);
      const auto label = label_path_for(rec.file);
      if (fs::exists(label)) {
        const auto lines = read_lines(label);
        for (std::size_t i = 0; i < lines.size(); ++i) {
          const std::string where = label.string() + ":" + std::to_string(i + 1);
          Annotation a;
          try {
            if (!parse_yolo_line(lines[i], rec.width, rec.height, a)) continue;
          } catch (const std::invalid_argument& e) {
            throw Error(errc::kDataset, where + ": " + e.what());
          }
          if (a.class_id < 0 || a.class_id >= static_cast<int>(ds.class_names.size())) {
            throw Error(errc::kDataset, where + ": class " + std::to_string(a.class_id) +
                                            " not in classes.txt");
          }
          if (!check_box(a.box, rec.width, rec.height, where)) {
            ds.warnings.push_back(where + ": dropped zero-area box");
            continue;
          }
          rec.objects.push_back(a);
        }
      }
      out.push_back(std::move(rec));
    }
  };
  load_split(root / "train.txt", ds.train);
  load_split(root / "val.txt", ds.val);
  return ds;
}

Dataset load_index(const fs::path& root) {
  using detail::json;
  const auto index_file = root / "annotations.json";
  const json j = detail::read_json_file(index_file);
  Dataset ds;
  try {
    std::map<std::int64_t, int> category_index;
    for (const auto& c : j.at("categories")) {
      const int idx = static_cast<int>(ds.class_names.size());
      if (c.is_string()) {
        category_index[idx] = idx;
        ds.class_names.push_back(c.get<std::string>());
      } else {
        category_index[c.at("id").get<std::int64_t>()] = idx;
        ds.class_names.push_back(c.at("name").get<std::string>());
      }
    }
    std::map<std::int64_t, ImageRecord> by_id;
    std::map<std::string, std::int64_t> id_by_file;
    for (const auto& im : j.at("images")) {
      ImageRecord rec;
      const auto id = im.at("id").get<std::int64_t>();
      const auto rel = im.at("file").get<std::string>();
      rec.id = fs::path(rel).lexically_normal().generic_string();
      rec.file = root / rel;
      rec.width = im.at("width").get<int>();
      rec.height = im.at("height").get<int>();
      by_id[id] = rec;
      id_by_file[rec.id] = id;
    }
    std::size_t n = 0;
    for (const auto& an : j.at("annotations")) {
      const std::string where = index_file.string() + ": annotations[" + std::to_string(n++) + "]";
      const auto image_id = an.at("image_id").get<std::int64_t>();
      auto it = by_id.find(image_id);
      if (it == by_id.end()) throw Error(errc::kDataset, where + ": unknown image_id " + std::to_string(image_id));
      const auto cat = an.at("category_id").get<std::int64_t>();
      auto ct = category_index.find(cat);
      if (ct == category_index.end()) throw Error(errc::kDataset, where + ": unknown category_id " + std::to_string(cat));
      const auto bbox = an.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4) throw Error(errc::kDataset, where + ": bbox needs 4 numbers");
      Annotation a;
      a.class_id = ct->second;
      a.box = {bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]};
      if (!check_box(a.box, it->second.width, it->second.height, where)) {
        ds.warnings.push_back(where + ": dropped zero-area box");
        continue;
      }
      it->second.objects.push_back(a);
    }
    auto load_split = [&](const fs::path& manifest, std::vector<ImageRecord>& out) {
      if (!fs::exists(manifest)) return;
      for (const auto& rel : read_manifest(manifest)) {
        const auto key = fs::path(rel).lexically_normal().generic_string();
        auto it = id_by_file.find(key);
        if (it == id_by_file.end()) throw Error(errc::kDataset, manifest.string() + ": " + rel + " not in index");
        auto rec = by_id.at(it->second);
        if (!fs::exists(rec.file)) throw Error(errc::kDataset, "missing image " + rec.file.string());
        out.push_back(std::move(rec));
      }
    };
    load_split(root / "train.txt", ds.train);
    load_split(root / "val.txt", ds.val);
  } catch (const json::exception& e) {
    throw Error(errc::kDataset, index_file.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace

fs::path label_path_for(const fs::path& image) {
  std::vector<fs::path> parts(image.begin(), image.end());
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (*it == "images") {
      *it = "labels";
      fs::path out;
      for (const auto& p : parts) out /= p;
      return out.replace_extension(".txt");
    }
  }
  auto out = image;
  return out.replace_extension(".txt");
}

bool parse_yolo_line(const std::string& line, int width, int height, Annotation& out) {
  const auto t = trim(line);
  if (t.empty()) return false;
  std::istringstream is(t);
  double cls = 0, cx = 0, cy = 0, w = 0, h = 0;
  if (!(is >> cls >> cx >> cy >> w >> h)) throw std::invalid_argument("expected 'class cx cy w h'");
  std::string extra;
  if (is >> extra) throw std::invalid_argument("trailing token '" + extra + "'");
  if (cls < 0 || cls != static_cast<int>(cls)) throw std::invalid_argument("class id must be a non-negative integer");
  for (double v : {cx, cy, w, h}) {
    if (!(v >= -kBoundsTolerance && v <= 1 + kBoundsTolerance)) {
      throw std::invalid_argument("normalized coordinate outside [0, 1]");
    }
  }
  out.class_id = static_cast<int>(cls);
  out.box = {(cx - w / 2) * width, (cy - h / 2) * height, (cx + w / 2) * width, (cy + h / 2) * height};
  return true;
}

Dataset load_dataset(const fs::path& root, AnnotationFormat format) {
  if (!fs::is_directory(root)) throw Error(errc::kDataset, root.string() + " is not a directory");
  if (format == AnnotationFormat::kAuto) {
    format = fs::exists(root / "annotations.json") ? AnnotationFormat::kJsonIndex : AnnotationFormat::kYoloText;
  }
  if (!fs::exists(root / "train.txt")) throw Error(errc::kDataset, "missing split manifest " + (root / "train.txt").string());
  Dataset ds = format == AnnotationFormat::kJsonIndex ? load_index(root) : load_yolo(root);
  check_disjoint(ds);
  return ds;
}

}  // namespace lsm

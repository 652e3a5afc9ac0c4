#include "lsm/synthetic.hpp"

#include "json_io.hpp"
#include "lsm/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <fstream>
#include <random>

namespace lsm {

namespace fs = std::filesystem;

namespace {

struct Cell {
  double cx, cy, r;
  int cls;
};

// Radii relative to the shorter image side.
double radius_for(int cls, double side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (cls) {
    case 0: return side * (0.07 + 0.03 * u(rng));   // RBC
    case 1: return side * (0.10 + 0.03 * u(rng));   // WBC
    default: return side * (0.025 + 0.01 * u(rng));  // platelets
  }
}

void draw_cell(cv::Mat& img, const Cell& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const cv::Point2d ctr(c.cx, c.cy);
  const int shift = 4;
  const double k = 1 << shift;
  const cv::Point p(static_cast<int>(c.cx * k), static_cast<int>(c.cy * k));
  auto rr = [&](double r) { return static_cast<int>(r * k); };
  if (c.cls == 0) {
    cv::circle(img, p, rr(c.r), cv::Scalar(70, 60, 200 + 30 * u(rng)), -1, cv::LINE_AA, shift);
    cv::circle(img, p, rr(c.r * 0.45), cv::Scalar(120, 110, 225), -1, cv::LINE_AA, shift);
  } else if (c.cls == 1) {
    cv::circle(img, p, rr(c.r), cv::Scalar(215, 170, 190), -1, cv::LINE_AA, shift);
    for (int lobe = 0; lobe < 3; ++lobe) {
      const double a = 2.1 * lobe + u(rng);
      const cv::Point q(static_cast<int>((c.cx + 0.3 * c.r * std::cos(a)) * k),
                        static_cast<int>((c.cy + 0.3 * c.r * std::sin(a)) * k));
      cv::circle(img, q, rr(c.r * 0.38), cv::Scalar(140, 40, 90), -1, cv::LINE_AA, shift);
    }
  } else {
    cv::circle(img, p, rr(c.r), cv::Scalar(120, 50, 110), -1, cv::LINE_AA, shift);
  }
  (void)ctr;
}

std::string image_name(const std::string& split, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.png", split.c_str(), index);
  return buf;
}

}  // namespace

SyntheticImage render_synthetic(const SyntheticSpec& spec, int index) {
  if (spec.width < 32 || spec.height < 32) throw Error(errc::kInvalidConfig, "synthetic images must be at least 32x32");
  if (spec.min_objects < 1 || spec.max_objects < spec.min_objects) {
    throw Error(errc::kInvalidConfig, "synthetic object counts must satisfy 1 <= min <= max");
  }
  const auto nc = static_cast<int>(spec.class_names.size());
  if (nc < 1 || nc > 3) throw Error(errc::kInvalidConfig, "synthetic generator draws 1 to 3 classes");

  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double side = std::min(spec.width, spec.height);

  cv::Mat img(spec.height, spec.width, CV_8UC3, cv::Scalar(200, 200, 235));
  cv::Mat noise(img.size(), CV_8UC3);
  cv::RNG noise_rng(rng());
  noise_rng.fill(noise, cv::RNG::UNIFORM, cv::Scalar::all(0), cv::Scalar::all(12));
  cv::Mat tmp;
  noise.convertTo(tmp, CV_8UC3);
  img -= tmp;

  std::uniform_int_distribution<int> count(spec.min_objects, spec.max_objects);
  const int n = count(rng);
  std::vector<Cell> cells;
  for (int i = 0; i < n; ++i) {
    const int cls = i < nc ? i : static_cast<int>(u(rng) * nc) % nc;
    const double r = radius_for(cls, side, rng);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double cx = r + 1 + u(rng) * (spec.width - 2 * r - 2);
      const double cy = r + 1 + u(rng) * (spec.height - 2 * r - 2);
      bool ok = true;
      for (const auto& c : cells) {
        const double gap = std::hypot(cx - c.cx, cy - c.cy) - r - c.r;
        if (gap < 0.04 * side) {
          ok = false;
          break;
        }
      }
      if (ok) {
        cells.push_back({cx, cy, r, cls});
        break;
      }
    }
  }

  SyntheticImage out;
  out.record.width = spec.width;
  out.record.height = spec.height;
  for (const auto& c : cells) {
    draw_cell(img, c, rng);
    out.record.objects.push_back({{c.cx - c.r, c.cy - c.r, c.cx + c.r, c.cy + c.r}, c.cls});
  }
  cv::GaussianBlur(img, img, {3, 3}, 0.6);
  cv::imencode(".png", img, out.png);
  return out;
}

Dataset write_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec) {
  fs::create_directories(root / "images");
  const bool yolo = spec.format != AnnotationFormat::kJsonIndex;
  if (yolo) fs::create_directories(root / "labels");

  Dataset ds;
  ds.class_names = spec.class_names;
  detail::json index{{"images", detail::json::array()},
                     {"annotations", detail::json::array()},
                     {"categories", detail::json::array()}};
  for (std::size_t c = 0; c < spec.class_names.size(); ++c) {
    index["categories"].push_back({{"id", c}, {"name", spec.class_names[c]}});
  }

  auto write_split = [&](const std::string& split, int count, int offset, std::vector<ImageRecord>& records) {
    std::ofstream manifest(root / (split + ".txt"));
    for (int i = 0; i < count; ++i) {
      auto im = render_synthetic(spec, offset + i);
      const std::string name = image_name(split, i);
      const fs::path rel = fs::path("images") / name;
      im.record.file = root / rel;
      im.record.id = rel.generic_string();
      {
        std::ofstream f(im.record.file, std::ios::binary);
        f.write(reinterpret_cast<const char*>(im.png.data()), static_cast<std::streamsize>(im.png.size()));
        if (!f) throw Error(errc::kIo, "cannot write " + im.record.file.string());
      }
      manifest << rel.generic_string() << "\n";
      if (yolo) {
        std::ofstream lf(label_path_for(im.record.file));
        lf.precision(10);
        for (const auto& o : im.record.objects) {
          lf << o.class_id << " " << o.box.cx() / spec.width << " " << o.box.cy() / spec.height << " "
             << o.box.width() / spec.width << " " << o.box.height() / spec.height << "\n";
        }
      } else {
        const auto id = static_cast<std::int64_t>(index["images"].size());
        index["images"].push_back(
            {{"id", id}, {"file", rel.generic_string()}, {"width", spec.width}, {"height", spec.height}});
        for (const auto& o : im.record.objects) {
          index["annotations"].push_back({{"image_id", id},
                                          {"bbox", {o.box.x1, o.box.y1, o.box.width(), o.box.height()}},
                                          {"category_id", o.class_id}});
        }
      }
      records.push_back(std::move(im.record));
    }
  };
  write_split("train", spec.num_train, 0, ds.train);
  write_split("val", spec.num_val, 1000000, ds.val);

  if (yolo) {
    std::ofstream cf(root / "classes.txt");
    for (const auto& c : spec.class_names) cf << c << "\n";
  } else {
    detail::write_text_file(root / "annotations.json", index.dump(2));
  }
  return ds;
}

}  // namespace lsm

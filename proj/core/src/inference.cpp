#include "lsm/inference.hpp"

#include "json_io.hpp"
#include "lsm/error.hpp"
#include "lsm/transforms.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <glob.h>

#include <cstdio>
#include <fstream>

namespace lsm {

namespace fs = std::filesystem;
using detail::json;

std::vector<ImageDetections> predict(Detector& model, const std::vector<cv::Mat>& images, const NmsOptions& opts) {
  std::vector<ImageDetections> out;
  if (images.empty()) return out;
  const auto size = model->config().input_size;
  std::vector<cv::Mat> boxed;
  std::vector<LetterboxTransform> tf;
  for (const auto& im : images) {
    auto lb = letterbox(im, {}, static_cast<int>(size));
    boxed.push_back(lb.image);
    tf.push_back(lb.transform);
  }
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  auto raw = model->forward(encode_batch(boxed));
  model->train(was_training);
  auto dets = decode_boxes(raw, model->config().reg_max, opts.score_thr, static_cast<double>(size));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    ImageDetections mapped;
    const double w = images[i].cols, h = images[i].rows;
    for (const auto& d : nms(dets[i], opts)) {
      Box b = tf[i].inverse(d.box);
      b.x1 = std::clamp(b.x1, 0.0, w);
      b.x2 = std::clamp(b.x2, 0.0, w);
      b.y1 = std::clamp(b.y1, 0.0, h);
      b.y2 = std::clamp(b.y2, 0.0, h);
      if (b.valid()) mapped.push_back({b, d.score, d.class_id});
    }
    out.push_back(std::move(mapped));
  }
  return out;
}

MetricsReport evaluate_model(Detector& model, const std::vector<ImageRecord>& records,
                             const std::vector<std::string>& class_names, const NmsOptions& opts, int batch_size) {
  std::vector<EvalImage> evals;
  const std::size_t bs = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < records.size(); start += bs) {
    std::vector<cv::Mat> images;
    const std::size_t end = std::min(records.size(), start + bs);
    for (std::size_t i = start; i < end; ++i) {
      cv::Mat img = cv::imread(records[i].file.string(), cv::IMREAD_COLOR);
      if (img.empty()) throw Error(errc::kDataset, "unreadable image " + records[i].file.string());
      images.push_back(img);
    }
    auto dets = predict(model, images, opts);
    for (std::size_t i = start; i < end; ++i) evals.push_back({records[i].objects, std::move(dets[i - start])});
  }
  return evaluate(evals, class_names);
}

cv::Mat render_detections(const cv::Mat& image, const ImageDetections& dets,
                          const std::vector<std::string>& class_names) {
  static const cv::Scalar palette[] = {{56, 56, 255}, {255, 112, 31}, {29, 178, 255}, {49, 210, 207},
                                       {10, 249, 72}, {187, 212, 0},  {255, 56, 132}, {133, 0, 82}};
  cv::Mat out = image.clone();
  const int thick = std::max(1, static_cast<int>(std::lround(std::max(out.cols, out.rows) / 400.0)));
  for (const auto& d : dets) {
    const auto& color = palette[static_cast<std::size_t>(d.class_id) % std::size(palette)];
    const cv::Point p1(static_cast<int>(d.box.x1), static_cast<int>(d.box.y1));
    const cv::Point p2(static_cast<int>(d.box.x2), static_cast<int>(d.box.y2));
    cv::rectangle(out, p1, p2, color, thick, cv::LINE_AA);
    const std::string name = d.class_id < static_cast<int>(class_names.size())
                                 ? class_names[static_cast<std::size_t>(d.class_id)]
                                 : std::to_string(d.class_id);
    char label[128];
    std::snprintf(label, sizeof(label), "%s %.2f", name.c_str(), d.score);
    int base = 0;
    const double font = 0.4 * thick;
    const auto ts = cv::getTextSize(label, cv::FONT_HERSHEY_SIMPLEX, font, 1, &base);
    const int top = p1.y - ts.height - 3 >= 0 ? p1.y - ts.height - 3 : p1.y;
    cv::rectangle(out, {p1.x, top}, {p1.x + ts.width + 2, top + ts.height + 3}, color, cv::FILLED);
    cv::putText(out, label, {p1.x + 1, top + ts.height + 1}, cv::FONT_HERSHEY_SIMPLEX, font, {255, 255, 255}, 1,
                cv::LINE_AA);
  }
  return out;
}

namespace {

json detections_json(const ImageDetections& dets, const std::vector<std::string>& class_names) {
  json arr = json::array();
  for (const auto& d : dets) {
    const std::string name = d.class_id < static_cast<int>(class_names.size())
                                 ? class_names[static_cast<std::size_t>(d.class_id)]
                                 : std::to_string(d.class_id);
    arr.push_back({{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                   {"score", d.score},
                   {"class_id", d.class_id},
                   {"class_name", name}});
  }
  return arr;
}

}  // namespace

std::string detection_record(const std::string& image, int width, int height, const ImageDetections& dets,
                             const std::vector<std::string>& class_names) {
  json j{{"image", image}, {"width", width}, {"height", height}, {"detections", detections_json(dets, class_names)}};
  return j.dump();
}

std::vector<DetectFileResult> detect_files(Detector& model, const std::vector<fs::path>& files, double score_thr,
                                           const fs::path& out, double iou_thr) {
  fs::create_directories(out);
  std::ofstream all(out / "detections.jsonl");
  if (!all) throw Error(errc::kIo, "cannot write " + (out / "detections.jsonl").string());
  NmsOptions opts;
  opts.score_thr = score_thr;
  opts.iou_thr = iou_thr;
  const auto& names = model->config().class_names;

  std::vector<DetectFileResult> results;
  for (const auto& f : files) {
    DetectFileResult r;
    r.input = f;
    cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      r.error = "unreadable image " + f.string();
      all << json{{"image", f.string()}, {"error", r.error}}.dump() << "\n";
      results.push_back(std::move(r));
      continue;
    }
    r.detections = predict(model, {img}, opts).front();
    r.ok = true;
    const auto record = detection_record(f.string(), img.cols, img.rows, r.detections, names);
    const auto rendered = render_detections(img, r.detections, names);
    auto image_out = out / f.filename();
    if (!cv::imwrite(image_out.string(), rendered)) {
      image_out.replace_extension(".png");
      if (!cv::imwrite(image_out.string(), rendered)) throw Error(errc::kIo, "cannot write " + image_out.string());
    }
    detail::write_text_file(out / (f.stem().string() + ".json"), record + "\n");
    all << record << "\n";
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<fs::path> out;
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw Error(errc::kIo, "glob failed for " + pattern);
  return out;
}

}  // namespace lsm

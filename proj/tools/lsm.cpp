#include "lsm/cam.hpp"
#include "lsm/checkpoint.hpp"
#include "lsm/dataset.hpp"
#include "lsm/error.hpp"
#include "lsm/inference.hpp"
#include "lsm/profile.hpp"
#include "lsm/synthetic.hpp"
#include "lsm/train.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

std::string metrics_table(const lsm::MetricsReport& m) {
  auto fmt = [](double v) {
    char buf[32];
    if (v < 0) return std::string("     -");
    std::snprintf(buf, sizeof(buf), "%6.3f", v);
    return std::string(buf);
  };
  std::string s;
  s += "  AP50:95   AP50   AP_S   AP_M   AP_L\n";
  s += "   " + fmt(m.ap) + " " + fmt(m.ap50) + " " + fmt(m.ap_s) + " " + fmt(m.ap_m) + " " + fmt(m.ap_l) + "\n";
  for (std::size_t i = 0; i < m.per_class.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-12s %s\n", m.class_names[i].c_str(), fmt(m.per_class[i]).c_str());
    s += buf;
  }
  return s;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  f << text;
  if (!f) throw lsm::Error(lsm::errc::kIo, "cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lsm: small-object detector toolchain"};
  app.require_subcommand(1);

  std::string model_cfg, train_cfg, data, out, ckpt, images, image, layer, split = "val", report;
  double score_thr = 0.25;
  std::int64_t input_size = 0;
  bool as_json = false;

  auto* train = app.add_subcommand("train", "train a detector");
  train->add_option("--model-cfg", model_cfg, "model config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--train-cfg", train_cfg, "train config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data, "dataset root")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--data", data, "dataset root")->required();
  eval->add_option("--split", split, "val or train")->check(CLI::IsMember({"val", "train"}));
  eval->add_option("--report", report, "write the metrics JSON here");

  auto* detect = app.add_subcommand("detect", "detect objects and render overlays");
  detect->add_option("--ckpt", ckpt, "checkpoint")->required();
  detect->add_option("--images", images, "image glob")->required();
  detect->add_option("--score-thr", score_thr, "minimum confidence");
  detect->add_option("--out", out, "output directory")->required();

  auto* cam = app.add_subcommand("cam", "class activation map overlay");
  cam->add_option("--ckpt", ckpt, "checkpoint")->required();
  cam->add_option("--image", image, "input image")->required();
  cam->add_option("--layer", layer, "tapped layer name")->required();
  cam->add_option("--out", out, "output image")->required();

  auto* prof = app.add_subcommand("profile", "parameter and FLOP report");
  prof->add_option("--model-cfg", model_cfg, "model config JSON")->required()->check(CLI::ExistingFile);
  prof->add_option("--input-size", input_size, "override input size");
  prof->add_flag("--json", as_json, "print JSON instead of a table");

  lsm::SyntheticSpec spec;
  std::string format = "yolo";
  auto* synth = app.add_subcommand("synth", "write a synthetic blood-smear dataset");
  synth->add_option("--out", out, "dataset root")->required();
  synth->add_option("--train", spec.num_train, "training images");
  synth->add_option("--val", spec.num_val, "validation images");
  synth->add_option("--width", spec.width, "image width");
  synth->add_option("--height", spec.height, "image height");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--format", format, "yolo or json")->check(CLI::IsMember({"yolo", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto mc = lsm::ModelConfig::load(model_cfg);
      auto tc = lsm::TrainConfig::load(train_cfg);
      tc.apply_env_seed();
      auto ds = lsm::load_dataset(data);
      for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
      auto result = lsm::train(mc, tc, ds, out, [&](const lsm::EpochRecord& r) {
        std::printf("epoch %4d  lr %.5f  loss %.4f  bce %.4f  dfl %.4f  siou %.4f", r.epoch, r.lr, r.loss, r.bce,
                    r.dfl, r.siou);
        if (r.metrics) std::printf("  ap %.4f  ap50 %.4f", r.metrics->ap, r.metrics->ap50);
        std::printf("\n");
        std::fflush(stdout);
      });
      std::printf("best: %s\nlast: %s\n", result.best_checkpoint.c_str(), result.last_checkpoint.c_str());
    } else if (*eval) {
      auto model = lsm::load_checkpoint(ckpt);
      auto ds = lsm::load_dataset(data);
      const auto& records = split == "train" ? ds.train : ds.val;
      auto m = lsm::evaluate_model(model, records, ds.class_names);
      std::cout << metrics_table(m);
      if (!report.empty()) write_file(report, m.to_json() + "\n");
      std::cout << m.to_json() << "\n";
    } else if (*detect) {
      auto model = lsm::load_checkpoint(ckpt);
      auto files = lsm::expand_glob(images);
      if (files.empty()) throw lsm::Error(lsm::errc::kIo, "no files match " + images);
      auto results = lsm::detect_files(model, files, score_thr, out);
      for (const auto& r : results) {
        if (r.ok) {
          std::printf("%s: %zu detections\n", r.input.c_str(), r.detections.size());
        } else {
          std::fprintf(stderr, "error: %s: %s\n", lsm::errc::kIo, r.error.c_str());
        }
      }
    } else if (*cam) {
      auto model = lsm::load_checkpoint(ckpt);
      cv::Mat img = cv::imread(image, cv::IMREAD_COLOR);
      if (img.empty()) throw lsm::Error(lsm::errc::kIo, "unreadable image " + image);
      auto res = lsm::class_activation_map(model, img, layer);
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      if (!cv::imwrite(out, res.overlay)) throw lsm::Error(lsm::errc::kIo, "cannot write " + out);
    } else if (*prof) {
      auto mc = lsm::ModelConfig::load(model_cfg);
      if (input_size > 0) mc.input_size = input_size;
      auto rep = lsm::profile(mc);
      std::cout << (as_json ? rep.to_json() + "\n" : rep.to_table());
    } else if (*synth) {
      spec.format = format == "json" ? lsm::AnnotationFormat::kJsonIndex : lsm::AnnotationFormat::kYoloText;
      auto ds = lsm::write_synthetic_dataset(out, spec);
      std::printf("%zu train / %zu val images in %s\n", ds.train.size(), ds.val.size(), out.c_str());
    }
  } catch (const lsm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}

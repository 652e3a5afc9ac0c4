#include "fixtures.hpp"
#include "lsm/dataset.hpp"
#include "lsm/error.hpp"
#include "lsm/synthetic.hpp"
#include "lsm/transforms.hpp"

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <random>

using namespace lsm;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

void write_image(const fs::path& p, int w, int h) {
  fs::create_directories(p.parent_path());
  cv::imwrite(p.string(), cv::Mat(h, w, CV_8UC3, cv::Scalar(30, 60, 90)));
}

// Minimal YOLO-layout dataset: one 100x100 train image and one val image.
void yolo_layout(const fs::path& root, const std::string& train_label) {
  write_text(root / "classes.txt", "a\nb\n");
  write_image(root / "images/t0.png", 100, 100);
  write_image(root / "images/v0.png", 100, 100);
  write_text(root / "labels/t0.txt", train_label);
  write_text(root / "labels/v0.txt", "1 0.5 0.5 0.5 0.5\n");
  write_text(root / "train.txt", "images/t0.png\n");
  write_text(root / "val.txt", "images/v0.png\n");
}

std::string dataset_error(const fs::path& root, AnnotationFormat f = AnnotationFormat::kAuto) {
  try {
    load_dataset(root, f);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kDataset);
    return e.what();
  }
  ADD_FAILURE() << "expected a dataset error";
  return {};
}

}  // namespace

TEST(YoloLine, NormalizedExample) {
  Annotation a;
  ASSERT_TRUE(parse_yolo_line("0 0.5 0.5 0.2 0.2", 100, 100, a));
  EXPECT_EQ(a.class_id, 0);
  EXPECT_NEAR(a.box.x1, 40, 1e-9);
  EXPECT_NEAR(a.box.y1, 40, 1e-9);
  EXPECT_NEAR(a.box.x2, 60, 1e-9);
  EXPECT_NEAR(a.box.y2, 60, 1e-9);
}

TEST(YoloLine, BlankAndMalformed) {
  Annotation a;
  EXPECT_FALSE(parse_yolo_line("   ", 10, 10, a));
  EXPECT_THROW(parse_yolo_line("0 0.5 0.5", 10, 10, a), std::invalid_argument);
  EXPECT_THROW(parse_yolo_line("0 0.5 0.5 0.1 0.1 9", 10, 10, a), std::invalid_argument);
  EXPECT_THROW(parse_yolo_line("1.5 0.5 0.5 0.1 0.1", 10, 10, a), std::invalid_argument);
  EXPECT_THROW(parse_yolo_line("0 1.5 0.5 0.1 0.1", 10, 10, a), std::invalid_argument);
}

TEST(LabelPath, ImagesDirMapsToLabels) {
  EXPECT_EQ(label_path_for("/d/images/train/x.jpg"), fs::path("/d/labels/train/x.txt"));
  EXPECT_EQ(label_path_for("/d/pics/x.png"), fs::path("/d/pics/x.txt"));
}

TEST(LoadDataset, YoloLayout) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "0 0.5 0.5 0.2 0.2\n\n1 0.25 0.25 0.1 0.1\n");
  auto ds = load_dataset(dir.path());
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(ds.train.size(), 1u);
  ASSERT_EQ(ds.val.size(), 1u);
  EXPECT_EQ(ds.train[0].width, 100);
  ASSERT_EQ(ds.train[0].objects.size(), 2u);
  EXPECT_EQ(ds.train[0].objects[1].class_id, 1);
  EXPECT_TRUE(ds.warnings.empty());
}

TEST(LoadDataset, MalformedLineCarriesContext) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "0 0.5 0.5 0.2 0.2\n0 0.5 oops 0.2 0.2\n");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("t0.txt:2"), std::string::npos) << msg;
}

TEST(LoadDataset, UnknownClassCarriesContext) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "5 0.5 0.5 0.2 0.2\n");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("t0.txt:1"), std::string::npos) << msg;
}

TEST(LoadDataset, OutOfRangeBoxRejected) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "0 0.95 0.5 0.2 0.2\n");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("outside image"), std::string::npos) << msg;
}

TEST(LoadDataset, MissingImage) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "");
  write_text(dir / "train.txt", "images/t0.png\nimages/gone.png\n");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("gone.png"), std::string::npos) << msg;
}

TEST(LoadDataset, MissingManifest) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "");
  fs::remove(dir / "train.txt");
  dataset_error(dir.path());
}

TEST(LoadDataset, SplitsMustBeDisjoint) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "");
  write_text(dir / "val.txt", "images/v0.png\n./images/t0.png\n");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("both"), std::string::npos) << msg;
}

TEST(LoadDataset, ZeroAreaBoxDroppedWithWarning) {
  fixture::TempDir dir("data");
  yolo_layout(dir.path(), "0 0.5 0.5 0.0 0.2\n1 0.5 0.5 0.2 0.2\n");
  auto ds = load_dataset(dir.path());
  ASSERT_EQ(ds.train[0].objects.size(), 1u);
  EXPECT_EQ(ds.train[0].objects[0].class_id, 1);
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("t0.txt:1"), std::string::npos);
}

TEST(LoadDataset, JsonIndexLayout) {
  fixture::TempDir dir("data");
  write_image(dir / "img/a.png", 80, 60);
  write_image(dir / "img/b.png", 80, 60);
  write_text(dir / "annotations.json", R"({
    "images": [{"id": 7, "file": "img/a.png", "width": 80, "height": 60},
               {"id": 8, "file": "img/b.png", "width": 80, "height": 60}],
    "annotations": [{"image_id": 7, "bbox": [10, 5, 20, 30], "category_id": 3},
                    {"image_id": 8, "bbox": [0, 0, 80, 60], "category_id": 1}],
    "categories": [{"id": 1, "name": "cell"}, {"id": 3, "name": "tumor"}]})");
  write_text(dir / "train.txt", "img/a.png\n");
  write_text(dir / "val.txt", "img/b.png\n");
  auto ds = load_dataset(dir.path());
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"cell", "tumor"}));
  ASSERT_EQ(ds.train.size(), 1u);
  ASSERT_EQ(ds.train[0].objects.size(), 1u);
  EXPECT_EQ(ds.train[0].objects[0].class_id, 1);
  EXPECT_EQ(ds.train[0].objects[0].box, (Box{10, 5, 30, 35}));
  EXPECT_EQ(ds.val[0].objects[0].box, (Box{0, 0, 80, 60}));

  write_text(dir / "annotations.json", R"({"images": [{"id": 7, "file": "img/a.png", "width": 80, "height": 60}],
    "annotations": [{"image_id": 9, "bbox": [1, 1, 2, 2], "category_id": 0}], "categories": ["x"]})");
  write_text(dir / "val.txt", "");
  const auto msg = dataset_error(dir.path());
  EXPECT_NE(msg.find("annotations[0]"), std::string::npos) << msg;
}

TEST(LoadDataset, SyntheticRoundTripBothFormats) {
  for (auto fmt : {AnnotationFormat::kYoloText, AnnotationFormat::kJsonIndex}) {
    fixture::TempDir dir("synth");
    SyntheticSpec spec;
    spec.num_train = 3;
    spec.num_val = 2;
    spec.format = fmt;
    spec.seed = 3;
    auto written = write_synthetic_dataset(dir.path(), spec);
    auto loaded = load_dataset(dir.path());
    ASSERT_EQ(loaded.train.size(), 3u);
    ASSERT_EQ(loaded.val.size(), 2u);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& a = written.train[i].objects;
      const auto& b = loaded.train[i].objects;
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].class_id, b[k].class_id);
        EXPECT_NEAR(a[k].box.x1, b[k].box.x1, 1e-3);
        EXPECT_NEAR(a[k].box.y2, b[k].box.y2, 1e-3);
        EXPECT_TRUE(b[k].box.x1 >= 0 && b[k].box.x2 <= spec.width && b[k].box.valid());
      }
    }
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.seed = 9;
  auto a = render_synthetic(spec, 2);
  auto b = render_synthetic(spec, 2);
  EXPECT_EQ(a.png, b.png);
  EXPECT_EQ(a.record.objects, b.record.objects);
  spec.seed = 10;
  EXPECT_NE(render_synthetic(spec, 2).png, a.png);
}

TEST(Letterbox, WideImageExample) {
  auto t = letterbox_transform(400, 300, 640);
  EXPECT_DOUBLE_EQ(t.scale, 1.6);
  EXPECT_EQ(t.resized_width, 640);
  EXPECT_EQ(t.resized_height, 480);
  EXPECT_EQ(t.pad_left, 0);
  EXPECT_EQ(t.pad_top, 80);

  cv::Mat img(300, 400, CV_8UC3, cv::Scalar(10, 20, 30));
  auto lb = letterbox(img, {{Box{0, 0, 400, 300}, 0}}, 640);
  EXPECT_EQ(lb.image.rows, 640);
  EXPECT_EQ(lb.image.cols, 640);
  EXPECT_EQ(lb.image.at<cv::Vec3b>(10, 320), cv::Vec3b(114, 114, 114));
  EXPECT_EQ(lb.image.at<cv::Vec3b>(630, 320), cv::Vec3b(114, 114, 114));
  EXPECT_EQ(lb.image.at<cv::Vec3b>(320, 320), cv::Vec3b(10, 20, 30));
  EXPECT_EQ(lb.objects[0].box, (Box{0, 80, 640, 560}));
}

TEST(Letterbox, SquareInputIsPureScale) {
  auto t = letterbox_transform(320, 320, 640);
  EXPECT_DOUBLE_EQ(t.scale, 2.0);
  EXPECT_EQ(t.pad_left, 0);
  EXPECT_EQ(t.pad_top, 0);
  EXPECT_EQ(t.forward(Box{1, 2, 3, 4}), (Box{2, 4, 6, 8}));
}

TEST(Letterbox, RoundTripWithinHalfPixel) {
  std::mt19937 rng(12);
  std::uniform_int_distribution<int> dim(17, 1500);
  for (int i = 0; i < 1000; ++i) {
    const int w = dim(rng), h = dim(rng);
    auto t = letterbox_transform(w, h, 640);
    std::uniform_real_distribution<double> ux(0, w), uy(0, h);
    double x1 = ux(rng), x2 = ux(rng), y1 = uy(rng), y2 = uy(rng);
    Box b{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    auto back = t.inverse(t.forward(b));
    EXPECT_LE(std::abs(back.x1 - b.x1), 0.51);
    EXPECT_LE(std::abs(back.y1 - b.y1), 0.51);
    EXPECT_LE(std::abs(back.x2 - b.x2), 0.51);
    EXPECT_LE(std::abs(back.y2 - b.y2), 0.51);
  }
}

TEST(Letterbox, TargetMustBeMultipleOf32) {
  for (int bad : {0, 100, 650}) {
    try {
      letterbox_transform(100, 100, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), errc::kInvalidConfig);
    }
  }
}

TEST(Augment, FlipExample) {
  auto out = hflip({{Box{10, 20, 30, 40}, 2}}, 100);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, (Box{70, 20, 90, 40}));
  EXPECT_EQ(out[0].class_id, 2);
}

TEST(Augment, IdentityPolicyLeavesInput) {
  cv::Mat img(48, 64, CV_8UC3);
  cv::randu(img, 0, 255);
  std::vector<Annotation> objs = {{Box{3, 4, 20, 30}, 1}};
  std::mt19937_64 rng(0);
  auto p = AugmentPolicy::identity();
  EXPECT_TRUE(p.is_identity());
  EXPECT_FALSE(AugmentPolicy{}.is_identity());
  auto out = augment(img, objs, p, rng);
  EXPECT_EQ(cv::norm(out.image, img, cv::NORM_INF), 0.0);
  EXPECT_EQ(out.objects, objs);
}

TEST(Augment, SeededAndBounded) {
  cv::Mat img(120, 160, CV_8UC3);
  cv::randu(img, 0, 255);
  std::vector<Annotation> objs = {{Box{5, 5, 60, 50}, 0}, {Box{100, 60, 155, 118}, 1}, {Box{70, 30, 90, 45}, 2}};
  AugmentPolicy p;
  p.flip_prob = 0.5;
  p.scale_jitter = 0.3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r1(seed), r2(seed);
    auto a = augment(img, objs, p, r1);
    auto b = augment(img, objs, p, r2);
    EXPECT_EQ(cv::norm(a.image, b.image, cv::NORM_INF), 0.0);
    EXPECT_EQ(a.objects, b.objects);
    EXPECT_EQ(a.image.size(), img.size());
    for (const auto& o : a.objects) {
      EXPECT_TRUE(o.box.valid());
      EXPECT_GE(o.box.x1, 0);
      EXPECT_GE(o.box.y1, 0);
      EXPECT_LE(o.box.x2, 160);
      EXPECT_LE(o.box.y2, 120);
    }
  }
}

TEST(Augment, MosaicTilesKeepBoxes) {
  std::vector<Augmented> tiles;
  for (int i = 0; i < 4; ++i) {
    tiles.push_back({cv::Mat(32, 32, CV_8UC3, cv::Scalar(i * 40, 0, 0)), {{Box{4, 4, 20, 20}, i % 3}}});
  }
  auto m = mosaic4(tiles);
  EXPECT_EQ(m.objects.size(), 4u);
  for (const auto& o : m.objects) {
    EXPECT_TRUE(o.box.valid());
    EXPECT_LE(o.box.x2, m.image.cols);
    EXPECT_LE(o.box.y2, m.image.rows);
  }
}

TEST(Encode, TensorLayoutAndRange) {
  cv::Mat img(2, 3, CV_8UC3, cv::Scalar(255, 0, 51));  // BGR
  auto t = image_to_tensor(img);
  EXPECT_EQ(t.sizes(), (std::vector<std::int64_t>{3, 2, 3}));
  EXPECT_FLOAT_EQ(t[0][0][0].item<float>(), 0.2f);  // R
  EXPECT_FLOAT_EQ(t[2][1][2].item<float>(), 1.0f);  // B
  auto batch = encode_batch({img, img});
  EXPECT_EQ(batch.sizes(), (std::vector<std::int64_t>{2, 3, 2, 3}));
  auto targets = to_targets({{Box{1, 2, 3, 4}, 2}});
  EXPECT_EQ(targets.boxes[0], (Box{1, 2, 3, 4}));
  EXPECT_EQ(targets.classes[0], 2);
}

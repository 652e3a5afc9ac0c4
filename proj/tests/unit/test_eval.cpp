#include "lsm/metrics.hpp"
#include "lsm/nms.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <random>

using namespace lsm;

namespace {

Detection det(double x1, double y1, double x2, double y2, double s, int c = 0) { return {Box{x1, y1, x2, y2}, s, c}; }

struct RandomSet {
  std::vector<EvalImage> images;
  std::vector<oracle::Image> mirror;
};

// Detections are jittered copies of GTs plus clutter; scores are continuous
// so ordering never depends on tie-breaking.
RandomSet random_set(unsigned seed, int num_images, int num_classes) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> pos(0, 300), size(4, 150), jit(-8, 8), score(0, 1);
  std::uniform_int_distribution<int> count(0, 6), cls(0, num_classes - 1), coin(0, 3);
  RandomSet out;
  for (int i = 0; i < num_images; ++i) {
    EvalImage im;
    oracle::Image om;
    const int ng = count(rng);
    for (int g = 0; g < ng; ++g) {
      const double x = pos(rng), y = pos(rng);
      Box b{x, y, x + size(rng), y + size(rng)};
      const int c = cls(rng);
      im.ground_truth.push_back({b, c});
      om.gts.push_back({b.x1, b.y1, b.x2, b.y2, c});
      const int copies = coin(rng);  // 0 misses, >1 duplicates
      for (int k = 0; k < copies; ++k) {
        Box d{b.x1 + jit(rng), b.y1 + jit(rng), b.x2 + jit(rng), b.y2 + jit(rng)};
        if (!d.valid()) continue;
        const int dc = coin(rng) == 0 ? cls(rng) : c;
        const double s = score(rng);
        im.detections.push_back({d, s, dc});
        om.dets.push_back({d.x1, d.y1, d.x2, d.y2, s, dc});
      }
    }
    const int clutter = count(rng);
    for (int k = 0; k < clutter; ++k) {
      const double x = pos(rng), y = pos(rng);
      Box d{x, y, x + size(rng), y + size(rng)};
      const int dc = cls(rng);
      const double s = score(rng);
      im.detections.push_back({d, s, dc});
      om.dets.push_back({d.x1, d.y1, d.x2, d.y2, s, dc});
    }
    out.images.push_back(std::move(im));
    out.mirror.push_back(std::move(om));
  }
  return out;
}

}  // namespace

TEST(Nms, IdenticalBoxesKeepHigher) {
  auto out = nms({det(0, 0, 10, 10, 0.8), det(0, 0, 10, 10, 0.9)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
}

TEST(Nms, DisjointAllKept) {
  auto out = nms({det(0, 0, 10, 10, 0.5), det(20, 20, 30, 30, 0.6), det(40, 0, 50, 10, 0.7)});
  EXPECT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.7);
}

TEST(Nms, PerClass) {
  auto out = nms({det(0, 0, 10, 10, 0.9, 0), det(0, 0, 10, 10, 0.8, 1)});
  EXPECT_EQ(out.size(), 2u);
}

TEST(Nms, ThresholdIsStrict) {
  // IoU exactly 0.5 survives a 0.5 threshold.
  NmsOptions o;
  o.iou_thr = 0.5;
  auto out = nms({det(0, 0, 30, 10, 0.9), det(10, 0, 40, 10, 0.8)}, o);
  EXPECT_EQ(out.size(), 2u);
  o.iou_thr = 0.49;
  EXPECT_EQ(nms({det(0, 0, 30, 10, 0.9), det(10, 0, 40, 10, 0.8)}, o).size(), 1u);
}

TEST(Nms, ScoreFloorAndCap) {
  NmsOptions o;
  o.score_thr = 0.5;
  o.max_det = 2;
  auto out = nms({det(0, 0, 1, 1, 0.4), det(2, 2, 3, 3, 0.6), det(4, 4, 5, 5, 0.7), det(6, 6, 7, 7, 0.8)}, o);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[1].score, 0.7);
}

TEST(Nms, TiesBrokenByIndex) {
  auto out = nms({det(0, 0, 10, 10, 0.5), det(1, 0, 11, 10, 0.5)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].box.x1, 0.0);
}

TEST(Nms, Idempotent) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> p(0, 100), s(5, 30), sc(0, 1);
  for (int t = 0; t < 20; ++t) {
    ImageDetections d;
    for (int i = 0; i < 40; ++i) {
      const double x = p(rng), y = p(rng);
      d.push_back(det(x, y, x + s(rng), y + s(rng), sc(rng), i % 2));
    }
    auto once = nms(d);
    auto twice = nms(once);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      EXPECT_EQ(once[i].box, twice[i].box);
      EXPECT_EQ(once[i].score, twice[i].score);
    }
  }
}

TEST(AveragePrecision, PerfectDetectionIsOne) {
  std::vector<EvalImage> ims = {{{{Box{10, 10, 50, 60}, 0}}, {det(10, 10, 50, 60, 0.9)}}};
  for (double t : coco_iou_thresholds()) EXPECT_EQ(average_precision(ims, 0, t), 1.0);
  auto r = evaluate(ims, {"x"});
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.ap50, 1.0);
}

TEST(AveragePrecision, PerfectOracleAllBuckets) {
  std::vector<EvalImage> ims;
  const double sizes[] = {10, 50, 200};
  for (int i = 0; i < 6; ++i) {
    EvalImage im;
    for (int k = 0; k < 3; ++k) {
      const double s = sizes[k], x = 300.0 * k;
      Box b{x, 0, x + s, s};
      im.ground_truth.push_back({b, (i + k) % 2});
      im.detections.push_back({b, 0.5 + 0.01 * k, (i + k) % 2});
    }
    ims.push_back(im);
  }
  auto r = evaluate(ims, {"a", "b"});
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.ap50, 1.0);
  EXPECT_EQ(r.ap_s, 1.0);
  EXPECT_EQ(r.ap_m, 1.0);
  EXPECT_EQ(r.ap_l, 1.0);
  for (double v : r.per_class) EXPECT_EQ(v, 1.0);
}

TEST(AveragePrecision, NoDetectionsIsZero) {
  std::vector<EvalImage> ims = {{{{Box{0, 0, 10, 10}, 0}}, {}}};
  EXPECT_EQ(average_precision(ims, 0, 0.5), 0.0);
  EXPECT_EQ(evaluate(ims, {"x"}).ap, 0.0);
}

TEST(AveragePrecision, AbsentClassIsMinusOne) {
  std::vector<EvalImage> ims = {{{{Box{0, 0, 10, 10}, 0}}, {det(0, 0, 10, 10, 0.5, 1)}}};
  EXPECT_EQ(average_precision(ims, 1, 0.5), -1.0);
  auto r = evaluate(ims, {"a", "b"});
  EXPECT_EQ(r.per_class[1], -1.0);
  EXPECT_EQ(r.ap, 0.0);  // absent classes do not enter the mean
}

TEST(AveragePrecision, HalfRecall) {
  // Two GTs, one found: precision 1 up to recall 0.5 then nothing -> 51/101.
  std::vector<EvalImage> ims = {{{{Box{0, 0, 10, 10}, 0}, {Box{50, 50, 60, 60}, 0}}, {det(0, 0, 10, 10, 0.9)}}};
  EXPECT_NEAR(average_precision(ims, 0, 0.5), 51.0 / 101.0, 1e-12);
}

TEST(AveragePrecision, MatchesBruteForceOn60Sets) {
  for (unsigned seed = 0; seed < 60; ++seed) {
    auto set = random_set(seed, 20, 3);
    for (int c = 0; c < 3; ++c) {
      for (double t : {0.5, 0.75, 0.9}) {
        const double got = average_precision(set.images, c, t, kAreaAll, 1u << 20);
        const double ref = oracle::brute_ap(set.mirror, c, t);
        EXPECT_NEAR(got, ref, 1e-6) << "seed " << seed << " class " << c << " thr " << t;
      }
    }
  }
}

TEST(AveragePrecision, MonotoneInThreshold) {
  for (unsigned seed = 100; seed < 120; ++seed) {
    auto set = random_set(seed, 10, 2);
    double prev = 2;
    for (double t : coco_iou_thresholds()) {
      const double v = average_precision(set.images, 0, t);
      if (v < 0) break;
      EXPECT_LE(v, prev + 1e-12);
      prev = v;
    }
  }
}

TEST(AveragePrecision, ExtraFalsePositiveNeverHelps) {
  for (unsigned seed = 200; seed < 220; ++seed) {
    auto set = random_set(seed, 10, 1);
    const double before = average_precision(set.images, 0, 0.5);
    if (before < 0) continue;
    set.images[0].detections.push_back(det(1000, 1000, 1010, 1010, 0.999));
    EXPECT_LE(average_precision(set.images, 0, 0.5), before + 1e-12);
  }
}

TEST(AveragePrecision, Thresholds) {
  auto t = coco_iou_thresholds();
  ASSERT_EQ(t.size(), 10u);
  EXPECT_DOUBLE_EQ(t.front(), 0.5);
  EXPECT_NEAR(t.back(), 0.95, 1e-12);
}

TEST(MetricsReport, JsonKeys) {
  auto set = random_set(1, 5, 2);
  auto r = evaluate(set.images, {"a", "b"});
  auto j = nlohmann::json::parse(r.to_json());
  for (const char* k : {"ap", "ap50", "ap_s", "ap_m", "ap_l", "per_class"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_DOUBLE_EQ(j["ap"].get<double>(), r.ap);
  EXPECT_TRUE(j["per_class"].contains("a"));
  auto again = evaluate(set.images, {"a", "b"});
  EXPECT_EQ(again.to_json(), r.to_json());
}

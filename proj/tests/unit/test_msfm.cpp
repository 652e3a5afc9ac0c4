#include "lsm/error.hpp"
#include "lsm/msfm.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace lsm;

namespace {

MSFMConfig msfm_cfg(std::int64_t c, bool residual = true) {
  MSFMConfig m;
  m.channels = c;
  m.with_residual = residual;
  return m;
}

void zero_transform(MSFM& m) {
  torch::NoGradGuard g;
  m->expand->weight.zero_();
  m->expand->bias.zero_();
}

std::int64_t numel_params(torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace

TEST(DirectionalPools, HandExample) {
  auto x = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kFloat64).view({1, 1, 2, 2});
  auto d = directional_pools(x);
  EXPECT_TRUE(torch::equal(d.f_h.view({2}), torch::tensor({1.5, 3.5}, torch::kFloat64)));
  EXPECT_TRUE(torch::equal(d.f_w.view({2}), torch::tensor({2.0, 3.0}, torch::kFloat64)));
  EXPECT_DOUBLE_EQ(d.f_c.item<double>(), 2.5);
  EXPECT_EQ(d.f_h.sizes(), (std::vector<std::int64_t>{1, 1, 2, 1}));
  EXPECT_EQ(d.f_w.sizes(), (std::vector<std::int64_t>{1, 1, 1, 2}));
}

TEST(DirectionalPools, ConstantInput) {
  auto d = directional_pools(torch::full({2, 3, 5, 7}, 1.25));
  for (const auto& t : {d.f_h, d.f_w, d.f_c}) EXPECT_TRUE(torch::all(t == 1.25).item<bool>());
}

TEST(DirectionalPools, DescriptorConsistency) {
  for (int seed = 0; seed < 10; ++seed) {
    torch::manual_seed(seed);
    auto d = directional_pools(torch::randn({2, 4, 9, 6}));
    EXPECT_LT((d.f_h.mean(2, true) - d.f_c).abs().max().item<double>(), 1e-6);
    EXPECT_LT((d.f_w.mean(3, true) - d.f_c).abs().max().item<double>(), 1e-6);
  }
}

TEST(SpatialMatch, ZeroLogitsGiveHalf) {
  MSFM m(msfm_cfg(8));
  zero_transform(m);
  auto s = m->spatial_match(directional_pools(torch::randn({2, 8, 5, 3})));
  EXPECT_TRUE(torch::all(s.weight_h == 0.5f).item<bool>());
  EXPECT_TRUE(torch::all(s.weight_w == 0.5f).item<bool>());
}

TEST(SpatialMatch, SplitInvertsConcat) {
  auto d = directional_pools(torch::randn({2, 4, 7, 5}));
  auto [h, w] = split_stream(concat_descriptors(d), 7);
  EXPECT_TRUE(torch::equal(h, d.f_h));
  EXPECT_TRUE(torch::equal(w, d.f_w));
}

TEST(SpatialMatch, Shapes) {
  MSFM m(msfm_cfg(8));
  auto s = m->spatial_match(directional_pools(torch::randn({1, 8, 20, 12})));
  EXPECT_EQ(s.h_hat.sizes(), (std::vector<std::int64_t>{1, 8, 20, 1}));
  EXPECT_EQ(s.w_hat.sizes(), (std::vector<std::int64_t>{1, 8, 1, 12}));
  EXPECT_EQ(s.stream.sizes(), (std::vector<std::int64_t>{1, 8, 32, 1}));
}

TEST(SpatialMatch, SigmoidRangeOpen) {
  for (int seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    MSFM m(msfm_cfg(8));
    auto s = m->spatial_match(directional_pools(torch::randn({2, 8, 6, 6})));
    for (const auto& w : {s.weight_h, s.weight_w}) {
      EXPECT_TRUE(torch::all(w > 0).item<bool>());
      EXPECT_TRUE(torch::all(w < 1).item<bool>());
    }
  }
}

TEST(ChannelMatch, Cases) {
  auto d = directional_pools(torch::randn({2, 4, 3, 5}));
  auto zero = torch::zeros({2, 4, 8, 1});
  EXPECT_TRUE(torch::allclose(channel_match(d.f_c, zero), 0.5 * d.f_c));
  auto big = torch::full({2, 4, 8, 1}, 1e4);
  EXPECT_TRUE(torch::allclose(channel_match(d.f_c, big), d.f_c));
  EXPECT_TRUE(torch::all(channel_match(torch::zeros_like(d.f_c), torch::randn({2, 4, 8, 1})) == 0).item<bool>());
}

TEST(ChannelMatch, IdentityAlignUsesRawStream) {
  MSFM m(msfm_cfg(8));
  {
    torch::NoGradGuard g;
    m->channel_align->weight.copy_(torch::eye(8).view({8, 8, 1, 1}));
    m->channel_align->bias.zero_();
  }
  auto x = torch::randn({2, 8, 3, 5});
  auto d = directional_pools(x);
  // mean over the h + w positions of sigmoid(F_h ++ F_w)
  auto gate = (torch::sigmoid(d.f_h).sum({2, 3}, true) + torch::sigmoid(d.f_w).sum({2, 3}, true)) / 8.0;
  EXPECT_TRUE(torch::allclose(m->channel_factor(d), d.f_c * gate, 1e-5, 1e-6));
}

TEST(MSFM, ShapePreserved) {
  for (bool residual : {true, false}) {
    MSFM m(msfm_cfg(8, residual));
    for (auto [h, w] : {std::pair{4, 4}, {7, 3}, {1, 9}}) {
      auto x = torch::randn({2, 8, h, w});
      EXPECT_EQ(m->forward(x).sizes(), x.sizes());
    }
  }
}

TEST(MSFM, FlagsOffIsFactorFree) {
  torch::manual_seed(7);
  for (bool residual : {true, false}) {
    auto cfg = msfm_cfg(8, residual);
    cfg.enable_spatial = cfg.enable_channel = false;
    MSFM m(cfg);
    auto x = torch::randn({2, 8, 5, 6});
    auto res = residual ? x + x : x;
    auto expected = m->project->forward(torch::cat({x, res}, 1));
    EXPECT_TRUE(torch::equal(m->forward(x), expected));
  }
}

TEST(MSFM, ProductOrderAndFactors) {
  // Recompute the attended product from the exposed pieces.
  torch::manual_seed(8);
  MSFM m(msfm_cfg(8, true));
  m->eval();
  auto x = torch::randn({1, 8, 6, 5});
  auto d = directional_pools(x);
  auto s = m->spatial_match(d);
  auto f_c = m->channel_align->forward(d.f_c);
  auto expected = channel_match(f_c, concat_descriptors(d)) * x * (s.h_hat * s.weight_h) * (s.w_hat * s.weight_w) + x;
  EXPECT_TRUE(torch::allclose(m->attended(x), expected, 1e-6, 1e-7));
}

TEST(MSFM, ConstancyPropagation) {
  torch::manual_seed(9);
  MSFM m(msfm_cfg(8));
  m->eval();
  auto per_channel = torch::randn({1, 8, 1, 1});
  auto y = m->forward(per_channel.expand({1, 8, 6, 4}).contiguous());
  auto ref = y.select(2, 0).select(2, 0).view({1, 8, 1, 1});
  EXPECT_LT((y - ref).abs().max().item<double>(), 1e-5);
}

TEST(MSFM, ChannelMismatch) {
  MSFM m(msfm_cfg(8));
  try {
    m->forward(torch::zeros({1, 4, 2, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kConfigMismatch);
  }
}

TEST(MSFM, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 3; ++seed) {
    for (bool residual : {true, false}) {
      torch::manual_seed(200 + seed);
      MSFM m(msfm_cfg(8, residual));
      m->to(torch::kFloat64);
      m->eval();
      {
        torch::NoGradGuard g;
        m->norm->running_mean.normal_(0, 0.1);
        m->norm->running_var.uniform_(0.5, 1.5);
      }
      auto x = torch::randn({1, 8, 6, 6}, torch::kFloat64);
      auto probe = torch::randn({1, 8, 6, 6}, torch::kFloat64);
      auto f = [&] { return (m->forward(x) * probe).sum(); };

      auto xg = x.clone().requires_grad_(true);
      (m->forward(xg) * probe).sum().backward();
      auto num_x = oracle::numeric_grad([&] { return f().item<double>(); }, x);
      EXPECT_LT(oracle::max_rel_err(xg.grad(), num_x), 1e-4) << "input seed " << seed;

      for (auto& p : m->parameters()) p.mutable_grad() = torch::Tensor();
      f().backward();
      for (auto& kv : m->named_parameters()) {
        auto numeric = oracle::numeric_grad([&] { return f().item<double>(); }, kv.value().data());
        EXPECT_LT(oracle::max_rel_err(kv.value().grad(), numeric), 1e-4) << kv.key() << " seed " << seed;
      }
    }
  }
}

TEST(MatchNeck, SpatialDimsPreserved) {
  MatchNeckConfig c;
  c.in_channels = 16;
  c.out_channels = 24;
  MatchNeck n(c);
  auto y = n->forward(torch::randn({2, 16, 7, 9}));
  EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{2, 24, 7, 9}));
}

TEST(MatchNeck, OddWidthRejected) {
  MatchNeckConfig c;
  c.in_channels = 15;
  c.out_channels = 16;
  try {
    MatchNeck n(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kConfigMismatch);
  }
}

TEST(MatchNeck, PassThroughIsChannelPermutation) {
  MatchNeckConfig c;
  c.in_channels = 16;
  c.out_channels = 16;
  c.with_residual = false;
  c.enable_spatial = c.enable_channel = false;
  MatchNeck n(c);
  // Reverse channel order in the final projection; MSFM keeps its input.
  auto perm = torch::flip(torch::eye(16), {0});
  auto keep = torch::cat({torch::eye(8), torch::zeros({8, 8})}, 1);
  {
    torch::NoGradGuard g;
    n->project->weight.copy_(perm.view({16, 16, 1, 1}));
    n->msfm->project->weight.copy_(keep.view({8, 16, 1, 1}));
  }
  auto x = torch::randn({1, 16, 4, 4});
  EXPECT_TRUE(torch::allclose(n->forward(x), torch::flip(x, {1})));
}

TEST(MatchNeck, ParamCountClosedForm) {
  for (auto [in, out, r] : {std::tuple{16, 24, 2}, {32, 32, 4}, {64, 128, 2}}) {
    MatchNeckConfig c;
    c.in_channels = in;
    c.out_channels = out;
    c.reduction = r;
    MatchNeck n(c);
    const std::int64_t h = in / 2, mid = h / r;
    const std::int64_t spatial = h * mid + 2 * mid + mid * h + h;
    const std::int64_t channel = h * h + h;
    EXPECT_EQ(numel_params(*n), spatial + channel + 2 * h * h + in * out);
  }
}

TEST(MSFM, BranchSwitchesOwnTheirParameters) {
  std::set<std::int64_t> counts;
  for (bool sp : {false, true}) {
    for (bool ch : {false, true}) {
      auto cfg = msfm_cfg(16);
      cfg.enable_spatial = sp;
      cfg.enable_channel = ch;
      MSFM m(cfg);
      EXPECT_EQ(m->reduce.is_empty(), !sp);
      EXPECT_EQ(m->channel_align.is_empty(), !ch);
      counts.insert(numel_params(*m));
      auto x = torch::randn({1, 16, 5, 4});
      EXPECT_EQ(m->forward(x).sizes(), x.sizes());
    }
  }
  EXPECT_EQ(counts.size(), 4u);
}

TEST(MSFM, DisabledBranchAccessorsThrow) {
  auto cfg = msfm_cfg(8);
  cfg.enable_spatial = false;
  MSFM m(cfg);
  auto d = directional_pools(torch::randn({1, 8, 4, 4}));
  try {
    m->spatial_match(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kConfigMismatch);
  }
}

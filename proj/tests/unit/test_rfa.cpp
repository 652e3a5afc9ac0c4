#include "lsm/error.hpp"
#include "lsm/rfa.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace lsm;

namespace {

RFAConfig rfa_cfg(std::int64_t in, std::int64_t out, std::int64_t k = 3, std::int64_t stride = 1) {
  RFAConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel_size = k;
  c.stride = stride;
  return c;
}

}  // namespace

TEST(RFAConv, UniformAttentionIsScaledConvolution) {
  for (std::int64_t k : {3, 5}) {
    torch::manual_seed(static_cast<int>(k));
    RFAConv conv(rfa_cfg(3, 4, k));
    conv->to(torch::kFloat64);
    {
      torch::NoGradGuard g;
      conv->attend->weight.zero_();
      conv->attend->bias.zero_();
    }
    auto x = torch::randn({2, 3, 7, 6}, torch::kFloat64);
    auto expected = oracle::direct_conv(x, conv->weight.detach()) / static_cast<double>(k * k);
    EXPECT_LT((conv->forward(x) - expected).abs().max().item<double>(), 1e-10);
  }
}

TEST(RFAConv, AttentionNormalized) {
  for (int seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    RFAConv conv(rfa_cfg(4, 8, 3, seed % 2 + 1));
    auto a = conv->attention(torch::randn({2, 4, 9, 8}) * 3);
    EXPECT_LT((a.sum(2) - 1).abs().max().item<double>(), 1e-6);
  }
}

TEST(RFAConv, SpatialDims) {
  RFAConv same(rfa_cfg(4, 8));
  EXPECT_EQ(same->forward(torch::randn({1, 4, 11, 7})).sizes(), (std::vector<std::int64_t>{1, 8, 11, 7}));
  RFAConv down(rfa_cfg(4, 8, 3, 2));
  EXPECT_EQ(down->forward(torch::randn({1, 4, 12, 8})).sizes(), (std::vector<std::int64_t>{1, 8, 6, 4}));
}

TEST(RFAConv, InvalidConfig) {
  for (auto cfg : {rfa_cfg(4, 4, 2), rfa_cfg(4, 4, 3, 3), rfa_cfg(0, 4)}) {
    try {
      RFAConv c(cfg);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), errc::kInvalidConfig);
    }
  }
}

TEST(RFAConv, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 3; ++seed) {
    torch::manual_seed(300 + seed);
    RFAConv conv(rfa_cfg(4, 4));
    conv->to(torch::kFloat64);
    auto x = torch::randn({1, 4, 7, 7}, torch::kFloat64);
    auto probe = torch::randn({1, 4, 7, 7}, torch::kFloat64);
    auto f = [&] { return (conv->forward(x) * probe).sum(); };

    auto xg = x.clone().requires_grad_(true);
    (conv->forward(xg) * probe).sum().backward();
    auto num_x = oracle::numeric_grad([&] { return f().item<double>(); }, x);
    EXPECT_LT(oracle::max_rel_err(xg.grad(), num_x), 1e-4) << "input seed " << seed;

    for (auto& p : conv->parameters()) p.mutable_grad() = torch::Tensor();
    f().backward();
    for (auto& kv : conv->named_parameters()) {
      auto numeric = oracle::numeric_grad([&] { return f().item<double>(); }, kv.value().data());
      EXPECT_LT(oracle::max_rel_err(kv.value().grad(), numeric), 1e-4) << kv.key() << " seed " << seed;
    }
  }
}

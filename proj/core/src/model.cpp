#include "lsm/model.hpp"

#include "lsm/error.hpp"
#include "lsm/lae.hpp"
#include "lsm/msfm.hpp"
#include "lsm/rfa.hpp"

#include <cmath>
#include <string>

namespace lsm {

namespace {

torch::Tensor upsample2x(const torch::Tensor& x) {
  return torch::upsample_nearest2d(x, {x.size(2) * 2, x.size(3) * 2});
}

void tap(FeatureTaps* taps, const std::string& name, const torch::Tensor& t) {
  if (taps != nullptr) (*taps)[name] = t;
}

torch::nn::Sequential fusion_block(std::int64_t in, std::int64_t out, const ModelConfig& cfg) {
  torch::nn::Sequential seq;
  if (cfg.use_msfm) {
    MatchNeckConfig m;
    m.in_channels = in;
    m.out_channels = out;
    m.with_residual = false;
    m.reduction = cfg.msfm_reduction;
    m.enable_spatial = cfg.msfm_enable_spatial;
    m.enable_channel = cfg.msfm_enable_channel;
    seq->push_back(MatchNeck(m));
    seq->push_back(NormAct(out));
  } else {
    seq->push_back(ConvBnAct(in, out, 1));
  }
  for (std::int64_t i = 0; i < cfg.neck_depth; ++i) seq->push_back(ConvBnAct(out, out, 3));
  return seq;
}

torch::nn::Sequential backbone_stage(std::int64_t in, std::int64_t out, std::int64_t depth,
                                     const ModelConfig& cfg) {
  torch::nn::Sequential seq;
  if (cfg.use_lae) {
    LAEConfig lae;
    lae.in_channels = in;
    lae.out_channels = out;
    lae.groups = cfg.lae_groups;
    lae.kernel_size = cfg.lae_kernel;
    lae.enable_le = cfg.lae_enable_le;
    lae.enable_ae = cfg.lae_enable_ae;
    lae.enable_dm = cfg.lae_enable_dm;
    seq->push_back(LAE(lae));
    seq->push_back(NormAct(out));
  } else {
    seq->push_back(ConvBnAct(in, out, 3, 2));
  }
  for (std::int64_t i = 0; i < depth; ++i) {
    seq->push_back(ConvBnAct(out, out, 3));
    if (cfg.use_msfm) {
      MatchNeckConfig m;
      m.in_channels = out;
      m.out_channels = out;
      m.with_residual = true;
      m.reduction = cfg.msfm_reduction;
      m.enable_spatial = cfg.msfm_enable_spatial;
      m.enable_channel = cfg.msfm_enable_channel;
      seq->push_back(MatchNeck(m));
      seq->push_back(NormAct(out));
    } else {
      seq->push_back(ConvBnAct(out, out, 1));
    }
  }
  return seq;
}

}  // namespace

double prior_class_bias() { return -std::log((1.0 - 0.01) / 0.01); }

RFABlockImpl::RFABlockImpl(std::int64_t in, std::int64_t out, std::int64_t k) {
  RFAConfig rc;
  rc.in_channels = in;
  rc.out_channels = out;
  rc.kernel_size = k;
  rc.stride = 1;
  conv = register_module("conv", RFAConv(rc));
  post = register_module("post", NormAct(out));
}

torch::Tensor RFABlockImpl::forward(const torch::Tensor& x) {
  return post->forward(conv->forward(x));
}

DetectHeadImpl::DetectHeadImpl(std::int64_t in, const ModelConfig& cfg) {
  const auto cb = cfg.head_box_channels, cc = cfg.head_cls_channels;
  box = register_module("box", torch::nn::Sequential(ConvBnAct(in, cb, 3), ConvBnAct(cb, cb, 3)));
  cls = register_module("cls", torch::nn::Sequential(ConvBnAct(in, cc, 3), ConvBnAct(cc, cc, 3)));
  box_pred = register_module(
      "box_pred", torch::nn::Conv2d(conv_options(cb, 4 * cfg.reg_max, 1, 1, 1, true)));
  cls_pred = register_module(
      "cls_pred", torch::nn::Conv2d(conv_options(cc, cfg.num_classes, 1, 1, 1, true)));
}

HeadLevel DetectHeadImpl::forward(const torch::Tensor& x) {
  HeadLevel out;
  out.box = counted_conv(box_pred, box->forward(x));
  out.cls = counted_conv(cls_pred, cls->forward(x));
  return out;
}

NeckImpl::NeckImpl(const ModelConfig& cfg) {
  const auto& w = cfg.stage_widths;
  td4 = register_module("td4", fusion_block(w[3] + w[2], w[2], cfg));
  td3 = register_module("td3", fusion_block(w[2] + w[1], w[1], cfg));
  td2 = register_module("td2", fusion_block(w[1] + w[0], w[0], cfg));
  down2 = register_module("down2", ConvBnAct(w[0], w[0], 3, 2));
  bu3 = register_module("bu3", fusion_block(w[0] + w[1], w[1], cfg));
  down3 = register_module("down3", ConvBnAct(w[1], w[1], 3, 2));
  bu4 = register_module("bu4", fusion_block(w[1] + w[2], w[2], cfg));
  down4 = register_module("down4", ConvBnAct(w[2], w[2], 3, 2));
  bu5 = register_module("bu5", fusion_block(w[2] + w[3], w[3], cfg));
}

const std::vector<std::string>& NeckImpl::block_names() {
  static const std::vector<std::string> names = {"neck.td4", "neck.td3", "neck.td2",
                                                 "neck.bu3", "neck.bu4", "neck.bu5"};
  return names;
}

std::vector<torch::Tensor> NeckImpl::forward(const std::vector<torch::Tensor>& feats,
                                             FeatureTaps* taps) {
  const auto& p2 = feats[0];
  const auto& p3 = feats[1];
  const auto& p4 = feats[2];
  const auto& p5 = feats[3];

  record_scope("neck.td4");
  auto n4 = td4->forward(torch::cat({upsample2x(p5), p4}, 1));
  tap(taps, "neck.td4", n4);
  record_scope("neck.td3");
  auto n3 = td3->forward(torch::cat({upsample2x(n4), p3}, 1));
  tap(taps, "neck.td3", n3);
  record_scope("neck.td2");
  auto o2 = td2->forward(torch::cat({upsample2x(n3), p2}, 1));
  tap(taps, "neck.td2", o2);

  record_scope("neck.down2");
  auto d2 = down2->forward(o2);
  record_scope("neck.bu3");
  auto o3 = bu3->forward(torch::cat({d2, n3}, 1));
  tap(taps, "neck.bu3", o3);
  record_scope("neck.down3");
  auto d3 = down3->forward(o3);
  record_scope("neck.bu4");
  auto o4 = bu4->forward(torch::cat({d3, n4}, 1));
  tap(taps, "neck.bu4", o4);
  record_scope("neck.down4");
  auto d4 = down4->forward(o4);
  record_scope("neck.bu5");
  auto o5 = bu5->forward(torch::cat({d4, p5}, 1));
  tap(taps, "neck.bu5", o5);
  return {o2, o3, o4, o5};
}

DetectorImpl::DetectorImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.stage_widths;
  const auto& d = cfg_.stage_depths;
  stem = register_module("stem", ConvBnAct(3, cfg_.stem_channels, 3, 2));
  early = torch::nn::Sequential();
  if (cfg_.use_rfablock) {
    early->push_back(RFABlock(cfg_.stem_channels, cfg_.rfa_channels, cfg_.rfa_kernel));
  } else {
    early->push_back(ConvBnAct(cfg_.stem_channels, cfg_.rfa_channels, cfg_.rfa_kernel));
  }
  register_module("early", early);
  stage1 = register_module("stage1", backbone_stage(cfg_.rfa_channels, w[0], d[0], cfg_));
  stage2 = register_module("stage2", backbone_stage(w[0], w[1], d[1], cfg_));
  stage3 = register_module("stage3", backbone_stage(w[1], w[2], d[2], cfg_));
  stage4 = register_module("stage4", backbone_stage(w[2], w[3], d[3], cfg_));
  neck = register_module("neck", Neck(cfg_));
  head_p2 = register_module("head_p2", DetectHead(w[0], cfg_));
  head_p3 = register_module("head_p3", DetectHead(w[1], cfg_));
  head_p4 = register_module("head_p4", DetectHead(w[2], cfg_));
  head_p5 = register_module("head_p5", DetectHead(w[3], cfg_));
  initialize();
}

void DetectorImpl::initialize() {
  torch::NoGradGuard no_grad;
  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      if (conv->bias.defined()) conv->bias.zero_();
    }
  }
  for (auto* head : {head_p2.get(), head_p3.get(), head_p4.get(), head_p5.get()}) {
    head->cls_pred->bias.fill_(prior_class_bias());
  }
}

std::vector<std::string> DetectorImpl::layer_names() {
  std::vector<std::string> names = {"stem", "early", "stage1", "stage2", "stage3", "stage4"};
  for (const auto& n : NeckImpl::block_names()) names.push_back(n);
  return names;
}

RawHeadOutput DetectorImpl::forward(const torch::Tensor& images, FeatureTaps* taps) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != cfg_.input_size ||
      images.size(3) != cfg_.input_size) {
    std::string got;
    for (auto s : images.sizes()) got += std::to_string(s) + " ";
    throw Error(errc::kInputSize, "expected (b, 3, " + std::to_string(cfg_.input_size) + ", " +
                                      std::to_string(cfg_.input_size) + "), got [ " + got + "]");
  }
  record_scope("stem");
  auto x = stem->forward(images);
  tap(taps, "stem", x);
  record_scope("early");
  x = early->forward(x);
  tap(taps, "early", x);
  record_scope("stage1");
  auto p2 = stage1->forward(x);
  tap(taps, "stage1", p2);
  record_scope("stage2");
  auto p3 = stage2->forward(p2);
  tap(taps, "stage2", p3);
  record_scope("stage3");
  auto p4 = stage3->forward(p3);
  tap(taps, "stage3", p4);
  record_scope("stage4");
  auto p5 = stage4->forward(p4);
  tap(taps, "stage4", p5);

  auto outs = neck->forward({p2, p3, p4, p5}, taps);

  RawHeadOutput raw;
  DetectHead heads[] = {head_p2, head_p3, head_p4, head_p5};
  const char* scopes[] = {"head_p2", "head_p3", "head_p4", "head_p5"};
  for (std::size_t i = 0; i < 4; ++i) {
    record_scope(scopes[i]);
    auto level = heads[i]->forward(outs[i]);
    level.stride = cfg_.head_strides[i];
    raw.levels.push_back(std::move(level));
  }
  return raw;
}

Detector build_model(const ModelConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.seed);
  return Detector(cfg);
}

}  // namespace lsm

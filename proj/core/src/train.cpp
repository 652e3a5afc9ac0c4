#include "lsm/train.hpp"

#include "json_io.hpp"
#include "lsm/checkpoint.hpp"
#include "lsm/error.hpp"
#include "lsm/inference.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace lsm {

namespace fs = std::filesystem;
using detail::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

json optimizer_json(const OptimizerConfig& o) {
  return {{"family", o.family},           {"lr0", o.lr0},       {"lr_final", o.lr_final},
          {"momentum", o.momentum},       {"beta2", o.beta2},   {"weight_decay", o.weight_decay},
          {"warmup_epochs", o.warmup_epochs}, {"nesterov", o.nesterov}};
}

json loss_json(const LossConfig& l) {
  return {{"gamma", l.gamma}, {"zeta", l.zeta}, {"eta", l.eta},     {"topk", l.topk},
          {"alpha", l.alpha}, {"beta", l.beta}, {"siou_theta", l.siou_theta}};
}

json augment_json(const AugmentPolicy& a) {
  return {{"flip_prob", a.flip_prob}, {"scale_jitter", a.scale_jitter}, {"hsv_h", a.hsv_h},
          {"hsv_s", a.hsv_s},         {"hsv_v", a.hsv_v},               {"mosaic", a.mosaic}};
}

json eval_json(const EvalConfig& e) {
  return {{"score_thr", e.score_thr}, {"iou_thr", e.iou_thr}, {"detect_score_thr", e.detect_score_thr},
          {"max_det", e.max_det},     {"interval", e.interval}, {"split", e.split}};
}

json metrics_json(const MetricsReport& m) { return json::parse(m.to_json()); }

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(errc::kInvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(errc::kInvalidConfig, "batch_size must be >= 1");
  if (optimizer.family != "sgd" && optimizer.family != "adamw") {
    throw Error(errc::kInvalidConfig, "optimizer family must be sgd or adamw, got " + optimizer.family);
  }
  if (optimizer.lr0 < 0 || optimizer.lr_final < 0) throw Error(errc::kInvalidConfig, "learning rates must be >= 0");
  if (optimizer.weight_decay < 0 || optimizer.warmup_epochs < 0) {
    throw Error(errc::kInvalidConfig, "weight_decay and warmup_epochs must be >= 0");
  }
  if (ema && !(ema_decay > 0 && ema_decay < 1)) throw Error(errc::kInvalidConfig, "ema_decay must be in (0, 1)");
  if (subset < 0) throw Error(errc::kInvalidConfig, "subset must be >= 0");
  if (eval.split != "val" && eval.split != "train") throw Error(errc::kInvalidConfig, "eval split must be val or train");
  if (eval.interval < 0) throw Error(errc::kInvalidConfig, "eval interval must be >= 0");
  loss.validate();
}

std::string TrainConfig::to_json() const {
  json j{{"epochs", epochs},
         {"batch_size", batch_size},
         {"optimizer", optimizer_json(optimizer)},
         {"seed", seed},
         {"ema", ema},
         {"ema_decay", ema_decay},
         {"max_grad_norm", max_grad_norm},
         {"subset", subset},
         {"loss", loss_json(loss)},
         {"augment", augment_json(augment)},
         {"eval", eval_json(eval)}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "seed", c.seed);
    read_opt(j, "ema", c.ema);
    read_opt(j, "ema_decay", c.ema_decay);
    read_opt(j, "max_grad_norm", c.max_grad_norm);
    read_opt(j, "subset", c.subset);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      read_opt(o, "family", c.optimizer.family);
      read_opt(o, "lr0", c.optimizer.lr0);
      read_opt(o, "lr_final", c.optimizer.lr_final);
      read_opt(o, "momentum", c.optimizer.momentum);
      read_opt(o, "beta2", c.optimizer.beta2);
      read_opt(o, "weight_decay", c.optimizer.weight_decay);
      read_opt(o, "warmup_epochs", c.optimizer.warmup_epochs);
      read_opt(o, "nesterov", c.optimizer.nesterov);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read_opt(l, "gamma", c.loss.gamma);
      read_opt(l, "zeta", c.loss.zeta);
      read_opt(l, "eta", c.loss.eta);
      read_opt(l, "topk", c.loss.topk);
      read_opt(l, "alpha", c.loss.alpha);
      read_opt(l, "beta", c.loss.beta);
      read_opt(l, "siou_theta", c.loss.siou_theta);
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      read_opt(a, "flip_prob", c.augment.flip_prob);
      read_opt(a, "scale_jitter", c.augment.scale_jitter);
      read_opt(a, "hsv_h", c.augment.hsv_h);
      read_opt(a, "hsv_s", c.augment.hsv_s);
      read_opt(a, "hsv_v", c.augment.hsv_v);
      read_opt(a, "mosaic", c.augment.mosaic);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      read_opt(e, "score_thr", c.eval.score_thr);
      read_opt(e, "iou_thr", c.eval.iou_thr);
      read_opt(e, "detect_score_thr", c.eval.detect_score_thr);
      read_opt(e, "max_det", c.eval.max_det);
      read_opt(e, "interval", c.eval.interval);
      read_opt(e, "split", c.eval.split);
    }
  } catch (const json::exception& e) {
    throw Error(errc::kInvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  return from_json(detail::read_json_file(path).dump());
}

bool TrainConfig::apply_env_seed() {
  const char* s = std::getenv("LSM_SEED");
  if (!s || !*s) return false;
  char* end = nullptr;
  const auto v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw Error(errc::kInvalidConfig, std::string("LSM_SEED is not an integer: ") + s);
  seed = v;
  return true;
}

std::string EpochRecord::to_json() const {
  json j{{"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"bce", bce}, {"dfl", dfl}, {"siou", siou}};
  j["metrics"] = metrics ? metrics_json(*metrics) : json(nullptr);
  return j.dump();
}

double learning_rate(const OptimizerConfig& opt, int epochs, double epoch) {
  const double final_lr = std::min(opt.lr_final, opt.lr0);
  const double progress = std::clamp(epoch / std::max(epochs, 1), 0.0, 1.0);
  double lr = final_lr + 0.5 * (opt.lr0 - final_lr) * (1 + std::cos(std::numbers::pi * progress));
  if (opt.warmup_epochs > 0 && epoch < opt.warmup_epochs) lr *= epoch / opt.warmup_epochs;
  return lr;
}

void check_finite_loss(double v, int epoch, int batch) {
  if (!std::isfinite(v)) {
    throw Error(errc::kNonFiniteLoss, "loss is " + std::to_string(v) + " at epoch " + std::to_string(epoch) +
                                          " batch " + std::to_string(batch));
  }
}

void copy_state(Detector& from, Detector& to) {
  torch::NoGradGuard no_grad;
  auto src_p = from->named_parameters(true);
  auto dst_p = to->named_parameters(true);
  auto src_b = from->named_buffers(true);
  auto dst_b = to->named_buffers(true);
  if (src_p.size() != dst_p.size() || src_b.size() != dst_b.size()) {
    throw Error(errc::kConfigMismatch, "models differ in topology");
  }
  for (const auto& kv : src_p) dst_p[kv.key()].copy_(kv.value());
  for (const auto& kv : src_b) dst_b[kv.key()].copy_(kv.value());
}

Detector clone_model(Detector& model) {
  auto copy = build_model(model->config());
  copy_state(model, copy);
  copy->train(model->is_training());
  return copy;
}

namespace {

struct Sample {
  cv::Mat image;  // letterboxed
  std::vector<Annotation> objects;
};

std::vector<Sample> prepare(const std::vector<ImageRecord>& records, int input_size) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    cv::Mat img = cv::imread(r.file.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw Error(errc::kDataset, "unreadable image " + r.file.string());
    auto lb = letterbox(img, r.objects, input_size);
    out.push_back({lb.image, lb.objects});
  }
  return out;
}

// Exponential moving average of weights with a warm-up ramp on the decay.
class ModelEma {
 public:
  ModelEma(Detector& model, double decay) : ema_(clone_model(model)), decay_(decay) { ema_->eval(); }

  void update(Detector& model) {
    torch::NoGradGuard no_grad;
    ++updates_;
    const double d = decay_ * (1 - std::exp(-static_cast<double>(updates_) / 2000.0));
    auto src_p = model->named_parameters(true);
    for (auto& kv : ema_->named_parameters(true)) kv.value().mul_(d).add_(src_p[kv.key()], 1 - d);
    auto src_b = model->named_buffers(true);
    for (auto& kv : ema_->named_buffers(true)) {
      if (kv.value().is_floating_point()) {
        kv.value().mul_(d).add_(src_b[kv.key()], 1 - d);
      } else {
        kv.value().copy_(src_b[kv.key()]);
      }
    }
  }

  Detector& model() { return ema_; }

 private:
  Detector ema_;
  double decay_;
  std::int64_t updates_ = 0;
};

struct ParamGroups {
  std::vector<torch::Tensor> decay;
  std::vector<torch::Tensor> no_decay;
};

// Weight decay on conv/linear weights only, not on biases or norm scales.
ParamGroups split_params(Detector& model) {
  ParamGroups g;
  for (auto& p : model->parameters(true)) {
    (p.dim() > 1 ? g.decay : g.no_decay).push_back(p);
  }
  return g;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(Detector& model, const OptimizerConfig& o) {
  auto groups = split_params(model);
  if (o.family == "sgd") {
    auto base = torch::optim::SGDOptions(o.lr0).momentum(o.momentum).nesterov(o.nesterov && o.momentum > 0);
    auto with_wd = std::make_unique<torch::optim::SGDOptions>(base);
    with_wd->weight_decay(o.weight_decay);
    auto without = std::make_unique<torch::optim::SGDOptions>(base);
    without->weight_decay(0);
    std::vector<torch::optim::OptimizerParamGroup> pg;
    pg.emplace_back(groups.decay, std::move(with_wd));
    pg.emplace_back(groups.no_decay, std::move(without));
    return std::make_unique<torch::optim::SGD>(pg, base);
  }
  auto base = torch::optim::AdamWOptions(o.lr0).betas({o.momentum, o.beta2});
  auto with_wd = std::make_unique<torch::optim::AdamWOptions>(base);
  with_wd->weight_decay(o.weight_decay);
  auto without = std::make_unique<torch::optim::AdamWOptions>(base);
  without->weight_decay(0);
  std::vector<torch::optim::OptimizerParamGroup> pg;
  pg.emplace_back(groups.decay, std::move(with_wd));
  pg.emplace_back(groups.no_decay, std::move(without));
  return std::make_unique<torch::optim::AdamW>(pg, base);
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& g : opt.param_groups()) g.options().set_lr(lr);
}

}  // namespace

TrainResult train(Detector& model, const TrainConfig& cfg, const Dataset& data, const fs::path& out,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const auto& mcfg = model->config();
  if (data.class_names.size() != static_cast<std::size_t>(mcfg.num_classes)) {
    throw Error(errc::kConfigMismatch, "dataset has " + std::to_string(data.class_names.size()) +
                                           " classes, model expects " + std::to_string(mcfg.num_classes));
  }
  auto records = data.train;
  if (cfg.subset > 0 && static_cast<std::size_t>(cfg.subset) < records.size()) records.resize(cfg.subset);
  if (records.empty()) throw Error(errc::kDataset, "no training images");
  const auto& eval_records = cfg.eval.split == "train" ? records : data.val;

  LossConfig loss_cfg = cfg.loss;
  loss_cfg.reg_max = mcfg.reg_max;
  loss_cfg.validate();

  fs::create_directories(out);
  std::ofstream history(out / "history.jsonl", std::ios::app);
  if (!history) throw Error(errc::kIo, "cannot open " + (out / "history.jsonl").string());

  torch::manual_seed(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  const auto samples = prepare(records, static_cast<int>(mcfg.input_size));

  auto optimizer = make_optimizer(model, cfg.optimizer);
  std::optional<ModelEma> ema;
  if (cfg.ema) ema.emplace(model, cfg.ema_decay);

  const std::size_t n = samples.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const bool use_mosaic = cfg.augment.mosaic;

  NmsOptions nms_opts;
  nms_opts.score_thr = cfg.eval.score_thr;
  nms_opts.iou_thr = cfg.eval.iou_thr;
  nms_opts.max_det = static_cast<std::size_t>(cfg.eval.max_det);

  TrainResult result;
  result.last_checkpoint = out / "last.ckpt";
  result.best_checkpoint = out / "best.ckpt";
  const std::string meta = json{{"train_config", json::parse(cfg.to_json())}}.dump();

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model->train();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double sum_loss = 0, sum_bce = 0, sum_dfl = 0, sum_siou = 0;
    double lr = 0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      lr = learning_rate(cfg.optimizer, cfg.epochs, epoch + static_cast<double>(bi + 1) / batches);
      set_lr(*optimizer, lr);

      std::vector<cv::Mat> images;
      std::vector<ImageTargets> targets;
      for (std::size_t k = bi * bs; k < std::min(n, (bi + 1) * bs); ++k) {
        const auto& s = samples[order[k]];
        Augmented a;
        if (use_mosaic) {
          std::vector<Augmented> tiles;
          std::uniform_int_distribution<std::size_t> pick(0, n - 1);
          tiles.push_back(augment(s.image, s.objects, cfg.augment, rng));
          for (int t = 0; t < 3; ++t) {
            const auto& o = samples[pick(rng)];
            tiles.push_back(augment(o.image, o.objects, cfg.augment, rng));
          }
          a = mosaic4(tiles);
        } else if (cfg.augment.is_identity()) {
          a = {s.image, s.objects};
        } else {
          a = augment(s.image, s.objects, cfg.augment, rng);
        }
        images.push_back(a.image);
        targets.push_back(to_targets(a.objects));
      }
      auto batch = encode_batch(images);
      auto raw = model->forward(batch);
      auto flat = flatten(raw, mcfg.reg_max);
      auto assignment = assign_targets(flat, targets, loss_cfg);
      auto loss = total_loss(flat, targets, assignment, loss_cfg);

      const double value = loss.total.item<double>();
      check_finite_loss(value, epoch, static_cast<int>(bi));
      optimizer->zero_grad();
      loss.total.backward();
      if (cfg.max_grad_norm > 0) torch::nn::utils::clip_grad_norm_(model->parameters(), cfg.max_grad_norm);
      optimizer->step();
      if (ema) ema->update(model);

      sum_loss += value;
      sum_bce += loss.bce.item<double>();
      sum_dfl += loss.dfl.item<double>();
      sum_siou += loss.siou.item<double>();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss = sum_loss / batches;
    rec.bce = sum_bce / batches;
    rec.dfl = sum_dfl / batches;
    rec.siou = sum_siou / batches;

    Detector& snapshot_src = ema ? ema->model() : model;
    const bool last = epoch + 1 == cfg.epochs;
    const bool do_eval = !eval_records.empty() && cfg.eval.interval > 0 &&
                         ((epoch + 1) % cfg.eval.interval == 0 || last);
    if (do_eval) {
      auto snapshot = clone_model(snapshot_src);
      rec.metrics = evaluate_model(snapshot, eval_records, data.class_names, nms_opts);
    }

    save_checkpoint(snapshot_src, result.last_checkpoint, meta);
    const double ap = rec.metrics ? rec.metrics->ap : -1;
    if (epoch == 0 || ap > result.best_ap) {
      save_checkpoint(snapshot_src, result.best_checkpoint, meta);
      result.best_ap = std::max(ap, result.best_ap);
    }

    history << rec.to_json() << "\n";
    history.flush();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data, const fs::path& out,
                  const EpochCallback& on_epoch) {
  ModelConfig mc = model_cfg;
  mc.seed = cfg.seed;
  auto model = build_model(mc);
  return train(model, cfg, data, out, on_epoch);
}

}  // namespace lsm

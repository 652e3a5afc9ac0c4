#pragma once

#include "lsm/dataset.hpp"
#include "lsm/loss.hpp"
#include "lsm/metrics.hpp"
#include "lsm/model.hpp"
#include "lsm/transforms.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lsm {

struct OptimizerConfig {
  std::string family = "sgd";  // "sgd" or "adamw"
  double lr0 = 0.01;
  double lr_final = 1e-4;  // cosine decay target
  double momentum = 0.937;  // SGD momentum, AdamW beta1
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  double warmup_epochs = 3;
  bool nesterov = true;
};

struct EvalConfig {
  double score_thr = 0.001;
  double iou_thr = 0.7;
  double detect_score_thr = 0.25;
  std::int64_t max_det = 300;
  // Evaluate every `interval` epochs and after the last one; 0 disables.
  int interval = 1;
  std::string split = "val";  // "val" or "train"
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 16;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  bool ema = false;
  double ema_decay = 0.9999;
  double max_grad_norm = 10.0;
  // Use only the first n training images; 0 keeps all.
  int subset = 0;
  LossConfig loss;
  AugmentPolicy augment;
  EvalConfig eval;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  /// Replaces `seed` with $LSM_SEED when set. Returns true if it was.
  bool apply_env_seed();
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double bce = 0;
  double dfl = 0;
  double siou = 0;
  std::optional<MetricsReport> metrics;

  std::string to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  double best_ap = -1;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Learning rate at a fractional epoch: linear warmup from 0, then cosine
/// from lr0 to min(lr_final, lr0).
double learning_rate(const OptimizerConfig& opt, int epochs, double epoch);

/// Throws Error(non-finite-loss) naming the epoch and batch if v is NaN/inf.
void check_finite_loss(double v, int epoch, int batch);

/// Trains in place. Writes <out>/history.jsonl (one flushed JSON object per
/// epoch), <out>/last.ckpt and <out>/best.ckpt (highest AP50:95).
TrainResult train(Detector& model, const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out,
                  const EpochCallback& on_epoch = {});

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out, const EpochCallback& on_epoch = {});

/// Copies parameters and buffers between two models of the same topology.
void copy_state(Detector& from, Detector& to);
Detector clone_model(Detector& model);

}  // namespace lsm

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maq2l/checkpoint.hpp"
#include "maq2l/class_table.hpp"
#include "maq2l/data.hpp"
#include "maq2l/loss.hpp"
#include "maq2l/metrics.hpp"
#include "maq2l/model.hpp"

namespace maq2l {

struct AdamConfig {
  double lr = 1.5e-3;
  double weight_decay = 0.0;  // decoupled: w <- w - lr·wd·w
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m, v;
};

// One bias-corrected Adam update of w at step t (1-based).
void adam_step(std::span<double> w, std::span<const double> g, AdamMoments& state, std::size_t t,
               const AdamConfig& cfg);

// Shadow copy of a parameter list: shadow <- decay·shadow + (1-decay)·param.
class EmaState {
 public:
  EmaState() = default;
  explicit EmaState(const ParamList& params);

  void update(const ParamList& params, double decay);
  const ParamList& shadow() const { return shadow_; }
  ParamList& shadow() { return shadow_; }

 private:
  ParamList shadow_;
};

enum class AlphaSource { validation, train };

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 30;
  std::size_t max_steps = 0;  // 0 = no step cap
  double ema_decay = 0.95;
  std::size_t early_stop_patience = 5;
  double aux_weight = 0.5;  // BCE on the CAM head logits
  LossConfig loss;
  std::vector<std::size_t> alpha_classes;  // static mode; empty = table bottleneck set
  std::size_t alpha_refresh_epochs = 1;    // dynamic mode cadence
  AlphaSource alpha_source = AlphaSource::validation;
  double threshold = 0.5;
  std::uint64_t seed = 1;
  std::string config_echo;  // stored in checkpoints

  void validate(std::size_t num_classes) const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps completed so far
  double train_loss = 0.0;
  EvalReport report;  // EMA weights on the evaluation split
  AlphaVector alpha;  // weights used during this epoch
};

std::string format_log_line(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
  bool early_stopped = false;
};

struct Predictions {
  Tensor probs;    // [B × N]
  Tensor targets;  // [B × N]
};

// Sigmoid of the decoder logits in evaluation mode, across worker threads.
Predictions predict(const Model& model, const std::vector<Example>& examples);

// Rebuilds a model from a checkpoint, reading the config echo with
// `make_config` and the model sections.
using ModelConfigParser = std::function<ModelConfig(const std::string& config_echo)>;
Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfigParser& make_config);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, ClassTable table);

  // Epoch loop. When out_dir is set, appends metrics.tsv and writes
  // best.ckpt (EMA weights) and last.ckpt (full state) there.
  TrainResult run(const std::vector<Example>& train, const std::vector<Example>& val,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

  // Full resumable state: live weights, EMA, Adam moments, counters, alpha.
  Checkpoint state_checkpoint() const;
  Checkpoint best_checkpoint() const;
  void restore(const Checkpoint& ckpt);

  const EmaState& ema() const { return ema_; }
  const AlphaVector& alpha() const { return alpha_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

  // Model with the EMA weights loaded.
  Model ema_model() const;

 private:
  double train_step(const std::vector<Example>& train, std::span<const std::size_t> batch);

  Model& model_;
  TrainConfig cfg_;
  ClassTable table_;
  ParamList params_;
  EmaState ema_;
  std::vector<AdamMoments> moments_;
  AlphaVector alpha_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  double best_score_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  ParamList best_;  // EMA weights at best_epoch_
};

}  // namespace maq2l

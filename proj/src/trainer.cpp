#include "maq2l/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "maq2l/error.hpp"
#include "maq2l/parallel.hpp"

namespace maq2l {

void adam_step(std::span<double> w, std::span<const double> g, AdamMoments& state, std::size_t t,
               const AdamConfig& cfg) {
  if (g.size() != w.size()) throw DimensionError("adam_step: gradient size differs from parameter size");
  if (t == 0) throw ContractError("adam_step: step index is 1-based");
  if (state.m.empty()) {
    state.m.assign(w.size(), 0.0);
    state.v.assign(w.size(), 0.0);
  }
  if (state.m.size() != w.size()) throw ContractError("adam_step: moment buffers do not match the parameter");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    w[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]);
  }
}

EmaState::EmaState(const ParamList& params) {
  shadow_.reserve(params.size());
  for (const auto& p : params) shadow_.push_back({p.name, p.tensor.detach()});
}

void EmaState::update(const ParamList& params, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("ema decay must be in [0, 1)");
  if (params.size() != shadow_.size()) throw ContractError("EMA shadow and parameter list differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != shadow_[i].name || params[i].tensor.shape() != shadow_[i].tensor.shape()) {
      throw ContractError("EMA shadow " + shadow_[i].name + " " + shape_str(shadow_[i].tensor.shape()) +
                          " drifted from parameter " + params[i].name + " " + shape_str(params[i].tensor.shape()));
    }
    auto s = shadow_[i].tensor.mutable_data();
    auto p = params[i].tensor.data();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = decay * s[k] + (1.0 - decay) * p[k];
  }
}

void TrainConfig::validate(std::size_t num_classes) const {
  if (!(adam.lr > 0.0)) throw ConfigError("learning_rate must be positive");
  if (adam.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("adam betas must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must be in [0, 1)");
  if (aux_weight < 0.0) throw ConfigError("aux_weight must be non-negative");
  if (alpha_refresh_epochs == 0) throw ConfigError("alpha_refresh_epochs must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  for (std::size_t c : alpha_classes)
    if (c >= num_classes) throw ConfigError("alpha class index out of range");
  loss.validate(num_classes);
}

std::string format_log_line(const EpochLog& log) {
  std::ostringstream os;
  char buf[64];
  os << log.epoch;
  for (double v : {log.train_loss, log.report.f1_normal, log.report.f2_ciw, log.report.map}) {
    std::snprintf(buf, sizeof buf, "\t%.6f", v);
    os << buf;
  }
  os << '\t';
  for (std::size_t i = 0; i < log.alpha.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.4f", i ? "," : "", log.alpha.values[i]);
    os << buf;
  }
  return os.str();
}

Predictions predict(const Model& model, const std::vector<Example>& examples) {
  const std::size_t n = model.config().num_classes;
  std::vector<double> probs(examples.size() * n), targets(examples.size() * n);
  parallel_for(examples.size(), [&](std::size_t i) {
    NoGradGuard guard;
    const ForwardContext ctx;
    const Tensor p = sigmoid(model.forward(examples[i].image, ctx).logits);
    if (examples[i].labels.size() != n) {
      throw DimensionError("example " + examples[i].path + " has " + std::to_string(examples[i].labels.size()) +
                           " labels for a " + std::to_string(n) + "-class model");
    }
    std::copy(p.data().begin(), p.data().end(), probs.begin() + static_cast<std::ptrdiff_t>(i * n));
    std::copy(examples[i].labels.begin(), examples[i].labels.end(), targets.begin() + static_cast<std::ptrdiff_t>(i * n));
  });
  return {Tensor::from({examples.size(), n}, std::move(probs)), Tensor::from({examples.size(), n}, std::move(targets))};
}

namespace {

ParamList gather(const Checkpoint& ckpt, const ParamList& like, const std::string& prefix) {
  ParamList out;
  out.reserve(like.size());
  for (const auto& p : like) {
    const Tensor* t = ckpt.find(prefix + p.name);
    if (!t) throw ContractError("checkpoint lacks tensor " + prefix + p.name);
    out.push_back({p.name, *t});
  }
  return out;
}

void copy_values(ParamList& dst, const ParamList& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].tensor.shape() != src[i].tensor.shape())
      throw ContractError("shape mismatch restoring " + dst[i].name);
    auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), dst[i].tensor.mutable_data().begin());
  }
}

ParamList snapshot(const ParamList& params) {
  ParamList out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.detach()});
  return out;
}

std::vector<std::optional<double>> percent(std::vector<std::optional<double>> ap) {
  for (auto& a : ap)
    if (a) *a *= 100.0;
  return ap;
}

}  // namespace

Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfigParser& make_config) {
  Model model(make_config(ckpt.config), 0);
  model.load_values(gather(ckpt, model.parameters(), ""));
  return model;
}

Trainer::Trainer(Model& model, TrainConfig cfg, ClassTable table)
    : model_(model), cfg_(std::move(cfg)), table_(std::move(table)), params_(model.parameters()), ema_(params_),
      moments_(params_.size()) {
  const std::size_t n = model_.config().num_classes;
  if (table_.size() != n) {
    throw ConfigError("class table has " + std::to_string(table_.size()) + " entries for a " + std::to_string(n) +
                      "-class model");
  }
  cfg_.validate(n);
  switch (cfg_.loss.alpha_mode) {
    case AlphaMode::off:
    case AlphaMode::dynamic:
      alpha_ = AlphaVector::ones(n);
      break;
    case AlphaMode::fixed:
      alpha_ = cfg_.alpha_classes.empty() ? static_alpha(table_, cfg_.loss.alpha_value)
                                          : static_alpha(n, cfg_.alpha_classes, cfg_.loss.alpha_value);
      break;
  }
  best_ = snapshot(ema_.shadow());
}

Model Trainer::ema_model() const {
  Model m(model_.config(), 0);
  m.load_values(ema_.shadow());
  return m;
}

double Trainer::train_step(const std::vector<Example>& train, std::span<const std::size_t> batch) {
  const std::size_t n = model_.config().num_classes;
  std::mt19937_64 rng(derive_seed(cfg_.seed ^ 0x64726f70ULL, step_));
  const ForwardContext ctx{true, &rng, model_.config().attention.dropout};
  LossConfig bce;
  bce.gamma_pos = bce.gamma_neg = bce.prob_margin = 0.0;

  std::vector<Tensor> logits, cams;
  std::vector<double> targets;
  Tensor objective;
  try {
    for (std::size_t idx : batch) {
      const ModelOutput out = model_.forward(train[idx].image, ctx);
      logits.push_back(out.logits);
      cams.push_back(out.cam_logits);
      targets.insert(targets.end(), train[idx].labels.begin(), train[idx].labels.end());
    }
    const Tensor z = stack(logits);
    const Tensor y = Tensor::from({batch.size(), n}, targets);
    objective = total_loss(z, y, alpha_, cfg_.loss);
    if (cfg_.aux_weight > 0.0)
      objective = add(objective, scale(total_loss(stack(cams), y, AlphaVector::ones(n), bce), cfg_.aux_weight));
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "non-finite value at step " << step_ + 1 << ", batch [";
    for (std::size_t i = 0; i < batch.size(); ++i) os << (i ? "," : "") << train[batch[i]].path;
    os << "]";
    if (logits.size() == batch.size()) {
      NoGradGuard guard;
      const auto per = per_class_loss(stack(logits), Tensor::from({batch.size(), n}, targets), cfg_.loss);
      os << ", class losses";
      for (std::size_t c = 0; c < n; ++c) os << ' ' << table_[c].code << '=' << per[c];
    }
    os << ": " << e.what();
    throw NumericError(os.str());
  }
  const double value = objective.item();

  for (auto& p : params_) p.tensor.zero_grad();
  objective.backward();
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    const std::vector<double> zeros = t.has_grad() ? std::vector<double>{} : std::vector<double>(t.numel(), 0.0);
    adam_step(t.mutable_data(), t.has_grad() ? t.grad() : std::span<const double>(zeros), moments_[i], step_,
              cfg_.adam);
    for (double w : t.data())
      if (!std::isfinite(w)) throw NumericError("parameter " + params_[i].name + " became non-finite at step " +
                                                std::to_string(step_));
  }
  ema_.update(params_, cfg_.ema_decay);
  return value;
}

TrainResult Trainer::run(const std::vector<Example>& train, const std::vector<Example>& val,
                         const std::optional<std::filesystem::path>& out_dir) {
  if (train.empty()) throw ConfigError("training set is empty");
  const std::vector<Example>& eval_set = val.empty() ? train : val;
  const std::vector<Example>& ap_set =
      cfg_.alpha_source == AlphaSource::validation ? eval_set : train;

  std::ofstream log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log.open(*out_dir / "metrics.tsv", epoch_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + (*out_dir / "metrics.tsv").string());
  }

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  while (epoch_ < cfg_.max_epochs && (cfg_.max_steps == 0 || step_ < cfg_.max_steps)) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, epoch_));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog entry;
    entry.alpha = alpha_;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
      if (cfg_.max_steps != 0 && step_ >= cfg_.max_steps) break;
      const std::size_t len = std::min(cfg_.batch_size, order.size() - b);
      const double l = train_step(train, std::span<const std::size_t>(order).subspan(b, len));
      result.step_losses.push_back(l);
      loss_sum += l;
      ++batches;
    }
    ++epoch_;
    entry.epoch = epoch_;
    entry.steps = step_;
    entry.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;

    const Model shadow = ema_model();
    const Predictions pred = predict(shadow, eval_set);
    entry.report = evaluate(pred.probs, pred.targets, table_, cfg_.threshold);

    if (cfg_.loss.alpha_mode == AlphaMode::dynamic && epoch_ % cfg_.alpha_refresh_epochs == 0) {
      const Predictions ap_pred = &ap_set == &eval_set ? pred : predict(shadow, ap_set);
      const auto ap = percent(per_class_ap(ap_pred.probs, ap_pred.targets));
      alpha_ = dynamic_alpha(std::span<const std::optional<double>>(ap), cfg_.loss.top_m, cfg_.loss.clamp_min);
    }

    if (entry.report.f2_ciw > best_score_) {
      best_score_ = entry.report.f2_ciw;
      best_epoch_ = epoch_;
      stale_ = 0;
      best_ = snapshot(ema_.shadow());
    } else {
      ++stale_;
    }

    if (out_dir) {
      log << format_log_line(entry) << '\n' << std::flush;
      if (best_epoch_ == epoch_) save_checkpoint(*out_dir / "best.ckpt", best_checkpoint());
      save_checkpoint(*out_dir / "last.ckpt", state_checkpoint());
    }
    result.epochs.push_back(std::move(entry));
    if (stale_ > cfg_.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.best_epoch = best_epoch_;
  result.best_score = best_score_;
  return result;
}

Checkpoint Trainer::best_checkpoint() const {
  Checkpoint ckpt{cfg_.config_echo, {}};
  for (const auto& p : best_) ckpt.tensors.push_back({p.name, p.tensor});
  return ckpt;
}

Checkpoint Trainer::state_checkpoint() const {
  Checkpoint ckpt{cfg_.config_echo, {}};
  for (const auto& p : params_) ckpt.tensors.push_back({p.name, p.tensor.detach()});
  for (const auto& p : ema_.shadow()) ckpt.tensors.push_back({"trainer.ema." + p.name, p.tensor.detach()});
  for (const auto& p : best_) ckpt.tensors.push_back({"trainer.best." + p.name, p.tensor});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Shape& shape = params_[i].tensor.shape();
    const AdamMoments& mo = moments_[i];
    const std::size_t numel = shape_numel(shape);
    ckpt.tensors.push_back({"trainer.adam_m." + params_[i].name,
                            Tensor::from(shape, mo.m.empty() ? std::vector<double>(numel, 0.0) : mo.m)});
    ckpt.tensors.push_back({"trainer.adam_v." + params_[i].name,
                            Tensor::from(shape, mo.v.empty() ? std::vector<double>(numel, 0.0) : mo.v)});
  }
  ckpt.tensors.push_back({"trainer.counters",
                          Tensor::from({4}, {static_cast<double>(epoch_), static_cast<double>(step_),
                                             static_cast<double>(best_epoch_), static_cast<double>(stale_)})});
  ckpt.tensors.push_back({"trainer.best_score", Tensor::from({1}, {best_score_})});
  ckpt.tensors.push_back({"trainer.alpha", Tensor::from({alpha_.size()}, alpha_.values)});
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  model_.load_values(gather(ckpt, params_, ""));
  ParamList ema = gather(ckpt, params_, "trainer.ema.");
  copy_values(ema_.shadow(), ema);
  best_ = snapshot(gather(ckpt, params_, "trainer.best."));
  const ParamList m = gather(ckpt, params_, "trainer.adam_m.");
  const ParamList v = gather(ckpt, params_, "trainer.adam_v.");
  const Tensor* counters = ckpt.find("trainer.counters");
  const Tensor* best = ckpt.find("trainer.best_score");
  const Tensor* alpha = ckpt.find("trainer.alpha");
  if (!counters || counters->numel() != 4 || !best || !alpha || alpha->numel() != alpha_.size())
    throw ContractError("checkpoint does not carry resumable trainer state");
  epoch_ = static_cast<std::size_t>(counters->data()[0]);
  step_ = static_cast<std::size_t>(counters->data()[1]);
  best_epoch_ = static_cast<std::size_t>(counters->data()[2]);
  stale_ = static_cast<std::size_t>(counters->data()[3]);
  best_score_ = best->item();
  alpha_.values = alpha->to_vector();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (step_ == 0) {
      moments_[i] = {};
    } else {
      moments_[i].m = m[i].tensor.to_vector();
      moments_[i].v = v[i].tensor.to_vector();
    }
  }
}

}  // namespace maq2l

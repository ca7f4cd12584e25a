#include "maq2l/run_config.hpp"

#include <cmath>
#include <set>

#include "maq2l/error.hpp"

namespace maq2l {

const std::vector<ConfigKey>& run_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"profile", "desk", "named defaults: desk or paper"},
      {"seed", "1", "seed for initialisation, shuffling and dropout"},
      {"classes", "RB,OS,FS,OB,OK,PH,PB,OP", "comma-separated class codes, in model order"},
      {"train_manifest", "", "training manifest (path, sequence_id, codes)"},
      {"val_manifest", "", "validation manifest; empty evaluates on the training set"},
      {"out_dir", "run", "directory for metrics.tsv, best.ckpt, last.ckpt"},
      {"subsample_k", "1", "keep every k-th training image within each sequence"},
      {"input_size", "32", "square input side after bilinear resize"},
      {"backbone_channels", "16,32,64", "output channels of each conv stage"},
      {"backbone_strides", "2,2,2", "stride of each conv stage"},
      {"d_model", "64", "transformer width"},
      {"heads", "4", "attention heads"},
      {"ffn_dim", "128", "feed-forward hidden width"},
      {"enc_layers", "1", "encoder layers"},
      {"dec_layers", "2", "decoder layers"},
      {"dropout", "0.1", "dropout on sublayer outputs"},
      {"label_self_attention", "true", "self-attention among label queries"},
      {"label_pos", "false", "learned per-label bias on label self-attention queries and keys"},
      {"use_mask", "true", "add the CAM attention mask to decoder cross-attention"},
      {"mask_detach", "false", "stop decoder gradients from reaching the mask"},
      {"aux_weight", "0.5", "weight of the BCE loss on the CAM head logits"},
      {"learning_rate", "1.5e-3", "Adam step size"},
      {"weight_decay", "1e-2", "decoupled weight decay"},
      {"adam_beta1", "0.9", "Adam first-moment decay"},
      {"adam_beta2", "0.999", "Adam second-moment decay"},
      {"adam_eps", "1e-8", "Adam denominator epsilon"},
      {"batch_size", "8", "images per optimizer step"},
      {"max_epochs", "30", "epoch cap"},
      {"max_steps", "0", "optimizer step cap, 0 = none"},
      {"ema_decay", "0.95", "EMA shadow decay per step"},
      {"early_stop_patience", "5", "non-improving epochs tolerated before stopping"},
      {"gamma_pos", "0", "focusing exponent on positives"},
      {"gamma_neg", "2", "focusing exponent on negatives"},
      {"prob_margin", "0.05", "negative probability shift"},
      {"loss_eps", "1e-8", "log clamp"},
      {"alpha_mode", "off", "class weighting: off, static or dynamic"},
      {"alpha_value", "2", "static weight for the alpha classes"},
      {"alpha_classes", "", "codes weighted in static mode; empty = bottleneck classes"},
      {"top_m", "4", "dynamic mode: number of largest AP gaps weighted"},
      {"clamp_min", "1", "dynamic mode: lower bound of every weight"},
      {"alpha_refresh_epochs", "1", "dynamic mode: epochs between weight refreshes"},
      {"alpha_source", "validation", "split whose AP drives dynamic weights: validation or train"},
      {"threshold", "0.5", "probability threshold for F-scores"},
      {"cam_quantile", "0.9", "per-map quantile above which CAM pixels form regions"},
      {"min_area_fraction", "0.01", "smallest kept region as a fraction of image pixels"},
      {"overlay_alpha", "0.4", "heat colour opacity in overlays"},
  };
  return keys;
}

FlatConfig profile_overrides(const std::string& name) {
  FlatConfig cfg;
  if (name == "desk") return cfg;
  if (name == "paper") {
    cfg.set("classes", "RB,OS,FS,OB,OK,PH,PB,OP,RO,IN,PF,FO,BE,IS,DE,GR,AF");
    cfg.set("learning_rate", "1e-5");
    cfg.set("weight_decay", "1e-2");
    cfg.set("batch_size", "16");
    cfg.set("max_epochs", "40");
    cfg.set("ema_decay", "0.9997");
    cfg.set("input_size", "448");
    cfg.set("backbone_channels", "64,128,256,512,2048");
    cfg.set("backbone_strides", "2,2,2,2,2");
    return cfg;
  }
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

FlatConfig resolve_run_config(const FlatConfig& file, const FlatConfig& overrides) {
  std::set<std::string> known;
  for (const auto& k : run_config_keys()) known.insert(k.key);
  for (const FlatConfig* src : {&file, &overrides})
    for (const auto& [key, value] : src->values())
      if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

  const std::string profile = overrides.get("profile").value_or(file.get("profile").value_or("desk"));
  FlatConfig out;
  for (const auto& k : run_config_keys()) out.set(k.key, k.fallback);
  out.merge(profile_overrides(profile));
  out.merge(file);
  out.merge(overrides);
  out.set("profile", profile);
  return out;
}

ClassTable run_class_table(const FlatConfig& cfg) {
  const auto codes = cfg.list("classes");
  if (codes.empty()) throw ConfigError("classes must name at least one class code");
  try {
    return ClassTable::sewer_ml().subset(codes);
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("classes: ") + e.what());
  }
}

ModelConfig run_model_config(const FlatConfig& cfg) {
  ModelConfig m;
  m.num_classes = run_class_table(cfg).size();
  m.input_size = cfg.count("input_size", m.input_size);
  m.backbone.channels = {3};
  for (std::size_t c : cfg.counts("backbone_channels")) m.backbone.channels.push_back(c);
  m.backbone.strides = cfg.counts("backbone_strides");
  m.attention.d_model = cfg.count("d_model", m.attention.d_model);
  m.attention.heads = cfg.count("heads", m.attention.heads);
  m.attention.ffn_dim = cfg.count("ffn_dim", m.attention.ffn_dim);
  m.attention.enc_layers = cfg.count("enc_layers", m.attention.enc_layers);
  m.attention.dec_layers = cfg.count("dec_layers", m.attention.dec_layers);
  m.attention.dropout = cfg.real("dropout", m.attention.dropout);
  m.attention.label_self_attention = cfg.flag("label_self_attention", m.attention.label_self_attention);
  m.attention.label_pos = cfg.flag("label_pos", m.attention.label_pos);
  m.use_mask = cfg.flag("use_mask", m.use_mask);
  m.mask_detach = cfg.flag("mask_detach", m.mask_detach);
  m.validate();
  return m;
}

TrainConfig run_train_config(const FlatConfig& cfg, const ClassTable& table) {
  TrainConfig t;
  t.adam.lr = cfg.real("learning_rate", t.adam.lr);
  t.adam.weight_decay = cfg.real("weight_decay", t.adam.weight_decay);
  t.adam.beta1 = cfg.real("adam_beta1", t.adam.beta1);
  t.adam.beta2 = cfg.real("adam_beta2", t.adam.beta2);
  t.adam.eps = cfg.real("adam_eps", t.adam.eps);
  t.batch_size = cfg.count("batch_size", t.batch_size);
  t.max_epochs = cfg.count("max_epochs", t.max_epochs);
  t.max_steps = cfg.count("max_steps", t.max_steps);
  t.ema_decay = cfg.real("ema_decay", t.ema_decay);
  t.early_stop_patience = cfg.count("early_stop_patience", t.early_stop_patience);
  t.aux_weight = cfg.real("aux_weight", t.aux_weight);
  t.loss.gamma_pos = cfg.real("gamma_pos", t.loss.gamma_pos);
  t.loss.gamma_neg = cfg.real("gamma_neg", t.loss.gamma_neg);
  t.loss.prob_margin = cfg.real("prob_margin", t.loss.prob_margin);
  t.loss.eps = cfg.real("loss_eps", t.loss.eps);
  const std::string mode = cfg.str("alpha_mode", "off");
  if (mode == "off") {
    t.loss.alpha_mode = AlphaMode::off;
  } else if (mode == "static") {
    t.loss.alpha_mode = AlphaMode::fixed;
  } else if (mode == "dynamic") {
    t.loss.alpha_mode = AlphaMode::dynamic;
  } else {
    throw ConfigError("alpha_mode must be off, static or dynamic, got '" + mode + "'");
  }
  t.loss.alpha_value = cfg.real("alpha_value", t.loss.alpha_value);
  t.loss.top_m = cfg.count("top_m", t.loss.top_m);
  t.loss.clamp_min = cfg.real("clamp_min", t.loss.clamp_min);
  for (const auto& code : cfg.list("alpha_classes")) {
    const auto idx = table.index_of(code);
    if (!idx) throw ConfigError("alpha_classes: '" + code + "' is not one of the configured classes");
    t.alpha_classes.push_back(*idx);
  }
  if (t.loss.alpha_mode == AlphaMode::fixed && t.alpha_classes.empty() && table.bottleneck_indices().empty())
    throw ConfigError("static alpha needs alpha_classes or at least one bottleneck class among the classes");
  t.alpha_refresh_epochs = cfg.count("alpha_refresh_epochs", t.alpha_refresh_epochs);
  const std::string source = cfg.str("alpha_source", "validation");
  if (source == "validation") {
    t.alpha_source = AlphaSource::validation;
  } else if (source == "train") {
    t.alpha_source = AlphaSource::train;
  } else {
    throw ConfigError("alpha_source must be validation or train, got '" + source + "'");
  }
  t.threshold = cfg.real("threshold", t.threshold);
  t.seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
  t.config_echo = cfg.to_text();
  t.validate(table.size());
  return t;
}

std::size_t LocalizeConfig::min_area(std::size_t width, std::size_t height) const {
  return static_cast<std::size_t>(std::ceil(min_area_fraction * static_cast<double>(width * height)));
}

LocalizeConfig run_localize_config(const FlatConfig& cfg) {
  LocalizeConfig l;
  l.quantile = cfg.real("cam_quantile", l.quantile);
  l.min_area_fraction = cfg.real("min_area_fraction", l.min_area_fraction);
  l.overlay_alpha = cfg.real("overlay_alpha", l.overlay_alpha);
  if (!(l.quantile > 0.0 && l.quantile < 1.0)) throw ConfigError("cam_quantile must lie in (0, 1)");
  if (!(l.min_area_fraction >= 0.0 && l.min_area_fraction <= 1.0))
    throw ConfigError("min_area_fraction must lie in [0, 1]");
  if (!(l.overlay_alpha >= 0.0 && l.overlay_alpha <= 1.0)) throw ConfigError("overlay_alpha must lie in [0, 1]");
  return l;
}

ModelConfig model_config_from_echo(const std::string& echo) {
  return run_model_config(resolve_run_config(FlatConfig::parse(echo), {}));
}

}  // namespace maq2l

#include "maq2l/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "maq2l/data.hpp"
#include "maq2l/error.hpp"
#include "maq2l/localize.hpp"
#include "maq2l/metrics.hpp"
#include "maq2l/run_config.hpp"
#include "maq2l/trainer.hpp"

namespace maq2l {

namespace fs = std::filesystem;

namespace {

FlatConfig parse_sets(const std::vector<std::string>& sets) {
  FlatConfig cfg;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || trim(s.substr(0, eq)).empty())
      throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return cfg;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " is required");
  if (!fs::is_regular_file(p)) throw ConfigError(what + " '" + p.string() + "' does not exist");
}

void write_text_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

std::string help_footer() {
  std::ostringstream os;
  os << "\nRun configuration keys (config file 'key = value', '#' comments; precedence:\n"
        "built-in defaults < profile < --config file < --set/--seed/--out flags):\n";
  for (const auto& k : run_config_keys())
    os << "  " << k.key << " (default: " << (k.fallback.empty() ? "empty" : k.fallback) << ")\n      " << k.help
       << '\n';
  os << "\nSynthetic spec keys (generate --spec file):\n";
  for (const auto& [key, help] : SyntheticSpec::key_help()) os << "  " << key << "\n      " << help << '\n';
  os << "\nEnvironment: MAQ2L_THREADS caps worker threads (default 1).\n"
        "Exit codes: 0 ok, 2 usage or configuration error, 3 numeric failure, 4 I/O failure.\n";
  return os.str();
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::int64_t> seed;
};

FlatConfig run_config(const Common& c, FlatConfig extra = {}) {
  FlatConfig file;
  if (!c.config_path.empty()) {
    require_file(c.config_path, "--config");
    file = FlatConfig::load(c.config_path);
  }
  FlatConfig overrides = parse_sets(c.sets);
  overrides.merge(extra);
  if (c.seed) overrides.set("seed", std::to_string(*c.seed));
  return resolve_run_config(file, overrides);
}

std::vector<Example> load_split(const std::string& manifest, const ClassTable& table, std::size_t size,
                                std::size_t subsample_k) {
  auto records = load_manifest(manifest, table);
  if (subsample_k > 1) records = subsample_every_k(records, subsample_k);
  for (const auto& r : records) {
    const fs::path p = fs::path(manifest).parent_path() / r.path;
    if (!fs::is_regular_file(p)) throw ConfigError("image '" + p.string() + "' listed in " + manifest + " does not exist");
  }
  return load_examples(records, fs::path(manifest).parent_path(), size);
}

int cmd_generate(const std::string& spec_path, const std::vector<std::string>& sets, std::optional<std::int64_t> seed,
                 const std::string& out_dir, std::size_t count, std::ostream& out) {
  FlatConfig cfg;
  if (!spec_path.empty()) {
    require_file(spec_path, "--spec");
    cfg = FlatConfig::load(spec_path);
  }
  cfg.merge(parse_sets(sets));
  if (seed) cfg.set("seed", std::to_string(*seed));
  const SyntheticSpec spec = SyntheticSpec::from_config(cfg);
  if (count == 0) throw ConfigError("--count must be at least 1");
  const auto samples = generate_dataset(spec, count);
  write_dataset(out_dir, samples, spec.table);
  out << "wrote " << samples.size() << " images to " << out_dir << '\n';
  return kExitOk;
}

// Config without the keys that only say where output goes or how long to run.
std::string resume_key(const FlatConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.values())
    if (k != "out_dir" && k != "max_epochs" && k != "max_steps" && k != "early_stop_patience") os << k << '=' << v << '\n';
  return os.str();
}

int cmd_train(const Common& c, const std::string& out_override, bool resume, std::ostream& out) {
  FlatConfig extra;
  if (!out_override.empty()) extra.set("out_dir", out_override);
  const FlatConfig cfg = run_config(c, extra);
  const ClassTable table = run_class_table(cfg);
  const ModelConfig mcfg = run_model_config(cfg);
  const TrainConfig tcfg = run_train_config(cfg, table);
  run_localize_config(cfg);

  const std::string train_manifest = cfg.str("train_manifest", "");
  require_file(train_manifest, "train_manifest");
  const std::string val_manifest = cfg.str("val_manifest", "");
  if (!val_manifest.empty()) require_file(val_manifest, "val_manifest");
  const fs::path out_dir = cfg.str("out_dir", "run");

  const auto train = load_split(train_manifest, table, mcfg.input_size, cfg.count("subsample_k", 1));
  const auto val = val_manifest.empty() ? std::vector<Example>{} : load_split(val_manifest, table, mcfg.input_size, 1);
  if (train.empty()) throw ConfigError("training manifest " + train_manifest + " lists no images");

  Model model(mcfg, tcfg.seed);
  Trainer trainer(model, tcfg, table);
  if (resume) {
    const fs::path last = out_dir / "last.ckpt";
    if (!fs::is_regular_file(last)) throw ConfigError("--resume: no checkpoint at " + last.string());
    const Checkpoint ckpt = load_checkpoint(last);
    if (resume_key(FlatConfig::parse(ckpt.config)) != resume_key(cfg))
      throw ConfigError("--resume: configuration differs from the one stored in " + last.string());
    trainer.restore(ckpt);
    out << "resuming after epoch " << trainer.epoch() << " (step " << trainer.step() << ")\n";
  }
  fs::create_directories(out_dir);
  write_text_file(out_dir / "config.txt", tcfg.config_echo);
  const TrainResult result = trainer.run(train, val, out_dir);
  for (const auto& e : result.epochs) out << format_log_line(e) << '\n';
  out << "best f2_ciw " << result.best_score << " at epoch " << result.best_epoch
      << (result.early_stopped ? " (early stop)" : "") << '\n';
  return kExitOk;
}

FlatConfig checkpoint_config(const Checkpoint& ckpt, const Common& c) {
  FlatConfig overrides = parse_sets(c.sets);
  if (c.seed) overrides.set("seed", std::to_string(*c.seed));
  return resolve_run_config(FlatConfig::parse(ckpt.config), overrides);
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& manifest, const std::string& out_dir,
             bool oracle, std::ostream& out) {
  require_file(ckpt_path, "--checkpoint");
  require_file(manifest, "--manifest");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const FlatConfig cfg = checkpoint_config(ckpt, c);
  const ClassTable table = run_class_table(cfg);
  const Model model = model_from_checkpoint(ckpt, model_config_from_echo);
  if (model.config().num_classes != table.size()) throw ConfigError("--set classes must keep the checkpoint's class count");
  const auto examples = load_split(manifest, table, model.config().input_size, 1);
  if (examples.empty()) throw ConfigError("manifest " + manifest + " lists no images");
  Predictions pred = predict(model, examples);
  if (oracle) pred.probs = pred.targets;
  const EvalReport report = evaluate(pred.probs, pred.targets, table, cfg.real("threshold", 0.5));
  const std::string text = report_to_text(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "report.txt", text);
    write_text_file(fs::path(out_dir) / "report.json", report_to_json(report));
  }
  out << text;
  return kExitOk;
}

int cmd_localize(const Common& c, const std::string& ckpt_path, const std::vector<std::string>& images,
                 const std::string& classes, const std::string& out_dir, std::ostream& out) {
  require_file(ckpt_path, "--checkpoint");
  for (const auto& img : images) require_file(img, "--image");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const FlatConfig cfg = checkpoint_config(ckpt, c);
  const ClassTable table = run_class_table(cfg);
  const LocalizeConfig lcfg = run_localize_config(cfg);
  const Model model = model_from_checkpoint(ckpt, model_config_from_echo);

  std::vector<std::size_t> selected;
  if (classes.empty()) {
    for (std::size_t i = 0; i < table.size(); ++i) selected.push_back(i);
  } else {
    for (const auto& raw : split(classes, ',')) {
      const auto idx = table.index_of(trim(raw));
      if (!idx) throw ConfigError("--classes: '" + trim(raw) + "' is not a class of this model");
      if (std::find(selected.begin(), selected.end(), *idx) == selected.end()) selected.push_back(*idx);
    }
  }
  fs::create_directories(out_dir);
  for (const auto& path : images) {
    const Image image = read_png(path);
    const Tensor input = image_to_tensor(image, model.config().input_size);
    NoGradGuard guard;
    const Tensor features = model.backbone.extract_features(input);
    const std::string stem = fs::path(path).stem().string();
    std::ostringstream records;
    for (std::size_t cls : selected) {
      const Heatmap hm = class_heatmap(features, model.cam_head, cls, image.height, image.width, table[cls].code);
      const auto regions = extract_regions(hm, lcfg.quantile, lcfg.min_area(image.width, image.height));
      const fs::path overlay = fs::path(out_dir) / (stem + "." + table[cls].code + ".overlay.png");
      write_png(overlay, render_overlay(image, regions, hm, lcfg.overlay_alpha));
      for (const auto& r : regions) records << region_record(r) << '\n';
      out << overlay.string() << ": " << regions.size() << " region(s)\n";
    }
    write_text_file(fs::path(out_dir) / (stem + ".regions.tsv"), records.str());
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mask-attention query-to-label multi-label classifier: data, training, evaluation, localization"};
  app.require_subcommand(1);
  app.footer(help_footer());

  std::string spec_path, gen_out;
  std::size_t count = 0;
  Common gen_c, train_c, eval_c, loc_c;
  auto* gen = app.add_subcommand("generate", "write a synthetic long-tail dataset");
  gen->add_option("--spec", spec_path, "flat key=value synthetic spec file");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", count, "number of images")->required();
  gen->add_option("--set", gen_c.sets, "spec override key=value (repeatable)");
  gen->add_option("--seed", gen_c.seed, "generator seed");

  std::string train_out;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model; writes metrics.tsv, best.ckpt, last.ckpt");
  train->add_option("--config", train_c.config_path, "run configuration file");
  train->add_option("--set", train_c.sets, "configuration override key=value (repeatable)");
  train->add_option("--seed", train_c.seed, "run seed");
  train->add_option("--out", train_out, "output directory (overrides out_dir)");
  train->add_flag("--resume", resume, "continue from <out_dir>/last.ckpt");

  std::string eval_ckpt, eval_manifest, eval_out;
  bool oracle = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--manifest", eval_manifest, "manifest to evaluate")->required();
  ev->add_option("--out", eval_out, "directory for report.txt and report.json");
  ev->add_option("--set", eval_c.sets, "configuration override key=value (repeatable)");
  ev->add_option("--seed", eval_c.seed, "run seed");
  ev->add_flag("--debug-oracle", oracle, "score the ground truth as predictions");

  std::string loc_ckpt, loc_classes, loc_out;
  std::vector<std::string> loc_images;
  auto* loc = app.add_subcommand("localize", "write CAM overlays and region records");
  loc->add_option("--checkpoint", loc_ckpt, "checkpoint file")->required();
  loc->add_option("--image", loc_images, "input PNG (repeatable)")->required();
  loc->add_option("--classes", loc_classes, "comma-separated class codes (default all)");
  loc->add_option("--out", loc_out, "output directory")->required();
  loc->add_option("--set", loc_c.sets, "configuration override key=value (repeatable)");
  loc->add_option("--seed", loc_c.seed, "run seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(spec_path, gen_c.sets, gen_c.seed, gen_out, count, out);
    if (*train) return cmd_train(train_c, train_out, resume, out);
    if (*ev) return cmd_eval(eval_c, eval_ckpt, eval_manifest, eval_out, oracle, out);
    if (*loc) return cmd_localize(loc_c, loc_ckpt, loc_images, loc_classes, loc_out, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace maq2l

#pragma once

#include <string>
#include <vector>

#include "maq2l/class_table.hpp"
#include "maq2l/config.hpp"
#include "maq2l/model.hpp"
#include "maq2l/trainer.hpp"

namespace maq2l {

struct ConfigKey {
  std::string key;
  std::string fallback;  // desk profile value
  std::string help;
};

// Every key a run configuration may contain.
const std::vector<ConfigKey>& run_config_keys();

// Values a named profile ("desk" or "paper") puts on top of the key defaults.
FlatConfig profile_overrides(const std::string& name);

// defaults <- profile <- file <- overrides. The profile is read from the
// overrides, then the file, then defaults to "desk". Unknown keys throw
// ConfigError. The result holds every known key.
FlatConfig resolve_run_config(const FlatConfig& file, const FlatConfig& overrides);

ClassTable run_class_table(const FlatConfig& cfg);
ModelConfig run_model_config(const FlatConfig& cfg);
TrainConfig run_train_config(const FlatConfig& cfg, const ClassTable& table);

struct LocalizeConfig {
  double quantile = 0.9;
  double min_area_fraction = 0.01;
  double overlay_alpha = 0.4;

  std::size_t min_area(std::size_t width, std::size_t height) const;
};
LocalizeConfig run_localize_config(const FlatConfig& cfg);

// Model config from a checkpoint's config echo.
ModelConfig model_config_from_echo(const std::string& echo);

}  // namespace maq2l

#pragma once

// Model + training configuration and their strict JSON schema. Unknown keys
// are rejected so a typo cannot silently run the wrong ablation.

#include <cstdint>
#include <string>

#include "mstn/model.hpp"

namespace mstn {

struct TrainConfig {
  double lr_max = 1e-4;
  double lr_min = 0.0;
  long long total_iters = 5000;
  int batch = 8;
  int patch = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  uint64_t seed = 1;
  bool augment = true;

  void validate() const {
    if (lr_min > lr_max) throw ConfigError("TrainConfig: lr_min > lr_max");
    if (lr_max < 0) throw ConfigError("TrainConfig: lr_max must be >= 0");
    if (total_iters < 1) throw ConfigError("TrainConfig: total_iters must be >= 1");
    if (batch < 1) throw ConfigError("TrainConfig: batch must be >= 1");
    if (patch < 1) throw ConfigError("TrainConfig: patch must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
      throw ConfigError("TrainConfig: betas must lie in [0,1)");
    }
    if (eps_adam <= 0) throw ConfigError("TrainConfig: eps_adam must be > 0");
  }
};

/// Defaults are the desk profile; "paper" restores the published protocol
/// (batch 16, 240x240 patches, 5e7 iterations).
TrainConfig train_config_preset(const std::string& name);

struct AppConfig {
  MstnConfig model;
  TrainConfig train;
};

// JSON (de)serialization. *_from_json* reject unknown keys; missing keys keep
// their defaults. Serialization emits sorted keys, so equal configs produce
// byte-identical text.
std::string model_config_to_json(const MstnConfig& config);
MstnConfig model_config_from_json_text(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json_text(const std::string& text);
std::string app_config_to_json(const AppConfig& config);
AppConfig app_config_from_json_text(const std::string& text);
AppConfig app_config_from_file(const std::string& path);

}  // namespace mstn

#include "mstn/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mstn {
namespace {

using nlohmann::json;

json parse_text(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw ConfigError(std::string(what) + ": invalid JSON");
  }
  return j;
}

void check_object(const json& j, const char* what) {
  if (!j.is_object()) {
    throw ConfigError(std::string(what) + ": expected a JSON object");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError(std::string(what) + ": unknown key '" + it.key() + "'");
    }
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(what) + ": bad value for '" + key + "'");
  }
}

MstnConfig model_from_json(const json& j) {
  check_object(j, "model config");
  reject_unknown(j,
                 {"rows", "scales", "base_channels", "use_afsm", "use_mffm",
                  "path_preset"},
                 "model config");
  MstnConfig c;
  read_field(j, "rows", c.rows, "model config");
  read_field(j, "scales", c.scales, "model config");
  // "rows" may be omitted; it must equal "scales" anyway.
  if (!j.contains("rows") && j.contains("scales")) c.rows = c.scales;
  read_field(j, "base_channels", c.base_channels, "model config");
  read_field(j, "use_afsm", c.use_afsm, "model config");
  read_field(j, "use_mffm", c.use_mffm, "model config");
  read_field(j, "path_preset", c.path_preset, "model config");
  c.validate();
  return c;
}

json model_to_json(const MstnConfig& c) {
  json j;
  j["rows"] = c.rows;
  j["scales"] = c.scales;
  j["base_channels"] = c.base_channels;
  j["use_afsm"] = c.use_afsm;
  j["use_mffm"] = c.use_mffm;
  j["path_preset"] = c.path_preset;
  return j;
}

TrainConfig train_from_json(const json& j) {
  check_object(j, "train config");
  reject_unknown(j,
                 {"lr_max", "lr_min", "total_iters", "batch", "patch", "betas",
                  "eps_adam", "seed", "augment"},
                 "train config");
  TrainConfig c;
  read_field(j, "lr_max", c.lr_max, "train config");
  read_field(j, "lr_min", c.lr_min, "train config");
  read_field(j, "total_iters", c.total_iters, "train config");
  read_field(j, "batch", c.batch, "train config");
  read_field(j, "patch", c.patch, "train config");
  if (auto it = j.find("betas"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) {
      throw ConfigError("train config: 'betas' must be a 2-element array");
    }
    c.beta1 = (*it)[0].get<double>();
    c.beta2 = (*it)[1].get<double>();
  }
  read_field(j, "eps_adam", c.eps_adam, "train config");
  read_field(j, "seed", c.seed, "train config");
  read_field(j, "augment", c.augment, "train config");
  c.validate();
  return c;
}

json train_to_json(const TrainConfig& c) {
  json j;
  j["lr_max"] = c.lr_max;
  j["lr_min"] = c.lr_min;
  j["total_iters"] = c.total_iters;
  j["batch"] = c.batch;
  j["patch"] = c.patch;
  j["betas"] = json::array({c.beta1, c.beta2});
  j["eps_adam"] = c.eps_adam;
  j["seed"] = c.seed;
  j["augment"] = c.augment;
  return j;
}

}  // namespace

TrainConfig train_config_preset(const std::string& name) {
  if (name == "desk") return TrainConfig{};
  if (name == "paper") {
    TrainConfig c;
    c.lr_max = 1e-4;
    c.total_iters = 50'000'000;
    c.batch = 16;
    c.patch = 240;
    return c;
  }
  throw ConfigError("unknown train preset '" + name + "' (desk, paper)");
}

std::string model_config_to_json(const MstnConfig& config) {
  return model_to_json(config).dump();
}

MstnConfig model_config_from_json_text(const std::string& text) {
  return model_from_json(parse_text(text, "model config"));
}

std::string train_config_to_json(const TrainConfig& config) {
  return train_to_json(config).dump();
}

TrainConfig train_config_from_json_text(const std::string& text) {
  return train_from_json(parse_text(text, "train config"));
}

std::string app_config_to_json(const AppConfig& config) {
  json j;
  j["model"] = model_to_json(config.model);
  j["train"] = train_to_json(config.train);
  return j.dump(2);
}

AppConfig app_config_from_json_text(const std::string& text) {
  json j = parse_text(text, "config");
  check_object(j, "config");
  reject_unknown(j, {"model", "train"}, "config");
  AppConfig c;
  if (j.contains("model")) c.model = model_from_json(j["model"]);
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  c.model.validate();
  c.train.validate();
  return c;
}

AppConfig app_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return app_config_from_json_text(ss.str());
}

}  // namespace mstn

#include "ssdas/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "ssdas/errors.hpp"

namespace ssdas {

void ExperimentConfig::validate() const {
  if (lambda_j < 0.0) throw ConfigError("lambda_j: must be >= 0");
  if (num_permutations < 1) throw ConfigError("num_permutations: must be >= 1");
  if (k < 1) throw ConfigError("k: must be >= 1");
  if (epochs_pre < 0) throw ConfigError("epochs_pre: must be >= 0");
  if (max_epoch < epochs_pre) throw ConfigError("max_epoch: must be >= epochs_pre");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (n_image < 1) throw ConfigError("n_image: must be >= 1");
  if (n_region < 1) throw ConfigError("n_region: must be >= 1");
  if (r < 1) throw ConfigError("r: must be >= 1");
  if (base_lr < 0.0) throw ConfigError("base_lr: must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum: must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (lr_power < 0.0) throw ConfigError("lr_power: must be >= 0");
}

void ExperimentConfig::validate_geometry(int height, int width) const {
  if (height % n_image != 0 || width % n_image != 0)
    throw ConfigError("n_image: image size " + std::to_string(height) + "x" +
                      std::to_string(width) + " is not divisible by it");
  if (height % r != 0 || width % r != 0)
    throw ConfigError("r: image size is not divisible by it");
  if ((height / r) % n_region != 0 || (width / r) % n_region != 0)
    throw ConfigError("n_region: region size is not divisible by it");
}

namespace {

template <typename T>
void fetch(const nlohmann::json& j, const char* key, T* out) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data_dir",   "out_dir",    "k",          "lambda_j",    "num_permutations",
      "n_image",    "n_region",   "r",          "max_epoch",   "epochs_pre",
      "batch_size", "base_lr",    "momentum",   "weight_decay", "lr_power",
      "seed",       "acda_image", "pida_image", "acda_region", "pida_region",
      "dump_masks"};
  return keys;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known_keys().count(key)) throw ConfigError(key + ": unknown config field");
  }
  ExperimentConfig cfg;
  fetch(j, "data_dir", &cfg.data_dir);
  fetch(j, "out_dir", &cfg.out_dir);
  fetch(j, "k", &cfg.k);
  fetch(j, "lambda_j", &cfg.lambda_j);
  fetch(j, "num_permutations", &cfg.num_permutations);
  fetch(j, "n_image", &cfg.n_image);
  fetch(j, "n_region", &cfg.n_region);
  fetch(j, "r", &cfg.r);
  fetch(j, "max_epoch", &cfg.max_epoch);
  fetch(j, "epochs_pre", &cfg.epochs_pre);
  fetch(j, "batch_size", &cfg.batch_size);
  fetch(j, "base_lr", &cfg.base_lr);
  fetch(j, "momentum", &cfg.momentum);
  fetch(j, "weight_decay", &cfg.weight_decay);
  fetch(j, "lr_power", &cfg.lr_power);
  fetch(j, "seed", &cfg.seed);
  fetch(j, "acda_image", &cfg.acda_image);
  fetch(j, "pida_image", &cfg.pida_image);
  fetch(j, "acda_region", &cfg.acda_region);
  fetch(j, "pida_region", &cfg.pida_region);
  fetch(j, "dump_masks", &cfg.dump_masks);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  j["k"] = cfg.k;
  j["lambda_j"] = cfg.lambda_j;
  j["num_permutations"] = cfg.num_permutations;
  j["n_image"] = cfg.n_image;
  j["n_region"] = cfg.n_region;
  j["r"] = cfg.r;
  j["max_epoch"] = cfg.max_epoch;
  j["epochs_pre"] = cfg.epochs_pre;
  j["batch_size"] = cfg.batch_size;
  j["base_lr"] = cfg.base_lr;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["lr_power"] = cfg.lr_power;
  j["seed"] = cfg.seed;
  j["acda_image"] = cfg.acda_image;
  j["pida_image"] = cfg.pida_image;
  j["acda_region"] = cfg.acda_region;
  j["pida_region"] = cfg.pida_region;
  j["dump_masks"] = cfg.dump_masks;
  return j.dump(2) + "\n";
}

}  // namespace ssdas

#pragma once

#include <cstdint>
#include <string>

namespace ssdas {

// Everything a run needs, with the stock defaults. JSON round-trips via
// load_config / config_to_json; validate() reports the first offending field.
struct ExperimentConfig {
  std::string data_dir;
  std::string out_dir;

  int k = 1;                  // labeled target shots
  double lambda_j = 0.1;      // alignment loss weight
  int num_permutations = 100;  // N (image level; region level is clamped to (n_region^2)!)
  int n_image = 4;            // jigsaw grid side, image level
  int n_region = 2;           // jigsaw grid side, region level
  int r = 2;                  // regions per side

  int max_epoch = 10;
  int epochs_pre = 1;
  int batch_size = 8;

  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_power = 0.9;

  std::uint64_t seed = 1;

  bool acda_image = true;
  bool pida_image = true;
  bool acda_region = true;
  bool pida_region = true;

  bool dump_masks = false;

  // Throws ConfigError naming the offending field. Image-geometry checks run
  // against the dataset at training time.
  void validate() const;
  void validate_geometry(int height, int width) const;
};

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace ssdas

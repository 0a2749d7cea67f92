// Experiment runner: data generation, training, evaluation, parameter sweeps,
// gradient checking, and mask-schedule tracing.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssdas/config.hpp"
#include "ssdas/errors.hpp"
#include "ssdas/gradsuite.hpp"
#include "ssdas/metrics.hpp"
#include "ssdas/synthdata.hpp"
#include "ssdas/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssdas;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json metrics_json(const IouResult& iou, const FeatureStats& stats) {
  nlohmann::json j;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < iou.per_class.size(); ++c) {
    if (iou.present[c])
      per_class.push_back(iou.per_class[c]);
    else
      per_class.push_back(nullptr);
  }
  j["per_class_iou"] = per_class;
  j["miou"] = iou.miou;
  j["sigma_w2"] = stats.sigma_w2;
  j["sigma_b2"] = stats.sigma_b2;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_curves_csv(const fs::path& path, const std::vector<EpochRow>& curve) {
  std::ostringstream out;
  out << "epoch,lr,loss_sup,loss_jig_s,loss_jig_t,loss_unlabeled,frozen_jt,miou_target\n";
  for (const EpochRow& r : curve) {
    out << r.epoch << ',' << fmt_double(r.lr) << ',' << fmt_double(r.loss_sup) << ','
        << fmt_double(r.loss_jig_s) << ',' << fmt_double(r.loss_jig_t) << ','
        << fmt_double(r.loss_unlabeled) << ',' << r.frozen_jt << ','
        << fmt_double(r.miou_target) << '\n';
  }
  write_text(path, out.str());
}

struct MaskDumpFiles {
  std::ofstream source;
  std::ofstream target;
};

// Runs one training job and writes the run directory. Returns the result.
TrainResult run_training(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("data_dir: required");
  if (cfg.out_dir.empty()) throw ConfigError("out_dir: required");
  if (!fs::exists(fs::path(cfg.data_dir) / "split.json"))
    throw DataError("no dataset at " + cfg.data_dir);
  Dataset data = load_dataset(cfg.data_dir);
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "resolved-config.json", config_to_json(cfg));

  Trainer trainer(cfg, data);
  TrainHooks hooks;
  MaskDumpFiles dump;
  if (cfg.dump_masks) {
    dump.source.open(fs::path(cfg.out_dir) / "masks_source.csv");
    dump.target.open(fs::path(cfg.out_dir) / "masks_target.csv");
    dump.source << "epoch,sample_id,cds,m_rm\n";
    dump.target << "epoch,sample_id,entropy,m_add\n";
    hooks.on_mask = [&dump](const std::string& kind, const std::string& level, int epoch,
                            int sample_id, double value, int mask) {
      std::ofstream& out = kind == "source" ? dump.source : dump.target;
      out << epoch << ',' << level << ':' << sample_id << ',' << fmt_double(value) << ','
          << mask << '\n';
    };
  }
  TrainResult result = trainer.run(hooks);

  write_curves_csv(fs::path(cfg.out_dir) / "curves.csv", result.curve);
  write_text(fs::path(cfg.out_dir) / "metrics.json",
             metrics_json(result.final_iou, result.final_stats).dump(2) + "\n");
  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.ssdl").string(), trainer.model());
  return result;
}

int cmd_gen_data(const std::string& out, std::uint64_t seed, int k, double shift,
                 int source_count, int unlabeled_count, int val_count, int size, int classes,
                 bool force) {
  const fs::path root(out);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    std::cerr << "gen-data: output directory " << out
              << " is not empty (use --force to overwrite)\n";
    return kExitData;
  }
  fs::create_directories(root);

  DomainSpec source_spec;
  source_spec.height = size;
  source_spec.width = size;
  source_spec.num_classes = classes;
  source_spec.seed = derive_seed(seed, "source_domain");
  DomainSpec target_spec = apply_shift(source_spec, shift);
  target_spec.seed = derive_seed(seed, "target_domain");

  Dataset ds;
  ds.num_classes = classes;
  ds.source = generate_domain(source_spec, source_count);
  const int target_count = unlabeled_count + val_count + k;
  ds.target = generate_domain(target_spec, target_count);
  ds.split = make_split(target_count, k, val_count, derive_seed(seed, "split"));
  write_dataset(out, ds);
  std::cout << "wrote " << source_count << " source and " << target_count
            << " target images under " << out << "\n";
  return 0;
}

ExperimentConfig load_or_default_config(const std::string& config_path) {
  if (config_path.empty()) return ExperimentConfig{};
  return load_config(config_path);
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& out,
             const std::string& export_features_path) {
  if (!fs::exists(fs::path(data_dir) / "split.json")) throw DataError("no dataset at " + data_dir);
  Dataset data = load_dataset(data_dir);
  SegModel model = load_checkpoint(checkpoint);
  if (model.num_classes() != data.num_classes)
    throw DataError("checkpoint classes do not match the dataset");
  EvalResult res = evaluate_model(model, data);
  const std::string doc = metrics_json(res.iou, res.stats).dump(2) + "\n";
  if (out.empty())
    std::cout << doc;
  else
    write_text(out, doc);
  if (!export_features_path.empty()) {
    std::vector<RawImage> val_images;
    std::vector<RawMask> val_masks;
    for (int idx : data.split.validation) {
      val_images.push_back(data.target.images[static_cast<std::size_t>(idx)]);
      val_masks.push_back(data.target.masks[static_cast<std::size_t>(idx)]);
    }
    export_features(model, val_images, val_masks, export_features_path);
  }
  return 0;
}

struct SweepCell {
  std::string param;
  double value = 0.0;
  ExperimentConfig cfg;
  bool regen_split = false;
  double miou = 0.0;
  bool failed = false;
  std::string error;
};

int cmd_sweep(const ExperimentConfig& base, const std::string& out_dir,
              const std::vector<double>& lambda_grid, const std::vector<int>& n_grid,
              const std::vector<int>& k_grid) {
  if (out_dir.empty()) throw ConfigError("out_dir: required");
  fs::create_directories(out_dir);
  std::vector<SweepCell> cells;
  for (double l : lambda_grid) {
    SweepCell c{"lambda_j", l, base, false, 0.0, false, {}};
    c.cfg.lambda_j = l;
    cells.push_back(std::move(c));
  }
  for (int n : n_grid) {
    SweepCell c{"num_permutations", static_cast<double>(n), base, false, 0.0, false, {}};
    c.cfg.num_permutations = n;
    cells.push_back(std::move(c));
  }
  for (int k : k_grid) {
    SweepCell c{"k", static_cast<double>(k), base, true, 0.0, false, {}};
    c.cfg.k = k;
    cells.push_back(std::move(c));
  }
  if (cells.empty()) throw ConfigError("sweep: empty grid");

  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::ostringstream dir;
    dir << out_dir << "/cell_" << i << "_" << cells[i].param << "_" << cells[i].value;
    cells[i].cfg.out_dir = dir.str();
  }

  int threads = 1;
  if (const char* env = std::getenv("SSDAS_THREADS")) threads = std::max(1, std::atoi(env));
  threads = std::min<int>(threads, static_cast<int>(cells.size()));

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      try {
        if (cell.regen_split) {
          // Re-split the existing target pool for this shot count; images are
          // shared, only the index lists move.
          Dataset data = load_dataset(cell.cfg.data_dir);
          data.split = make_split(static_cast<int>(data.target.images.size()), cell.cfg.k,
                                  static_cast<int>(data.split.validation.size()),
                                  derive_seed(cell.cfg.seed, "split"));
          const fs::path cell_data = fs::path(cell.cfg.out_dir) / "data";
          write_dataset(cell_data.string(), data);
          cell.cfg.data_dir = cell_data.string();
        }
        cell.miou = run_training(cell.cfg).final_iou.miou;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      if (cell.failed)
        std::cerr << "cell " << i << " (" << cell.param << "=" << cell.value
                  << ") failed: " << cell.error << "\n";
      else
        std::cout << "cell " << i << " (" << cell.param << "=" << cell.value
                  << "): miou=" << cell.miou << "\n";
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "param,value,miou,status\n";
  for (const SweepCell& cell : cells)
    csv << cell.param << ',' << cell.value << ','
        << (cell.failed ? std::string("") : fmt_double(cell.miou)) << ','
        << (cell.failed ? "failed" : "ok") << '\n';
  write_text(fs::path(out_dir) / "sweep.csv", csv.str());
  std::cout << "sweep summary written to " << out_dir << "/sweep.csv\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed) {
  const auto reports = run_gradient_suite(seed);
  bool ok = true;
  std::printf("%-20s %14s %8s  %s\n", "primitive", "max_rel_err", "coords", "status");
  for (const FdReport& r : reports) {
    const bool pass = r.passed();
    ok = ok && pass;
    std::printf("%-20s %14.3e %8d  %s\n", r.name.c_str(), r.max_rel_err, r.coords_checked,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitNumerical;
}

int cmd_masks_demo(const std::string& values_csv, int epoch, int max_epoch,
                   const std::string& mode) {
  std::vector<double> values;
  std::stringstream ss(values_csv);
  std::string field;
  while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
  if (values.empty()) throw ConfigError("values: empty vector");
  const EpochProgress prog{epoch, max_epoch};
  validate(prog);

  std::vector<double> sorted(values);
  std::stable_sort(sorted.begin(), sorted.end());
  const std::size_t idx = std::min<std::size_t>(
      static_cast<std::size_t>(static_cast<long long>(values.size()) * epoch / max_epoch),
      values.size() - 1);
  std::cout << "input:     ";
  for (double v : values) std::cout << v << ' ';
  std::cout << "\nsorted:    ";
  for (double v : sorted) std::cout << v << ' ';
  std::cout << "\nindex:     floor(" << values.size() << " * " << epoch << " / " << max_epoch
            << ") = " << idx << "\nthreshold: " << sorted[idx] << "\nmask:      ";
  if (mode == "rm") {
    CdsMask cds{values};
    for (auto m : compute_m_rm(cds, prog).values) std::cout << int(m) << ' ';
    std::cout << "  (1 = kept, CDS >= threshold)\n";
  } else {
    for (auto m : compute_m_add(values, prog).values) std::cout << int(m) << ' ';
    std::cout << "  (1 = added, entropy <= threshold)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised domain-adaptive segmentation workbench"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a paired source/target dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  int gen_k = 1, gen_source = 200, gen_unlabeled = 200, gen_val = 50, gen_size = 32,
      gen_classes = 4;
  double gen_shift = 1.0;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--k", gen_k, "labeled target shots");
  gen->add_option("--shift", gen_shift, "domain shift magnitude (0 = identical domains)");
  gen->add_option("--source-count", gen_source, "source images");
  gen->add_option("--unlabeled-count", gen_unlabeled, "unlabeled target images");
  gen->add_option("--val-count", gen_val, "validation target images");
  gen->add_option("--size", gen_size, "image side length");
  gen->add_option("--classes", gen_classes, "class count (2-4)");
  gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");

  // train
  auto* train = app.add_subcommand("train", "train a model from a config");
  std::string train_config, train_data, train_out;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false, dump_masks = false;
  bool no_acda_image = false, no_pida_image = false, no_acda_region = false,
       no_pida_region = false;
  int train_k = 0;
  train->add_option("--config", train_config, "JSON config path");
  train->add_option("--data", train_data, "dataset directory (overrides config)");
  train->add_option("--out", train_out, "run directory (overrides config)");
  train->add_option("--seed", train_seed, "seed (overrides config)")
      ->each([&](const std::string&) { train_seed_set = true; });
  train->add_option("--k", train_k, "shots (overrides config)");
  train->add_flag("--no-acda-image", no_acda_image, "disable image-level cross-domain weighting");
  train->add_flag("--no-pida-image", no_pida_image, "disable image-level progressive masks");
  train->add_flag("--no-acda-region", no_acda_region, "disable region-level cross-domain weighting");
  train->add_flag("--no-pida-region", no_pida_region, "disable region-level progressive masks");
  train->add_flag("--dump-masks", dump_masks, "write per-epoch mask CSVs");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's validation split");
  std::string eval_ckpt, eval_data, eval_out, eval_features;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--out", eval_out, "metrics JSON path (stdout when omitted)");
  eval->add_option("--export-features", eval_features, "write per-pixel feature CSV here");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid of training runs");
  std::string sweep_config, sweep_out, sweep_preset;
  std::string sweep_lambda, sweep_n, sweep_k;
  sweep->add_option("--config", sweep_config, "base JSON config")->required();
  sweep->add_option("--out", sweep_out, "sweep output directory")->required();
  sweep->add_option("--lambda-grid", sweep_lambda, "comma-separated lambda_j values");
  sweep->add_option("--n-grid", sweep_n, "comma-separated permutation-class counts");
  sweep->add_option("--k-grid", sweep_k, "comma-separated shot counts");
  sweep->add_option("--preset", sweep_preset, "'paper' (lambda+N grids) or 'kshot'");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
  std::uint64_t gc_seed = 1234;
  gc->add_option("--seed", gc_seed, "suite seed");

  // masks-demo
  auto* md = app.add_subcommand("masks-demo", "trace the removal/addition mask schedule");
  std::string md_values, md_mode = "rm";
  int md_epoch = 0, md_max_epoch = 1;
  md->add_option("--values", md_values, "comma-separated CDS or entropy vector")->required();
  md->add_option("--epoch", md_epoch, "current epoch (0-based)");
  md->add_option("--max-epoch", md_max_epoch, "total epochs");
  md->add_option("--mode", md_mode, "'rm' (CDS removal) or 'add' (entropy addition)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen)
      return cmd_gen_data(gen_out, gen_seed, gen_k, gen_shift, gen_source, gen_unlabeled,
                          gen_val, gen_size, gen_classes, gen_force);
    if (*train) {
      ExperimentConfig cfg = load_or_default_config(train_config);
      if (!train_data.empty()) cfg.data_dir = train_data;
      if (!train_out.empty()) cfg.out_dir = train_out;
      if (train_seed_set) cfg.seed = train_seed;
      if (train_k > 0) cfg.k = train_k;
      if (no_acda_image) cfg.acda_image = false;
      if (no_pida_image) cfg.pida_image = false;
      if (no_acda_region) cfg.acda_region = false;
      if (no_pida_region) cfg.pida_region = false;
      if (dump_masks) cfg.dump_masks = true;
      cfg.validate();
      const TrainResult result = run_training(cfg);
      std::cout << "final miou: " << result.final_iou.miou << "\n";
      return 0;
    }
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_features);
    if (*sweep) {
      ExperimentConfig base = load_config(sweep_config);
      std::vector<double> lambda_grid;
      std::vector<int> n_grid, k_grid;
      auto parse_doubles = [](const std::string& s, std::vector<double>* out) {
        std::stringstream ss(s);
        std::string f;
        while (std::getline(ss, f, ',')) out->push_back(std::stod(f));
      };
      auto parse_ints = [](const std::string& s, std::vector<int>* out) {
        std::stringstream ss(s);
        std::string f;
        while (std::getline(ss, f, ',')) out->push_back(std::stoi(f));
      };
      if (!sweep_lambda.empty()) parse_doubles(sweep_lambda, &lambda_grid);
      if (!sweep_n.empty()) parse_ints(sweep_n, &n_grid);
      if (!sweep_k.empty()) parse_ints(sweep_k, &k_grid);
      if (sweep_preset == "paper") {
        lambda_grid = {0.025, 0.05, 0.1, 0.2, 0.4};
        n_grid = {30, 50, 100, 300, 500};
      } else if (sweep_preset == "kshot") {
        k_grid = {1, 3, 5, 10, 20};
      } else if (!sweep_preset.empty()) {
        throw ConfigError("preset: unknown preset '" + sweep_preset + "'");
      }
      return cmd_sweep(base, sweep_out, lambda_grid, n_grid, k_grid);
    }
    if (*gc) return cmd_grad_check(gc_seed);
    if (*md) return cmd_masks_demo(md_values, md_epoch, md_max_epoch, md_mode);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}

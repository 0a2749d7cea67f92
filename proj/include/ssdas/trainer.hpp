#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssdas/alignment.hpp"
#include "ssdas/config.hpp"
#include "ssdas/metrics.hpp"
#include "ssdas/nets.hpp"
#include "ssdas/optimizer.hpp"
#include "ssdas/synthdata.hpp"

namespace ssdas {

// Supervised objective over one batch pair: mean pixel cross-entropy on the
// source batch plus the same on the labeled target batch.
Tensor s_plus_t_loss(Tape& tape, const SegModel& model, std::span<const Tensor> src_images,
                     std::span<const std::vector<std::uint8_t>> src_masks,
                     std::span<const Tensor> tgt_images,
                     std::span<const std::vector<std::uint8_t>> tgt_masks);

// Non-overlapping r x r tiling of a [C,H,W] map, row-major region order.
std::vector<Tensor> crop_regions(Tape& tape, const Tensor& map, int r);

// Freeze rule: the target classifier rests while its previous-epoch mean
// jigsaw loss is strictly below the source classifier's.
bool should_freeze_jt(double prev_mean_jt, double prev_mean_js);

// Endless shuffled passes over [0, count); each exhausted pass reshuffles.
class OrderStream {
 public:
  OrderStream(int count, std::uint64_t seed);
  int next();

 private:
  std::vector<int> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

struct EpochRow {
  int epoch = 0;  // sequential over pretraining + main epochs
  bool pretrain = false;
  double lr = 0.0;  // learning rate at the epoch's first iteration
  double loss_sup = 0.0;
  double loss_jig_s = 0.0;      // mean unweighted source jigsaw loss (both levels)
  double loss_jig_t = 0.0;      // mean unweighted labeled-target jigsaw loss
  double loss_unlabeled = 0.0;  // mean unweighted unlabeled-target jigsaw loss
  int frozen_jt = 0;
  double miou_target = 0.0;  // validation mIoU after the epoch
};

struct TrainResult {
  std::vector<EpochRow> curve;
  IouResult final_iou;
  FeatureStats final_stats;
};

struct TrainHooks {
  // phase is "supervised", "image" or "region"; fired in execution order.
  std::function<void(int epoch, const std::string& phase)> on_phase;
  // One row per masked sample: kind "source" (value = CDS, mask = M_rm) or
  // "target" (value = entropy, mask = M_add); level "image" or "region".
  // Region sample ids are image_index * r^2 + region_index.
  std::function<void(const std::string& kind, const std::string& level, int epoch, int sample_id,
                     double value, int mask)>
      on_mask;
};

// The full bidirectional curriculum: per main epoch, supervised learning,
// image-level alignment, then region-level alignment, each over one shuffled
// pass. Ablation flags reduce the alignment losses accordingly; with all four
// flags off the run degenerates to pure supervised training.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, const Dataset& data);

  TrainResult run(const TrainHooks& hooks = {});

  const SegModel& model() const { return *model_; }
  const JigsawClassifier& clf_s_image() const { return *clf_s_img_; }
  const JigsawClassifier& clf_t_image() const { return *clf_t_img_; }
  const PermutationSet& image_set() const { return set_img_; }
  std::int64_t iterations_done() const { return iter_; }
  std::int64_t max_iterations() const { return max_iter_; }

 private:
  struct Level;

  void pretrain_epoch(int epoch_index);
  double supervised_step();
  void alignment_step(Level& level, const EpochProgress& prog, int epoch_label,
                      const TrainHooks& hooks);
  double eval_validation_miou() const;
  double current_lr() const;
  void check_finite(const Tensor& loss) const;

  ExperimentConfig cfg_;
  int height_ = 0, width_ = 0, num_classes_ = 0;

  // Dataset converted once: tensors for images, flat masks for labels.
  std::vector<Tensor> src_images_;
  std::vector<std::vector<std::uint8_t>> src_masks_;
  std::vector<Tensor> tgt_images_;
  std::vector<std::vector<std::uint8_t>> tgt_masks_;
  std::vector<int> kshot_, unlabeled_, validation_;
  std::vector<RawImage> val_raw_images_;
  std::vector<RawMask> val_raw_masks_;

  std::unique_ptr<SegModel> model_;
  std::unique_ptr<JigsawClassifier> clf_s_img_, clf_t_img_, clf_s_reg_, clf_t_reg_;
  PermutationSet set_img_, set_reg_;
  std::unique_ptr<SgdOptimizer> opt_g_, opt_s_img_, opt_t_img_, opt_s_reg_, opt_t_reg_;

  std::unique_ptr<OrderStream> sup_src_stream_, img_src_stream_, img_unl_stream_,
      reg_src_stream_, reg_unl_stream_;
  Rng kshot_sup_rng_, kshot_img_rng_, kshot_reg_rng_, jig_img_rng_, jig_reg_rng_,
      pre_jig_rng_;

  std::int64_t iter_ = 0, max_iter_ = 0;
  int steps_sup_ = 0, steps_align_ = 0;

  struct LossMeter {
    double sum = 0.0;
    std::int64_t count = 0;
    void add(std::span<const double> values) {
      for (double v : values) sum += v;
      count += static_cast<std::int64_t>(values.size());
    }
    double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
  };
  LossMeter meter_sup_, meter_js_, meter_jt_, meter_unl_;
  double prev_mean_js_ = 0.0, prev_mean_jt_ = 0.0;
  bool have_prev_means_ = false;
};

// Validation-set metrics of a trained model over a dataset.
struct EvalResult {
  IouResult iou;
  FeatureStats stats;
};
EvalResult evaluate_model(const SegModel& model, const Dataset& data);

}  // namespace ssdas

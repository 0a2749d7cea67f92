#include "ssdas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssdas/errors.hpp"

namespace ssdas {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t capped_factorial(int m, std::int64_t cap) {
  std::int64_t f = 1;
  for (int i = 2; i <= m; ++i) {
    f *= i;
    if (f >= cap) return cap;
  }
  return f;
}

}  // namespace

Tensor s_plus_t_loss(Tape& tape, const SegModel& model, std::span<const Tensor> src_images,
                     std::span<const std::vector<std::uint8_t>> src_masks,
                     std::span<const Tensor> tgt_images,
                     std::span<const std::vector<std::uint8_t>> tgt_masks) {
  if (src_images.empty() || tgt_images.empty())
    throw std::invalid_argument("s_plus_t_loss: empty batch");
  if (src_images.size() != src_masks.size() || tgt_images.size() != tgt_masks.size())
    throw std::invalid_argument("s_plus_t_loss: image/mask count mismatch");
  std::vector<Tensor> src_losses, tgt_losses;
  for (std::size_t i = 0; i < src_images.size(); ++i) {
    Tensor probs = model.forward(tape, src_images[i]);
    src_losses.push_back(tape.cross_entropy_map(probs, src_masks[i]));
  }
  for (std::size_t i = 0; i < tgt_images.size(); ++i) {
    Tensor probs = model.forward(tape, tgt_images[i]);
    tgt_losses.push_back(tape.cross_entropy_map(probs, tgt_masks[i]));
  }
  return tape.add(tape.mean(src_losses), tape.mean(tgt_losses));
}

std::vector<Tensor> crop_regions(Tape& tape, const Tensor& map, int r) {
  if (map.shape().size() != 3) throw std::invalid_argument("crop_regions: expected [C,H,W]");
  const int h = map.shape()[1], w = map.shape()[2];
  if (r < 1 || h % r != 0 || w % r != 0)
    throw std::invalid_argument("crop_regions: spatial size not divisible by r");
  if (r == 1) return {map};
  const int rh = h / r, rw = w / r;
  std::vector<Tensor> regions;
  regions.reserve(static_cast<std::size_t>(r) * r);
  for (int ry = 0; ry < r; ++ry)
    for (int rx = 0; rx < r; ++rx) regions.push_back(tape.crop(map, ry * rh, rx * rw, rh, rw));
  return regions;
}

bool should_freeze_jt(double prev_mean_jt, double prev_mean_js) {
  return prev_mean_jt < prev_mean_js;
}

OrderStream::OrderStream(int count, std::uint64_t seed)
    : order_(static_cast<std::size_t>(count)), rng_(seed) {
  if (count < 1) throw std::invalid_argument("OrderStream: empty index set");
  for (int i = 0; i < count; ++i) order_[static_cast<std::size_t>(i)] = i;
  rng_.shuffle(order_);
}

int OrderStream::next() {
  if (pos_ == order_.size()) {
    rng_.shuffle(order_);
    pos_ = 0;
  }
  return order_[pos_++];
}

struct Trainer::Level {
  std::string name;
  bool acda = false, pida = false;
  JigsawClassifier* clf_s = nullptr;
  JigsawClassifier* clf_t = nullptr;
  SgdOptimizer* opt_s = nullptr;
  SgdOptimizer* opt_t = nullptr;
  const PermutationSet* set = nullptr;
  OrderStream* src_stream = nullptr;
  OrderStream* unl_stream = nullptr;
  Rng* kshot_rng = nullptr;
  Rng* jig_rng = nullptr;
  int regions_per_side = 1;
};

Trainer::Trainer(const ExperimentConfig& cfg, const Dataset& data)
    : cfg_(cfg),
      kshot_sup_rng_(derive_seed(cfg.seed, "kshot_sup")),
      kshot_img_rng_(derive_seed(cfg.seed, "kshot_img")),
      kshot_reg_rng_(derive_seed(cfg.seed, "kshot_reg")),
      jig_img_rng_(derive_seed(cfg.seed, "jig_img")),
      jig_reg_rng_(derive_seed(cfg.seed, "jig_reg")),
      pre_jig_rng_(derive_seed(cfg.seed, "jig_pre")) {
  cfg_.validate();
  if (data.source.images.empty()) throw DataError("dataset has no source images");
  if (data.target.images.empty()) throw DataError("dataset has no target images");
  height_ = data.source.images[0].h;
  width_ = data.source.images[0].w;
  num_classes_ = data.num_classes;
  cfg_.validate_geometry(height_, width_);
  if (static_cast<int>(data.split.k_shot.size()) != cfg_.k)
    throw ConfigError("k: config wants " + std::to_string(cfg_.k) + " shots but the split has " +
                      std::to_string(data.split.k_shot.size()));

  for (const auto& img : data.source.images) src_images_.push_back(image_to_tensor(img));
  for (const auto& m : data.source.masks) src_masks_.push_back(m.cls);
  for (const auto& img : data.target.images) tgt_images_.push_back(image_to_tensor(img));
  for (const auto& m : data.target.masks) tgt_masks_.push_back(m.cls);
  kshot_ = data.split.k_shot;
  unlabeled_ = data.split.unlabeled;
  validation_ = data.split.validation;
  for (int idx : validation_) {
    val_raw_images_.push_back(data.target.images[static_cast<std::size_t>(idx)]);
    val_raw_masks_.push_back(data.target.masks[static_cast<std::size_t>(idx)]);
  }

  const bool align_img = cfg_.acda_image || cfg_.pida_image;
  const bool align_reg = cfg_.acda_region || cfg_.pida_region;
  if ((align_img || align_reg) && unlabeled_.empty())
    throw DataError("alignment requires a non-empty unlabeled pool");

  model_ = std::make_unique<SegModel>(num_classes_, derive_seed(cfg_.seed, "g_init"));
  set_img_ = build_permutation_set(cfg_.n_image, cfg_.num_permutations,
                                   derive_seed(cfg_.seed, "perm_image"));
  const int n_reg_cells = cfg_.n_region * cfg_.n_region;
  const int reg_perms = static_cast<int>(std::min<std::int64_t>(
      cfg_.num_permutations, capped_factorial(n_reg_cells, 1'000'000'000)));
  set_reg_ =
      build_permutation_set(cfg_.n_region, reg_perms, derive_seed(cfg_.seed, "perm_region"));

  clf_s_img_ = std::make_unique<JigsawClassifier>(num_classes_, height_, width_, cfg_.n_image,
                                                  set_img_.size(),
                                                  derive_seed(cfg_.seed, "js_img"));
  clf_t_img_ = std::make_unique<JigsawClassifier>(
      clf_s_img_->clone_architecture(derive_seed(cfg_.seed, "jt_img")));
  clf_s_reg_ = std::make_unique<JigsawClassifier>(num_classes_, height_ / cfg_.r,
                                                  width_ / cfg_.r, cfg_.n_region,
                                                  set_reg_.size(),
                                                  derive_seed(cfg_.seed, "js_reg"));
  clf_t_reg_ = std::make_unique<JigsawClassifier>(
      clf_s_reg_->clone_architecture(derive_seed(cfg_.seed, "jt_reg")));

  const SgdOptions opts{cfg_.momentum, cfg_.weight_decay};
  opt_g_ = std::make_unique<SgdOptimizer>(model_->parameters(), opts);
  opt_s_img_ = std::make_unique<SgdOptimizer>(clf_s_img_->parameters(), opts);
  opt_t_img_ = std::make_unique<SgdOptimizer>(clf_t_img_->parameters(), opts);
  opt_s_reg_ = std::make_unique<SgdOptimizer>(clf_s_reg_->parameters(), opts);
  opt_t_reg_ = std::make_unique<SgdOptimizer>(clf_t_reg_->parameters(), opts);

  sup_src_stream_ = std::make_unique<OrderStream>(static_cast<int>(src_images_.size()),
                                                  derive_seed(cfg_.seed, "order_sup_src"));
  img_src_stream_ = std::make_unique<OrderStream>(static_cast<int>(src_images_.size()),
                                                  derive_seed(cfg_.seed, "order_img_src"));
  reg_src_stream_ = std::make_unique<OrderStream>(static_cast<int>(src_images_.size()),
                                                  derive_seed(cfg_.seed, "order_reg_src"));
  if (!unlabeled_.empty()) {
    img_unl_stream_ = std::make_unique<OrderStream>(static_cast<int>(unlabeled_.size()),
                                                    derive_seed(cfg_.seed, "order_img_unl"));
    reg_unl_stream_ = std::make_unique<OrderStream>(static_cast<int>(unlabeled_.size()),
                                                    derive_seed(cfg_.seed, "order_reg_unl"));
  }

  steps_sup_ = static_cast<int>(ceil_div(static_cast<std::int64_t>(src_images_.size()),
                                         cfg_.batch_size));
  steps_align_ = unlabeled_.empty()
                     ? 0
                     : static_cast<int>(ceil_div(static_cast<std::int64_t>(unlabeled_.size()),
                                                 cfg_.batch_size));
  std::int64_t per_epoch = steps_sup_;
  if (align_img) per_epoch += steps_align_;
  if (align_reg) per_epoch += steps_align_;
  max_iter_ = static_cast<std::int64_t>(cfg_.epochs_pre) * steps_sup_ +
              static_cast<std::int64_t>(cfg_.max_epoch) * per_epoch;
}

double Trainer::current_lr() const {
  return poly_lr(cfg_.base_lr, iter_, max_iter_, cfg_.lr_power);
}

void Trainer::check_finite(const Tensor& loss) const {
  if (!all_finite(loss)) throw NumericalError("non-finite loss encountered during training");
}

double Trainer::supervised_step() {
  opt_g_->zero_grad();
  Tape tape;
  const int b = cfg_.batch_size;
  std::vector<Tensor> src_imgs, tgt_imgs;
  std::vector<std::vector<std::uint8_t>> src_msk, tgt_msk;
  for (int i = 0; i < b; ++i) {
    const int s = sup_src_stream_->next();
    src_imgs.push_back(src_images_[static_cast<std::size_t>(s)]);
    src_msk.push_back(src_masks_[static_cast<std::size_t>(s)]);
    const int t = kshot_[static_cast<std::size_t>(kshot_sup_rng_.uniform_int(
        static_cast<int>(kshot_.size())))];
    tgt_imgs.push_back(tgt_images_[static_cast<std::size_t>(t)]);
    tgt_msk.push_back(tgt_masks_[static_cast<std::size_t>(t)]);
  }
  Tensor loss = s_plus_t_loss(tape, *model_, src_imgs, src_msk, tgt_imgs, tgt_msk);
  check_finite(loss);
  const double value = loss.scalar();
  tape.backward(loss);
  opt_g_->step(current_lr());
  ++iter_;
  return value;
}

void Trainer::alignment_step(Level& level, const EpochProgress& prog, int epoch_label,
                             const TrainHooks& hooks) {
  opt_g_->zero_grad();
  level.opt_s->zero_grad();
  level.opt_t->zero_grad();
  Tape tape;
  const int b = cfg_.batch_size;
  const int rr = level.regions_per_side * level.regions_per_side;

  std::vector<Tensor> maps_s, maps_t, maps_tu;
  std::vector<int> ids_s, ids_tu;
  for (int i = 0; i < b; ++i) {
    const int s = level.src_stream->next();
    Tensor p = model_->forward(tape, src_images_[static_cast<std::size_t>(s)]);
    auto regions = crop_regions(tape, p, level.regions_per_side);
    for (int ri = 0; ri < static_cast<int>(regions.size()); ++ri) {
      maps_s.push_back(regions[static_cast<std::size_t>(ri)]);
      ids_s.push_back(s * rr + ri);
    }
  }
  for (int i = 0; i < b; ++i) {
    const int t = kshot_[static_cast<std::size_t>(level.kshot_rng->uniform_int(
        static_cast<int>(kshot_.size())))];
    Tensor p = model_->forward(tape, tgt_images_[static_cast<std::size_t>(t)]);
    for (Tensor& region : crop_regions(tape, p, level.regions_per_side)) maps_t.push_back(region);
  }
  for (int i = 0; i < b; ++i) {
    const int u = unlabeled_[static_cast<std::size_t>(level.unl_stream->next())];
    Tensor p = model_->forward(tape, tgt_images_[static_cast<std::size_t>(u)]);
    auto regions = crop_regions(tape, p, level.regions_per_side);
    for (int ri = 0; ri < static_cast<int>(regions.size()); ++ri) {
      maps_tu.push_back(regions[static_cast<std::size_t>(ri)]);
      ids_tu.push_back(u * rr + ri);
    }
  }

  const auto labels_s =
      draw_puzzle_labels(static_cast<int>(maps_s.size()), *level.set, *level.jig_rng);
  const auto labels_t =
      draw_puzzle_labels(static_cast<int>(maps_t.size()), *level.set, *level.jig_rng);
  const auto labels_tu =
      draw_puzzle_labels(static_cast<int>(maps_tu.size()), *level.set, *level.jig_rng);

  // Masks come from the current networks before this step's update, on the
  // same puzzles the losses use.
  std::vector<double> cds_weights(maps_s.size(), 1.0);
  CdsMask cds_real;
  if (level.acda || level.pida)
    cds_real = cds_map(maps_s, *level.clf_s, *level.clf_t, *level.set, labels_s);
  if (level.acda) cds_weights = cds_real.values;
  BinaryMask m_rm;
  if (level.pida) {
    m_rm = compute_m_rm(cds_real, prog);
  } else {
    m_rm.values.assign(maps_s.size(), 1);
  }

  Tensor total =
      labeled_flow_loss(tape, maps_s, maps_t, *level.clf_s, *level.clf_t, *level.set, labels_s,
                        labels_t, cds_weights, m_rm, cfg_.lambda_j);

  std::vector<double> entropies;
  BinaryMask m_add;
  if (level.pida) {
    entropies = jig_entropy(maps_tu, *level.clf_t, *level.set, labels_tu);
    m_add = compute_m_add(entropies, prog);
    UnlabeledFlowLoss un =
        unlabeled_flow_loss(tape, maps_tu, *level.clf_s, *level.set, labels_tu, m_add,
                            cfg_.lambda_j);
    total = tape.add(tape.add(total, un.term_a), un.term_b);
  } else {
    total = tape.add(
        total, acda_unlabeled_loss(tape, maps_tu, *level.clf_s, *level.set, labels_tu,
                                   cfg_.lambda_j));
  }

  check_finite(total);
  tape.backward(total);
  const double lr = current_lr();
  opt_g_->step(lr);
  level.opt_s->step(lr);
  if (!level.clf_t->frozen()) level.opt_t->step(lr);
  ++iter_;

  meter_js_.add(jig_loss_values(maps_s, *level.clf_s, *level.set, labels_s));
  meter_jt_.add(jig_loss_values(maps_t, *level.clf_t, *level.set, labels_t));
  meter_unl_.add(jig_loss_values(maps_tu, *level.clf_s, *level.set, labels_tu));

  if (hooks.on_mask) {
    if (level.acda || level.pida)
      for (std::size_t i = 0; i < maps_s.size(); ++i)
        hooks.on_mask("source", level.name, epoch_label, ids_s[i], cds_real.values[i],
                      m_rm.values[i]);
    if (level.pida)
      for (std::size_t i = 0; i < maps_tu.size(); ++i)
        hooks.on_mask("target", level.name, epoch_label, ids_tu[i], entropies[i],
                      m_add.values[i]);
  }
}

void Trainer::pretrain_epoch(int) {
  const int b = cfg_.batch_size;
  for (int step = 0; step < steps_sup_; ++step) {
    opt_g_->zero_grad();
    opt_s_img_->zero_grad();
    opt_t_img_->zero_grad();
    opt_s_reg_->zero_grad();
    opt_t_reg_->zero_grad();
    Tape tape;

    std::vector<Tensor> src_imgs, tgt_imgs, ps_det, pt_det;
    std::vector<Tensor> sup_losses;
    for (int i = 0; i < b; ++i) {
      const int s = sup_src_stream_->next();
      Tensor probs = model_->forward(tape, src_images_[static_cast<std::size_t>(s)]);
      sup_losses.push_back(tape.cross_entropy_map(probs, src_masks_[static_cast<std::size_t>(s)]));
      ps_det.push_back(detached(probs));
    }
    Tensor sup_src = tape.mean(sup_losses);
    sup_losses.clear();
    for (int i = 0; i < b; ++i) {
      const int t = kshot_[static_cast<std::size_t>(kshot_sup_rng_.uniform_int(
          static_cast<int>(kshot_.size())))];
      Tensor probs = model_->forward(tape, tgt_images_[static_cast<std::size_t>(t)]);
      sup_losses.push_back(tape.cross_entropy_map(probs, tgt_masks_[static_cast<std::size_t>(t)]));
      pt_det.push_back(detached(probs));
    }
    Tensor total = tape.add(sup_src, tape.mean(sup_losses));
    const double sup_value = total.scalar();
    meter_sup_.add(std::span<const double>(&sup_value, 1));

    // Classifier pretraining on detached maps: the classifiers learn from the
    // supervised model's predictions without feeding gradients back into it.
    std::vector<Tensor> reg_s, reg_t;
    for (const Tensor& p : ps_det)
      for (Tensor& region : crop_regions(tape, p, cfg_.r)) reg_s.push_back(region);
    for (const Tensor& p : pt_det)
      for (Tensor& region : crop_regions(tape, p, cfg_.r)) reg_t.push_back(region);

    const auto lab_s = draw_puzzle_labels(static_cast<int>(ps_det.size()), set_img_, pre_jig_rng_);
    const auto lab_t = draw_puzzle_labels(static_cast<int>(pt_det.size()), set_img_, pre_jig_rng_);
    const auto lab_rs = draw_puzzle_labels(static_cast<int>(reg_s.size()), set_reg_, pre_jig_rng_);
    const auto lab_rt = draw_puzzle_labels(static_cast<int>(reg_t.size()), set_reg_, pre_jig_rng_);

    auto js_losses = jig_losses(tape, ps_det, *clf_s_img_, set_img_, lab_s);
    auto jt_losses = jig_losses(tape, pt_det, *clf_t_img_, set_img_, lab_t);
    auto js_reg_losses = jig_losses(tape, reg_s, *clf_s_reg_, set_reg_, lab_rs);
    auto jt_reg_losses = jig_losses(tape, reg_t, *clf_t_reg_, set_reg_, lab_rt);
    total = tape.add(total, tape.mean(js_losses));
    total = tape.add(total, tape.mean(jt_losses));
    total = tape.add(total, tape.mean(js_reg_losses));
    total = tape.add(total, tape.mean(jt_reg_losses));

    meter_js_.add(jig_loss_values(ps_det, *clf_s_img_, set_img_, lab_s));
    meter_js_.add(jig_loss_values(reg_s, *clf_s_reg_, set_reg_, lab_rs));
    meter_jt_.add(jig_loss_values(pt_det, *clf_t_img_, set_img_, lab_t));
    meter_jt_.add(jig_loss_values(reg_t, *clf_t_reg_, set_reg_, lab_rt));

    check_finite(total);
    tape.backward(total);
    const double lr = current_lr();
    opt_g_->step(lr);
    opt_s_img_->step(lr);
    opt_t_img_->step(lr);
    opt_s_reg_->step(lr);
    opt_t_reg_->step(lr);
    ++iter_;
  }
}

double Trainer::eval_validation_miou() const {
  ConfusionMatrix cm(num_classes_);
  for (int idx : validation_) {
    Tape tape;
    Tape::NoGrad guard(tape);
    Tensor probs = model_->forward(tape, tgt_images_[static_cast<std::size_t>(idx)]);
    cm.add(argmax_map(probs), tgt_masks_[static_cast<std::size_t>(idx)]);
  }
  return miou_from_confusion(cm).miou;
}

TrainResult Trainer::run(const TrainHooks& hooks) {
  TrainResult result;

  Level image_level{"image",
                    cfg_.acda_image,
                    cfg_.pida_image,
                    clf_s_img_.get(),
                    clf_t_img_.get(),
                    opt_s_img_.get(),
                    opt_t_img_.get(),
                    &set_img_,
                    img_src_stream_.get(),
                    img_unl_stream_.get(),
                    &kshot_img_rng_,
                    &jig_img_rng_,
                    1};
  Level region_level{"region",
                     cfg_.acda_region,
                     cfg_.pida_region,
                     clf_s_reg_.get(),
                     clf_t_reg_.get(),
                     opt_s_reg_.get(),
                     opt_t_reg_.get(),
                     &set_reg_,
                     reg_src_stream_.get(),
                     reg_unl_stream_.get(),
                     &kshot_reg_rng_,
                     &jig_reg_rng_,
                     cfg_.r};

  for (int pe = 0; pe < cfg_.epochs_pre; ++pe) {
    meter_sup_ = {};
    meter_js_ = {};
    meter_jt_ = {};
    meter_unl_ = {};
    const double lr0 = max_iter_ > 0 ? current_lr() : 0.0;
    if (hooks.on_phase) hooks.on_phase(pe, "pretrain");
    pretrain_epoch(pe);
    EpochRow row;
    row.epoch = pe;
    row.pretrain = true;
    row.lr = lr0;
    row.loss_sup = meter_sup_.mean();
    row.loss_jig_s = meter_js_.mean();
    row.loss_jig_t = meter_jt_.mean();
    row.loss_unlabeled = 0.0;
    row.frozen_jt = 0;
    row.miou_target = eval_validation_miou();
    result.curve.push_back(row);
    if (meter_js_.count > 0 && meter_jt_.count > 0) {
      prev_mean_js_ = meter_js_.mean();
      prev_mean_jt_ = meter_jt_.mean();
      have_prev_means_ = true;
    }
  }

  const bool align_img = cfg_.acda_image || cfg_.pida_image;
  const bool align_reg = cfg_.acda_region || cfg_.pida_region;

  for (int e = 0; e < cfg_.max_epoch; ++e) {
    const int label = cfg_.epochs_pre + e;
    const bool frozen = have_prev_means_ && should_freeze_jt(prev_mean_jt_, prev_mean_js_);
    clf_t_img_->set_frozen(frozen);
    clf_t_reg_->set_frozen(frozen);
    meter_sup_ = {};
    meter_js_ = {};
    meter_jt_ = {};
    meter_unl_ = {};
    const EpochProgress prog{e, cfg_.max_epoch};
    const double lr0 = max_iter_ > 0 ? current_lr() : 0.0;

    if (hooks.on_phase) hooks.on_phase(label, "supervised");
    for (int s = 0; s < steps_sup_; ++s) {
      const double v = supervised_step();
      meter_sup_.add(std::span<const double>(&v, 1));
    }
    if (align_img) {
      if (hooks.on_phase) hooks.on_phase(label, "image");
      for (int s = 0; s < steps_align_; ++s) alignment_step(image_level, prog, label, hooks);
    }
    if (align_reg) {
      if (hooks.on_phase) hooks.on_phase(label, "region");
      for (int s = 0; s < steps_align_; ++s) alignment_step(region_level, prog, label, hooks);
    }

    EpochRow row;
    row.epoch = label;
    row.pretrain = false;
    row.lr = lr0;
    row.loss_sup = meter_sup_.mean();
    row.loss_jig_s = meter_js_.mean();
    row.loss_jig_t = meter_jt_.mean();
    row.loss_unlabeled = meter_unl_.mean();
    row.frozen_jt = frozen ? 1 : 0;
    row.miou_target = eval_validation_miou();
    result.curve.push_back(row);

    if (meter_js_.count > 0 && meter_jt_.count > 0) {
      prev_mean_js_ = meter_js_.mean();
      prev_mean_jt_ = meter_jt_.mean();
      have_prev_means_ = true;
    }
  }

  ConfusionMatrix cm(num_classes_);
  for (int idx : validation_) {
    Tape tape;
    Tape::NoGrad guard(tape);
    Tensor probs = model_->forward(tape, tgt_images_[static_cast<std::size_t>(idx)]);
    cm.add(argmax_map(probs), tgt_masks_[static_cast<std::size_t>(idx)]);
  }
  result.final_iou = miou_from_confusion(cm);
  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  collect_features(*model_, val_raw_images_, val_raw_masks_, &features, &labels);
  result.final_stats = feature_stats(features, model_->feature_width(), labels);
  return result;
}

EvalResult evaluate_model(const SegModel& model, const Dataset& data) {
  ConfusionMatrix cm(data.num_classes);
  std::vector<RawImage> val_images;
  std::vector<RawMask> val_masks;
  for (int idx : data.split.validation) {
    val_images.push_back(data.target.images[static_cast<std::size_t>(idx)]);
    val_masks.push_back(data.target.masks[static_cast<std::size_t>(idx)]);
    Tape tape;
    Tape::NoGrad guard(tape);
    Tensor probs = model.forward(tape, image_to_tensor(val_images.back()));
    cm.add(argmax_map(probs), std::span<const std::uint8_t>(val_masks.back().cls));
  }
  EvalResult res;
  res.iou = miou_from_confusion(cm);
  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  collect_features(model, val_images, val_masks, &features, &labels);
  res.stats = feature_stats(features, model.feature_width(), labels);
  return res;
}

}  // namespace ssdas

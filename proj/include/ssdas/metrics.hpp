#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssdas/nets.hpp"
#include "ssdas/netpbm.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

// counts[gt * C + pred]
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int gt, int pred) const;
  std::uint64_t total() const;
  std::uint64_t gt_count(int cls) const;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouResult {
  std::vector<double> per_class;  // valid only where present[c]
  std::vector<bool> present;      // false when the class union is empty
  double miou = 0.0;              // mean over present classes
};

IouResult miou_from_confusion(const ConfusionMatrix& cm);
IouResult miou(std::span<const std::vector<std::uint8_t>> preds,
               std::span<const std::vector<std::uint8_t>> gts, int num_classes);

struct FeatureStats {
  double sigma_w2 = 0.0;  // mean within-class variance
  double sigma_b2 = 0.0;  // mean pairwise squared distance between class centers
};

// features: row-major [count, dim]; labels: [count].
FeatureStats feature_stats(std::span<const double> features, int dim,
                           std::span<const std::uint8_t> labels);

// Headerless CSV: one row per pixel, feature components then the label.
void write_feature_csv(const std::string& path, std::span<const double> features, int dim,
                       std::span<const std::uint8_t> labels);
// Returns (features, labels); dim inferred from the first row.
std::pair<std::vector<double>, std::vector<std::uint8_t>> read_feature_csv(
    const std::string& path, int* dim);

// Penultimate-layer per-pixel features of the model over a set of images.
void collect_features(const SegModel& model, std::span<const RawImage> images,
                      std::span<const RawMask> masks, std::vector<double>* features,
                      std::vector<std::uint8_t>* labels);

void export_features(const SegModel& model, std::span<const RawImage> images,
                     std::span<const RawMask> masks, const std::string& path);

// Per-pixel argmax over the class axis of a [C,H,W] probability map.
std::vector<std::uint8_t> argmax_map(const Tensor& probs);

}  // namespace ssdas

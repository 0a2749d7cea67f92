#include "ssdas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ssdas/errors.hpp"
#include "ssdas/synthdata.hpp"

namespace ssdas {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("ConfusionMatrix::add: shape mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= num_classes_ || gt[i] >= num_classes_)
      throw std::invalid_argument("ConfusionMatrix::add: class index out of range");
    ++counts_[static_cast<std::size_t>(gt[i]) * num_classes_ + pred[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_)
    throw std::invalid_argument("ConfusionMatrix::merge: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(int gt, int pred) const {
  return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::gt_count(int cls) const {
  std::uint64_t t = 0;
  for (int p = 0; p < num_classes_; ++p) t += at(cls, p);
  return t;
}

IouResult miou_from_confusion(const ConfusionMatrix& cm) {
  const int c = cm.num_classes();
  IouResult res;
  res.per_class.assign(static_cast<std::size_t>(c), 0.0);
  res.present.assign(static_cast<std::size_t>(c), false);
  double sum = 0.0;
  int present = 0;
  for (int i = 0; i < c; ++i) {
    const std::uint64_t tp = cm.at(i, i);
    std::uint64_t fp = 0, fn = 0;
    for (int j = 0; j < c; ++j) {
      if (j == i) continue;
      fp += cm.at(j, i);
      fn += cm.at(i, j);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;  // class absent from both pred and gt
    res.present[static_cast<std::size_t>(i)] = true;
    res.per_class[static_cast<std::size_t>(i)] =
        static_cast<double>(tp) / static_cast<double>(uni);
    sum += res.per_class[static_cast<std::size_t>(i)];
    ++present;
  }
  res.miou = present > 0 ? sum / present : 0.0;
  return res;
}

IouResult miou(std::span<const std::vector<std::uint8_t>> preds,
               std::span<const std::vector<std::uint8_t>> gts, int num_classes) {
  if (preds.size() != gts.size()) throw std::invalid_argument("miou: shape mismatch");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i]);
  return miou_from_confusion(cm);
}

FeatureStats feature_stats(std::span<const double> features, int dim,
                           std::span<const std::uint8_t> labels) {
  if (labels.empty()) throw std::invalid_argument("feature_stats: no labeled pixels");
  if (features.size() != labels.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("feature_stats: feature/label size mismatch");

  int max_cls = 0;
  for (auto l : labels) max_cls = std::max(max_cls, static_cast<int>(l));
  const int c = max_cls + 1;

  std::vector<std::vector<double>> centers(static_cast<std::size_t>(c),
                                           std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(c), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& ctr = centers[labels[i]];
    const double* f = features.data() + i * static_cast<std::size_t>(dim);
    for (int d = 0; d < dim; ++d) ctr[static_cast<std::size_t>(d)] += f[d];
    ++counts[labels[i]];
  }
  std::vector<int> present;
  for (int k = 0; k < c; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) continue;
    present.push_back(k);
    for (auto& v : centers[static_cast<std::size_t>(k)])
      v /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }

  // Within-class: mean over present classes of the mean squared distance to
  // the class center.
  std::vector<double> within(static_cast<std::size_t>(c), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& ctr = centers[labels[i]];
    const double* f = features.data() + i * static_cast<std::size_t>(dim);
    double d2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double diff = f[d] - ctr[static_cast<std::size_t>(d)];
      d2 += diff * diff;
    }
    within[labels[i]] += d2;
  }
  FeatureStats stats;
  for (int k : present)
    stats.sigma_w2 += within[static_cast<std::size_t>(k)] /
                      static_cast<double>(counts[static_cast<std::size_t>(k)]);
  stats.sigma_w2 /= static_cast<double>(present.size());

  // Between-class: mean squared distance over unordered pairs of centers.
  if (present.size() >= 2) {
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < present.size(); ++a)
      for (std::size_t b = a + 1; b < present.size(); ++b) {
        const auto& ca = centers[static_cast<std::size_t>(present[a])];
        const auto& cb = centers[static_cast<std::size_t>(present[b])];
        double d2 = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double diff = ca[static_cast<std::size_t>(d)] - cb[static_cast<std::size_t>(d)];
          d2 += diff * diff;
        }
        sum += d2;
        ++pairs;
      }
    stats.sigma_b2 = sum / pairs;
  }
  return stats;
}

void write_feature_csv(const std::string& path, std::span<const double> features, int dim,
                       std::span<const std::uint8_t> labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write features to " + path);
  char buf[40];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* f = features.data() + i * static_cast<std::size_t>(dim);
    for (int d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", f[d]);
      out << buf << ',';
    }
    out << static_cast<int>(labels[i]) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::pair<std::vector<double>, std::vector<std::uint8_t>> read_feature_csv(
    const std::string& path, int* dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read features from " + path);
  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  std::string line;
  *dim = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
    if (row.size() < 2) throw DataError("malformed feature CSV row in " + path);
    const int d = static_cast<int>(row.size()) - 1;
    if (*dim < 0) *dim = d;
    if (d != *dim) throw DataError("inconsistent feature CSV width in " + path);
    features.insert(features.end(), row.begin(), row.end() - 1);
    labels.push_back(static_cast<std::uint8_t>(row.back()));
  }
  return {std::move(features), std::move(labels)};
}

std::vector<std::uint8_t> argmax_map(const Tensor& probs) {
  const int c = probs.shape()[0];
  const std::int64_t pixels = static_cast<std::int64_t>(probs.shape()[1]) * probs.shape()[2];
  std::vector<std::uint8_t> out(static_cast<std::size_t>(pixels));
  const double* v = probs.data();
  for (std::int64_t p = 0; p < pixels; ++p) {
    int best = 0;
    double best_v = v[p];
    for (int k = 1; k < c; ++k) {
      const double cand = v[k * pixels + p];
      if (cand > best_v) {
        best_v = cand;
        best = k;
      }
    }
    out[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void collect_features(const SegModel& model, std::span<const RawImage> images,
                      std::span<const RawMask> masks, std::vector<double>* features,
                      std::vector<std::uint8_t>* labels) {
  if (images.size() != masks.size())
    throw std::invalid_argument("collect_features: image/mask count mismatch");
  features->clear();
  labels->clear();
  const int dim = model.feature_width();
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tape tape;
    Tape::NoGrad guard(tape);
    const auto [probs, feat] = model.forward_with_features(tape, image_to_tensor(images[i]));
    (void)probs;
    const std::int64_t pixels =
        static_cast<std::int64_t>(feat.shape()[1]) * feat.shape()[2];
    const double* fv = feat.data();
    for (std::int64_t p = 0; p < pixels; ++p) {
      for (int d = 0; d < dim; ++d) features->push_back(fv[d * pixels + p]);
      labels->push_back(masks[i].cls[static_cast<std::size_t>(p)]);
    }
  }
}

void export_features(const SegModel& model, std::span<const RawImage> images,
                     std::span<const RawMask> masks, const std::string& path) {
  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  collect_features(model, images, masks, &features, &labels);
  write_feature_csv(path, features, model.feature_width(), labels);
}

}  // namespace ssdas

#include "ssdas/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssdas {

namespace {

constexpr double kDegenerateSpan = 1e-12;

void check_batch_match(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": mask/batch length mismatch");
}

// Threshold index per the curriculum schedule: floor(B*epoch/max_epoch),
// clamped to the last valid index.
std::size_t threshold_index(std::size_t batch, const EpochProgress& prog) {
  validate(prog);
  const std::int64_t raw = static_cast<std::int64_t>(batch) * prog.epoch / prog.max_epoch;
  return static_cast<std::size_t>(
      std::min<std::int64_t>(raw, static_cast<std::int64_t>(batch) - 1));
}

// Grad-free probability vector of the classifier on one shuffled map.
std::vector<double> forward_probs(const JigsawClassifier& clf, const Tensor& map,
                                  const PermutationSet& set, int label) {
  Tape tape;
  Tape::NoGrad guard(tape);
  Tensor shuffled = shuffle(map, set.perms[static_cast<std::size_t>(label)]);
  return clf.forward(tape, shuffled).values();
}

void check_clf_set(const JigsawClassifier& clf, const PermutationSet& set) {
  if (clf.num_permutations() != set.size() || clf.grid_n() != set.grid_n)
    throw std::invalid_argument("classifier is not bound to this permutation set");
}

}  // namespace

int BinaryMask::count_ones() const {
  int c = 0;
  for (auto v : values) c += v != 0;
  return c;
}

int BinaryMask::count_zeros() const { return static_cast<int>(values.size()) - count_ones(); }

void validate(const EpochProgress& prog) {
  if (prog.max_epoch < 1) throw std::invalid_argument("EpochProgress: max_epoch must be >= 1");
  if (prog.epoch < 0 || prog.epoch > prog.max_epoch)
    throw std::invalid_argument("EpochProgress: epoch out of range");
}

std::vector<int> draw_puzzle_labels(int batch, const PermutationSet& set, Rng& rng) {
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (auto& l : labels) l = rng.uniform_int(set.size());
  return labels;
}

std::vector<Tensor> jig_losses(Tape& tape, std::span<const Tensor> maps,
                               const JigsawClassifier& clf, const PermutationSet& set,
                               std::span<const int> labels, bool learn_clf) {
  check_clf_set(clf, set);
  check_batch_match(maps.size(), labels.size(), "jig_losses");
  std::vector<Tensor> losses;
  losses.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const int label = labels[i];
    Tensor shuffled = shuffle_on_tape(tape, maps[i], set.perms[static_cast<std::size_t>(label)]);
    Tensor probs = clf.forward(tape, shuffled, learn_clf);
    losses.push_back(tape.cross_entropy(probs, label));
  }
  return losses;
}

std::vector<Tensor> jig_loss(Tape& tape, std::span<const Tensor> maps,
                             const JigsawClassifier& clf, const PermutationSet& set, Rng& rng) {
  const auto labels = draw_puzzle_labels(static_cast<int>(maps.size()), set, rng);
  return jig_losses(tape, maps, clf, set, labels);
}

std::vector<double> jig_loss_values(std::span<const Tensor> maps, const JigsawClassifier& clf,
                                    const PermutationSet& set, std::span<const int> labels) {
  check_clf_set(clf, set);
  check_batch_match(maps.size(), labels.size(), "jig_loss_values");
  std::vector<double> out;
  out.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto probs = forward_probs(clf, maps[i], set, labels[i]);
    const double p = std::max(probs[static_cast<std::size_t>(labels[i])], numeric::kLogClampEps);
    out.push_back(-std::log(p));
  }
  return out;
}

std::vector<double> classifier_discrepancies(std::span<const Tensor> maps,
                                             const JigsawClassifier& clf_s,
                                             const JigsawClassifier& clf_t,
                                             const PermutationSet& set,
                                             std::span<const int> labels) {
  check_clf_set(clf_s, set);
  check_clf_set(clf_t, set);
  check_batch_match(maps.size(), labels.size(), "classifier_discrepancies");
  std::vector<double> out;
  out.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto ps = forward_probs(clf_s, maps[i], set, labels[i]);
    const auto pt = forward_probs(clf_t, maps[i], set, labels[i]);
    double l1 = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k) l1 += std::fabs(ps[k] - pt[k]);
    out.push_back(0.5 * l1);
  }
  return out;
}

std::vector<double> unity_normalize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("unity_normalize: empty batch");
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it, mx = *mx_it;
  std::vector<double> out(values.size(), 0.0);
  if (mx - mn < kDegenerateSpan) return out;
  const double inv = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mn) * inv;
  return out;
}

CdsMask cds_from_discrepancies(std::span<const double> discrepancies) {
  CdsMask mask;
  mask.values = unity_normalize(discrepancies);
  for (auto& v : mask.values) v = 1.0 - v;
  return mask;
}

CdsMask cds_map(std::span<const Tensor> source_maps, const JigsawClassifier& clf_s,
                const JigsawClassifier& clf_t, const PermutationSet& set,
                std::span<const int> labels) {
  return cds_from_discrepancies(classifier_discrepancies(source_maps, clf_s, clf_t, set, labels));
}

CdsMask cds_map(std::span<const Tensor> source_maps, const JigsawClassifier& clf_s,
                const JigsawClassifier& clf_t, const PermutationSet& set, Rng& rng) {
  const auto labels = draw_puzzle_labels(static_cast<int>(source_maps.size()), set, rng);
  return cds_map(source_maps, clf_s, clf_t, set, labels);
}

BinaryMask compute_m_rm(const CdsMask& cds, const EpochProgress& prog) {
  if (cds.values.empty()) throw std::invalid_argument("compute_m_rm: empty batch");
  std::vector<double> sorted(cds.values);
  std::stable_sort(sorted.begin(), sorted.end());
  const double thres = sorted[threshold_index(sorted.size(), prog)];
  BinaryMask mask;
  mask.values.reserve(cds.values.size());
  for (double v : cds.values) mask.values.push_back(v >= thres ? 1 : 0);
  return mask;
}

double entropy_of_probs(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::vector<double> jig_entropy(std::span<const Tensor> maps, const JigsawClassifier& clf,
                                const PermutationSet& set, std::span<const int> labels) {
  check_clf_set(clf, set);
  check_batch_match(maps.size(), labels.size(), "jig_entropy");
  std::vector<double> out;
  out.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto probs = forward_probs(clf, maps[i], set, labels[i]);
    out.push_back(entropy_of_probs(probs));
  }
  return out;
}

BinaryMask compute_m_add(std::span<const double> entropies, const EpochProgress& prog) {
  if (entropies.empty()) throw std::invalid_argument("compute_m_add: empty batch");
  std::vector<double> sorted(entropies.begin(), entropies.end());
  std::stable_sort(sorted.begin(), sorted.end());
  const double thres = sorted[threshold_index(sorted.size(), prog)];
  BinaryMask mask;
  mask.values.reserve(entropies.size());
  for (double v : entropies) mask.values.push_back(v <= thres ? 1 : 0);
  return mask;
}

Tensor labeled_flow_loss(Tape& tape, std::span<const Tensor> source_maps,
                         std::span<const Tensor> target_maps, const JigsawClassifier& clf_s,
                         const JigsawClassifier& clf_t, const PermutationSet& set,
                         std::span<const int> labels_s, std::span<const int> labels_t,
                         std::span<const double> cds, const BinaryMask& m_rm, double lambda) {
  check_batch_match(source_maps.size(), cds.size(), "labeled_flow_loss cds");
  check_batch_match(source_maps.size(), m_rm.values.size(), "labeled_flow_loss m_rm");
  auto source_losses = jig_losses(tape, source_maps, clf_s, set, labels_s);
  std::vector<double> weights(source_maps.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] = cds[i] * static_cast<double>(m_rm.values[i]);
  Tensor loss = tape.weighted_mean(source_losses, weights);
  if (!clf_t.frozen()) {
    auto target_losses = jig_losses(tape, target_maps, clf_t, set, labels_t);
    loss = tape.add(loss, tape.mean(target_losses));
  }
  return tape.scale(loss, lambda);
}

UnlabeledFlowLoss unlabeled_flow_loss(Tape& tape, std::span<const Tensor> unlabeled_maps,
                                      const JigsawClassifier& clf_s, const PermutationSet& set,
                                      std::span<const int> labels, const BinaryMask& m_add,
                                      double lambda) {
  check_batch_match(unlabeled_maps.size(), m_add.values.size(), "unlabeled_flow_loss m_add");
  // Two separate forwards of the same puzzles: the masked term trains the
  // classifier, the complementary term treats it as a fixed function.
  auto losses_learn = jig_losses(tape, unlabeled_maps, clf_s, set, labels, /*learn_clf=*/true);
  auto losses_fixed = jig_losses(tape, unlabeled_maps, clf_s, set, labels, /*learn_clf=*/false);
  std::vector<double> w_add(m_add.values.size());
  std::vector<double> w_rest(m_add.values.size());
  for (std::size_t i = 0; i < m_add.values.size(); ++i) {
    w_add[i] = static_cast<double>(m_add.values[i]);
    w_rest[i] = 1.0 - w_add[i];
  }
  UnlabeledFlowLoss out;
  out.term_a = tape.scale(tape.weighted_mean(losses_learn, w_add), lambda);
  out.term_b = tape.scale(tape.weighted_mean(losses_fixed, w_rest), lambda);
  return out;
}

Tensor acda_unlabeled_loss(Tape& tape, std::span<const Tensor> unlabeled_maps,
                           const JigsawClassifier& clf_s, const PermutationSet& set,
                           std::span<const int> labels, double lambda) {
  auto losses = jig_losses(tape, unlabeled_maps, clf_s, set, labels, /*learn_clf=*/false);
  return tape.scale(tape.mean(losses), lambda);
}

}  // namespace ssdas

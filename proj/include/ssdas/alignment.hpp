#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssdas/jigsaw.hpp"
#include "ssdas/nets.hpp"
#include "ssdas/rng.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

// Per-source-sample cross-domain similarity weights in [0,1].
struct CdsMask {
  std::vector<double> values;
};

// Per-sample 0/1 curriculum mask (keep/removed for sources, add/held-out for
// unlabeled targets).
struct BinaryMask {
  std::vector<std::uint8_t> values;
  int count_ones() const;
  int count_zeros() const;
};

struct EpochProgress {
  int epoch = 0;      // 0-based
  int max_epoch = 1;  // >= 1
};

void validate(const EpochProgress& prog);

// One puzzle label per sample, drawn uniformly from the set. Mask
// computations and losses over the same batch must share these labels.
std::vector<int> draw_puzzle_labels(int batch, const PermutationSet& set, Rng& rng);

// Per-sample jigsaw losses on the tape: shuffle each map by its label's
// permutation, classify, cross-entropy against the label. Unreduced so masks
// can weight individual samples. learn_clf=false detaches the classifier
// parameters (gradients still reach the maps).
std::vector<Tensor> jig_losses(Tape& tape, std::span<const Tensor> maps,
                               const JigsawClassifier& clf, const PermutationSet& set,
                               std::span<const int> labels, bool learn_clf = true);

// Spec surface: draws fresh puzzle labels internally.
std::vector<Tensor> jig_loss(Tape& tape, std::span<const Tensor> maps,
                             const JigsawClassifier& clf, const PermutationSet& set, Rng& rng);

// Grad-free per-sample loss values (monitoring / freeze bookkeeping).
std::vector<double> jig_loss_values(std::span<const Tensor> maps, const JigsawClassifier& clf,
                                    const PermutationSet& set, std::span<const int> labels);

// Total-variation distance between the two classifiers' predictions on the
// same shuffled puzzle, per sample: 0.5 * L1 of the probability vectors.
std::vector<double> classifier_discrepancies(std::span<const Tensor> maps,
                                             const JigsawClassifier& clf_s,
                                             const JigsawClassifier& clf_t,
                                             const PermutationSet& set,
                                             std::span<const int> labels);

// (x - min) / (max - min); a degenerate batch (max - min < 1e-12) maps to all
// zeros, i.e. full similarity after the 1-x flip.
std::vector<double> unity_normalize(std::span<const double> values);

CdsMask cds_from_discrepancies(std::span<const double> discrepancies);

// CDS map per batch: both classifiers see the same puzzles (shared labels).
CdsMask cds_map(std::span<const Tensor> source_maps, const JigsawClassifier& clf_s,
                const JigsawClassifier& clf_t, const PermutationSet& set,
                std::span<const int> labels);
CdsMask cds_map(std::span<const Tensor> source_maps, const JigsawClassifier& clf_s,
                const JigsawClassifier& clf_t, const PermutationSet& set, Rng& rng);

// Removal mask: sort CDS ascending, threshold at index
// floor(B*epoch/max_epoch) clamped to B-1, keep samples with CDS >= threshold.
BinaryMask compute_m_rm(const CdsMask& cds, const EpochProgress& prog);

// Shannon entropy of the classifier's prediction per sample (0 log 0 := 0).
std::vector<double> jig_entropy(std::span<const Tensor> maps, const JigsawClassifier& clf,
                                const PermutationSet& set, std::span<const int> labels);
double entropy_of_probs(std::span<const double> probs);

// Addition mask: sort entropies ascending, threshold at index
// floor(B*epoch/max_epoch) clamped to B-1, add samples with entropy <= it.
BinaryMask compute_m_add(std::span<const double> entropies, const EpochProgress& prog);

// Labeled data flow: lambda * ( mean_b[jig(P_s)_b * cds_b * m_rm_b]
//                             + mean_b[jig(P_t)_b] ).
// The target term is dropped while clf_t is frozen.
Tensor labeled_flow_loss(Tape& tape, std::span<const Tensor> source_maps,
                         std::span<const Tensor> target_maps, const JigsawClassifier& clf_s,
                         const JigsawClassifier& clf_t, const PermutationSet& set,
                         std::span<const int> labels_s, std::span<const int> labels_t,
                         std::span<const double> cds, const BinaryMask& m_rm, double lambda);

// Unlabeled data flow, two terms with distinct update scopes:
//   term_a = lambda * mean_b[jig(P_tu)_b * m_add_b]        updates G and J_s
//   term_b = lambda * mean_b[jig(P_tu)_b * (1 - m_add_b)]  updates G only
struct UnlabeledFlowLoss {
  Tensor term_a;
  Tensor term_b;
};
UnlabeledFlowLoss unlabeled_flow_loss(Tape& tape, std::span<const Tensor> unlabeled_maps,
                                      const JigsawClassifier& clf_s, const PermutationSet& set,
                                      std::span<const int> labels, const BinaryMask& m_add,
                                      double lambda);

// Cross-domain-only unlabeled flow: classifier fixed, maps aligned to it.
Tensor acda_unlabeled_loss(Tape& tape, std::span<const Tensor> unlabeled_maps,
                           const JigsawClassifier& clf_s, const PermutationSet& set,
                           std::span<const int> labels, double lambda);

}  // namespace ssdas

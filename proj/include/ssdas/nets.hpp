#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssdas/rng.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

struct ConvLayer {
  Tensor weights;  // [Cout,Cin,k,k]
  Tensor bias;     // [Cout]
};

// Fully convolutional segmentation model: two 3x3 conv+ReLU stages into a 3x3
// projection, per-pixel softmax over classes. Works on any spatial size.
class SegModel {
 public:
  SegModel(int num_classes, std::uint64_t init_seed, int hidden1 = 16, int hidden2 = 32);

  // probs [C,H,W]
  Tensor forward(Tape& tape, const Tensor& image) const;
  // (probs, penultimate ReLU features [hidden2,H,W])
  std::pair<Tensor, Tensor> forward_with_features(Tape& tape, const Tensor& image) const;

  std::vector<Tensor> parameters() const;
  int num_classes() const { return num_classes_; }
  int feature_width() const { return hidden2_; }

 private:
  int num_classes_;
  int hidden1_, hidden2_;
  ConvLayer c1_, c2_, c3_;
};

// Jigsaw-puzzle classifier: 3x3 conv+ReLU, mean pooling onto the puzzle grid,
// then a linear head over the flattened cells; softmax over the permutation
// classes. Bound to fixed input geometry and permutation count.
class JigsawClassifier {
 public:
  JigsawClassifier(int in_channels, int in_h, int in_w, int grid_n, int num_permutations,
                   std::uint64_t init_seed, int hidden = 16);

  // probs [N]. learn_params=false detaches the parameters for this call:
  // gradients still flow through to the input, but no parameter gradient is
  // accumulated. A frozen classifier is always detached.
  Tensor forward(Tape& tape, const Tensor& segmap, bool learn_params = true) const;

  JigsawClassifier clone_architecture(std::uint64_t init_seed) const;

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  std::vector<Tensor> parameters() const;
  int num_permutations() const { return num_permutations_; }
  int grid_n() const { return grid_n_; }
  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_, in_h_, in_w_, grid_n_, num_permutations_, hidden_;
  ConvLayer conv_;
  Tensor head_w_, head_b_;
  bool frozen_ = false;
};

// FNV-1a over the raw bytes of all parameters, in declaration order.
std::uint64_t param_hash(const std::vector<Tensor>& params);

// Flat binary checkpoint: magic "SSDL", u32 version, u64 parameter count,
// then little-endian doubles in declaration order.
void save_checkpoint(const std::string& path, const SegModel& model);
SegModel load_checkpoint(const std::string& path);

}  // namespace ssdas

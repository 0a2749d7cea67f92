#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ssdas/netpbm.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

// Appearance model of one domain. Colors are in [0,1] RGB; the shift knobs
// (hue rotation, brightness offset, noise amplitude) are what separates a
// target domain from its source.
struct Appearance {
  std::array<std::array<double, 3>, 4> base_colors = {{
      {0.20, 0.26, 0.22},  // background
      {0.75, 0.20, 0.18},  // circle
      {0.20, 0.45, 0.75},  // square
      {0.78, 0.72, 0.20},  // triangle
  }};
  double texture_freq = 3.0;
  double texture_amp = 0.08;
  double shape_jitter = 0.05;  // per-shape brightness variation
  double hue_rotation_deg = 0.0;
  double brightness = 0.0;
  double noise_amp = 0.0;
};

struct DomainSpec {
  int height = 32;
  int width = 32;
  int num_classes = 4;  // background plus up to three shape kinds
  Appearance appearance;
  std::uint64_t seed = 1;
};

// Target spec derived from a source spec; shift 0 leaves it identical.
DomainSpec apply_shift(const DomainSpec& source, double shift);

struct GeneratedDomain {
  std::vector<RawImage> images;
  std::vector<RawMask> masks;
};

// Deterministic given spec.seed (each image draws from its own derived
// stream, so prefixes agree across different counts). Every image holds one
// to four non-overlapping shapes on a textured background; image i < C-1 is
// guaranteed to contain shape class i+1 so small splits cover all classes.
// Throws DataError if shapes cannot be placed after bounded retries.
GeneratedDomain generate_domain(const DomainSpec& spec, int count);

struct SplitIndices {
  std::vector<int> k_shot;
  std::vector<int> unlabeled;
  std::vector<int> validation;
};

// The validation block is the fixed tail of the target set; the k labeled
// images are drawn uniformly without replacement from the rest; whatever
// remains is the unlabeled pool. Throws std::invalid_argument when k exceeds
// target_count - val_count.
SplitIndices make_split(int target_count, int k, int val_count, std::uint64_t seed);

struct Dataset {
  GeneratedDomain source;
  GeneratedDomain target;
  SplitIndices split;
  int num_classes = 4;
};

// Directory layout: <root>/{source,target}/{images,masks}/NNNN.{ppm,pgm}
// plus split.json with the index lists and counts.
void write_dataset(const std::string& root, const Dataset& ds);
Dataset load_dataset(const std::string& root);

// [3,H,W] tensor with values in [0,1].
Tensor image_to_tensor(const RawImage& img);

}  // namespace ssdas

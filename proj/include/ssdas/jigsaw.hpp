#pragma once

#include <cstdint>
#include <vector>

#include "ssdas/rng.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

// A permutation of the n*n grid cells, row-major. shuffle() places the input
// patch at grid cell perm[g] into output grid cell g.
using Permutation = std::vector<int>;

struct PermutationSet {
  int grid_n = 0;                // patches per side
  std::vector<Permutation> perms;  // distinct; perms[0] is the identity
  int size() const { return static_cast<int>(perms.size()); }
};

// Greedy farthest-point selection under Hamming distance from a seeded
// candidate pool (the full symmetric group when small enough), identity
// first. Same (n, N, seed) always yields the same set.
// Throws std::invalid_argument when N < 1 or N > (n^2)!.
PermutationSet build_permutation_set(int n, int N, std::uint64_t seed);

int hamming_distance(const Permutation& a, const Permutation& b);

// Patch-level rearrangement of a [C,H,W] map; H and W must be divisible by
// the grid side. Channels are untouched.
Tensor shuffle(const Tensor& map, const Permutation& perm);
// Exact inverse of shuffle with the same permutation.
Tensor restore(const Tensor& map, const Permutation& perm);

// Same rearrangement recorded on a tape so gradients scatter back exactly.
Tensor shuffle_on_tape(Tape& tape, const Tensor& map, const Permutation& perm);

struct PuzzleInstance {
  Tensor shuffled;
  int label = 0;  // index into the generating PermutationSet
};

// Draws the label uniformly from the set, then shuffles accordingly.
PuzzleInstance sample_puzzle(const Tensor& map, const PermutationSet& set, Rng& rng);

}  // namespace ssdas

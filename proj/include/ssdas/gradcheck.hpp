#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssdas/rng.hpp"
#include "ssdas/tensor.hpp"

namespace ssdas {

// Central-finite-difference gradient verification. The check perturbs leaf
// values and re-evaluates the loss through forward passes only, so it is
// independent of every backward rule it validates.
//
// Error measure: |analytic - fd| / max(|analytic|, |fd|, 1e-3). The absolute
// floor keeps near-zero gradients from amplifying finite-difference noise
// into meaningless relative errors.

struct FdReport {
  std::string name;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool passed(double tol = 1e-4) const { return max_rel_err < tol; }
};

// build_loss must construct the loss from scratch on the given tape using the
// `leaves` tensors (re-reading their current values every call).
// coords_per_leaf < 0 checks every coordinate; otherwise that many are
// sampled per leaf with `sampler` (required when sampling).
FdReport check_gradients(const std::string& name, std::vector<Tensor> leaves,
                         const std::function<Tensor(Tape&)>& build_loss, double h = 1e-5,
                         int coords_per_leaf = -1, Rng* sampler = nullptr);

// Total random coordinates across all leaves (for large composed models).
FdReport check_gradients_sampled(const std::string& name, std::vector<Tensor> leaves,
                                 const std::function<Tensor(Tape&)>& build_loss,
                                 int total_coords, Rng& sampler, double h = 1e-5);

}  // namespace ssdas

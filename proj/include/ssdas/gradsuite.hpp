#pragma once

#include <cstdint>
#include <vector>

#include "ssdas/gradcheck.hpp"

namespace ssdas {

// Finite-difference verification of every autodiff primitive (each at 100
// random input points, all coordinates) plus a composed segmentation+jigsaw
// loss on a 4-image 8x8 batch (100 random parameter coordinates). All checks
// use central differences with h = 1e-5 and pass below 1e-4 relative error.
std::vector<FdReport> run_gradient_suite(std::uint64_t seed, int points_per_primitive = 100);

}  // namespace ssdas

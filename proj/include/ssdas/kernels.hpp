#pragma once

#include <cstddef>
#include <vector>

// Data-parallel inner loops, provided as a scalar reference backend and an
// AVX2 backend selected at runtime. Both backends implement the exact same
// floating-point contract so results are bit-identical whichever one runs:
//
//  * conv2d_forward        out[co,y,x] accumulates bias first, then kernel
//                          taps in (ci,ky,kx) order; out-of-range taps are
//                          skipped. One accumulator per output element.
//  * conv2d_backward_input gather form: din[ci,y,x] += sum over (co,ky,kx)
//                          in that order.
//  * conv2d_backward_params per-weight reduction over the valid output
//                          window [xlo,xhi): offset o = x-xlo is split into
//                          four-wide blocks; full blocks accumulate into one
//                          of four chains keyed by (o/4) mod 4 at lane o%4,
//                          the partial tail block into its own lane set.
//                          Combination per lane: ((c0+c2)+(c1+c3)) + tail,
//                          then lanes reduce as (l0+l2)+(l1+l3). Same scheme
//                          for the bias reduction over whole rows.
//  * relu_*                elementwise, gradient convention d/dx relu(0) = 0.
//
// No backend may use FMA contraction: every multiply and add rounds
// separately, matching plain scalar C.

namespace ssdas::kernels {

struct ConvDims {
  int cin = 0;
  int cout = 0;
  int h = 0;
  int w = 0;
  int k = 0;  // odd; same padding of k/2
};

struct Backend {
  const char* name;
  void (*conv2d_forward)(const ConvDims&, const double* in, const double* weights,
                         const double* bias, double* out);
  // Accumulates into din (caller owns zero-initialization).
  void (*conv2d_backward_input)(const ConvDims&, const double* weights,
                                const double* dout, double* din);
  // Accumulates into dweights / dbias; either may be null to skip it.
  void (*conv2d_backward_params)(const ConvDims&, const double* in, const double* dout,
                                 double* dweights, double* dbias);
  void (*relu_forward)(const double* x, double* y, std::size_t n);
  // dx += dy where x > 0.
  void (*relu_backward)(const double* x, const double* dy, double* dx, std::size_t n);
};

const Backend& scalar_backend();

// Null when this build has no AVX2 code path or the CPU lacks AVX2.
const Backend* avx2_backend();

// Best available backend; the SSDAS_KERNEL env var ("scalar" or "avx2")
// overrides the choice. Resolved once, on first use.
const Backend& active_backend();

// Test/CLI hook. Throws std::invalid_argument for unknown or unavailable
// names. Call before any compute, not concurrently with it.
void force_backend(const char* name);

std::vector<const Backend*> available_backends();

}  // namespace ssdas::kernels

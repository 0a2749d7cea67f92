#pragma once

#include "ssdas/kernels.hpp"

// Per-element helpers shared by the scalar and AVX2 translation units. The
// SIMD paths handle interior pixels and fall back to these at borders, so the
// accumulation sequence per element is identical everywhere.

namespace ssdas::kernels::detail {

inline double conv_forward_at(const ConvDims& d, const double* in, const double* w,
                              double bias, int co, int y, int x) {
  const int p = d.k / 2;
  double acc = bias;
  const double* wc = w + static_cast<std::size_t>(co) * d.cin * d.k * d.k;
  for (int ci = 0; ci < d.cin; ++ci) {
    const double* plane = in + static_cast<std::size_t>(ci) * d.h * d.w;
    const double* wk = wc + static_cast<std::size_t>(ci) * d.k * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      const int yy = y + ky - p;
      if (yy < 0 || yy >= d.h) continue;
      const double* row = plane + static_cast<std::size_t>(yy) * d.w;
      const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
      for (int kx = 0; kx < d.k; ++kx) {
        const int xx = x + kx - p;
        if (xx < 0 || xx >= d.w) continue;
        acc += row[xx] * wr[kx];
      }
    }
  }
  return acc;
}

inline double conv_backward_input_at(const ConvDims& d, const double* w,
                                     const double* dout, int ci, int y, int x) {
  const int p = d.k / 2;
  double acc = 0.0;
  for (int co = 0; co < d.cout; ++co) {
    const double* dplane = dout + static_cast<std::size_t>(co) * d.h * d.w;
    const double* wk = w + (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      const int oy = y - (ky - p);
      if (oy < 0 || oy >= d.h) continue;
      const double* drow = dplane + static_cast<std::size_t>(oy) * d.w;
      const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
      for (int kx = 0; kx < d.k; ++kx) {
        const int ox = x - (kx - p);
        if (ox < 0 || ox >= d.w) continue;
        acc += drow[ox] * wr[kx];
      }
    }
  }
  return acc;
}

// Lane-combination order matching the AVX2 horizontal reduction.
inline double combine4(const double a[4]) { return (a[0] + a[2]) + (a[1] + a[3]); }

}  // namespace ssdas::kernels::detail

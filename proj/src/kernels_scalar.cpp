#include <algorithm>

#include "kernels_common.hpp"

namespace ssdas::kernels {
namespace {

using detail::combine4;

void conv2d_forward_scalar(const ConvDims& d, const double* in, const double* w,
                           const double* bias, double* out) {
  for (int co = 0; co < d.cout; ++co) {
    double* oplane = out + static_cast<std::size_t>(co) * d.h * d.w;
    const double b = bias[co];
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        oplane[static_cast<std::size_t>(y) * d.w + x] =
            detail::conv_forward_at(d, in, w, b, co, y, x);
  }
}

void conv2d_backward_input_scalar(const ConvDims& d, const double* w,
                                  const double* dout, double* din) {
  for (int ci = 0; ci < d.cin; ++ci) {
    double* dplane = din + static_cast<std::size_t>(ci) * d.h * d.w;
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        dplane[static_cast<std::size_t>(y) * d.w + x] +=
            detail::conv_backward_input_at(d, w, dout, ci, y, x);
  }
}

// Reduction over the window [xlo,xhi) x [ylo,yhi) of irow[x]*drow[x], using
// the chain/lane/tail scheme documented in kernels.hpp.
struct WindowReduce {
  double chain[4][4] = {};
  double tail[4] = {};

  void row(const double* irow, const double* drow, int xlo, int xhi) {
    const int span = xhi - xlo;
    const int vec_end = xlo + (span & ~3);
    for (int x = xlo; x < vec_end; ++x) {
      const int o = x - xlo;
      chain[(o >> 2) & 3][o & 3] += irow[x] * drow[x];
    }
    for (int x = vec_end; x < xhi; ++x) tail[(x - xlo) & 3] += irow[x] * drow[x];
  }

  double result() const {
    double lanes[4];
    for (int l = 0; l < 4; ++l)
      lanes[l] = ((chain[0][l] + chain[2][l]) + (chain[1][l] + chain[3][l])) + tail[l];
    return combine4(lanes);
  }
};

void conv2d_backward_params_scalar(const ConvDims& d, const double* in,
                                   const double* dout, double* dw, double* db) {
  const int p = d.k / 2;
  if (dw) {
    for (int co = 0; co < d.cout; ++co) {
      const double* dplane = dout + static_cast<std::size_t>(co) * d.h * d.w;
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* plane = in + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
          const int ylo = std::max(0, p - ky);
          const int yhi = std::min(d.h, d.h + p - ky);
          for (int kx = 0; kx < d.k; ++kx) {
            const int xlo = std::max(0, p - kx);
            const int xhi = std::min(d.w, d.w + p - kx);
            WindowReduce acc;
            for (int y = ylo; y < yhi; ++y)
              acc.row(plane + static_cast<std::size_t>(y + ky - p) * d.w + (kx - p),
                      dplane + static_cast<std::size_t>(y) * d.w, xlo, xhi);
            dw[((static_cast<std::size_t>(co) * d.cin + ci) * d.k + ky) * d.k + kx] +=
                acc.result();
          }
        }
      }
    }
  }
  if (db) {
    for (int co = 0; co < d.cout; ++co) {
      const double* dplane = dout + static_cast<std::size_t>(co) * d.h * d.w;
      WindowReduce acc;
      for (int y = 0; y < d.h; ++y) {
        const double* drow = dplane + static_cast<std::size_t>(y) * d.w;
        const int span = d.w & ~3;
        for (int x = 0; x < span; ++x) acc.chain[(x >> 2) & 3][x & 3] += drow[x];
        for (int x = span; x < d.w; ++x) acc.tail[x & 3] += drow[x];
      }
      db[co] += acc.result();
    }
  }
}

void relu_forward_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b{
      "scalar",           conv2d_forward_scalar, conv2d_backward_input_scalar,
      conv2d_backward_params_scalar, relu_forward_scalar, relu_backward_scalar,
  };
  return b;
}

}  // namespace ssdas::kernels

// Compiled with -mavx2 (see src/CMakeLists.txt); guarded so the TU is an
// empty stub on toolchains or targets without AVX2.

#include <algorithm>

#include "kernels_common.hpp"

#if defined(__AVX2__) && (defined(__x86_64__) || defined(__i386__))

#include <immintrin.h>

namespace ssdas::kernels {
namespace {

using detail::combine4;

// Four independent accumulator blocks stay in flight so the add-latency
// chain per output does not bound throughput. Each lane's accumulation
// sequence is exactly the scalar per-output tap order.
void conv2d_forward_avx2(const ConvDims& d, const double* in, const double* w,
                         const double* bias, double* out) {
  const int p = d.k / 2;
  const int xin_lo = p;
  const int xin_hi = d.w - p;
  for (int co = 0; co < d.cout; ++co) {
    double* oplane = out + static_cast<std::size_t>(co) * d.h * d.w;
    const double* wc = w + static_cast<std::size_t>(co) * d.cin * d.k * d.k;
    const double b = bias[co];
    for (int y = 0; y < d.h; ++y) {
      double* orow = oplane + static_cast<std::size_t>(y) * d.w;
      for (int x = 0; x < std::min(xin_lo, d.w); ++x)
        orow[x] = detail::conv_forward_at(d, in, w, b, co, y, x);
      int x = xin_lo;
      for (; x + 16 <= xin_hi; x += 16) {
        __m256d a0 = _mm256_set1_pd(b), a1 = a0, a2 = a0, a3 = a0;
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* plane = in + static_cast<std::size_t>(ci) * d.h * d.w;
          const double* wk = wc + static_cast<std::size_t>(ci) * d.k * d.k;
          for (int ky = 0; ky < d.k; ++ky) {
            const int yy = y + ky - p;
            if (yy < 0 || yy >= d.h) continue;
            const double* row = plane + static_cast<std::size_t>(yy) * d.w + (x - p);
            const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx) {
              const __m256d wv = _mm256_set1_pd(wr[kx]);
              a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(row + kx), wv));
              a1 = _mm256_add_pd(a1, _mm256_mul_pd(_mm256_loadu_pd(row + kx + 4), wv));
              a2 = _mm256_add_pd(a2, _mm256_mul_pd(_mm256_loadu_pd(row + kx + 8), wv));
              a3 = _mm256_add_pd(a3, _mm256_mul_pd(_mm256_loadu_pd(row + kx + 12), wv));
            }
          }
        }
        _mm256_storeu_pd(orow + x, a0);
        _mm256_storeu_pd(orow + x + 4, a1);
        _mm256_storeu_pd(orow + x + 8, a2);
        _mm256_storeu_pd(orow + x + 12, a3);
      }
      for (; x + 4 <= xin_hi; x += 4) {
        __m256d acc = _mm256_set1_pd(b);
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* plane = in + static_cast<std::size_t>(ci) * d.h * d.w;
          const double* wk = wc + static_cast<std::size_t>(ci) * d.k * d.k;
          for (int ky = 0; ky < d.k; ++ky) {
            const int yy = y + ky - p;
            if (yy < 0 || yy >= d.h) continue;
            const double* row = plane + static_cast<std::size_t>(yy) * d.w + (x - p);
            const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx)
              acc = _mm256_add_pd(acc,
                                  _mm256_mul_pd(_mm256_loadu_pd(row + kx), _mm256_set1_pd(wr[kx])));
          }
        }
        _mm256_storeu_pd(orow + x, acc);
      }
      for (; x < d.w; ++x)
        orow[x] = detail::conv_forward_at(d, in, w, b, co, y, x);
    }
  }
}

void conv2d_backward_input_avx2(const ConvDims& d, const double* w,
                                const double* dout, double* din) {
  const int p = d.k / 2;
  const int xin_lo = p;
  const int xin_hi = d.w - p;
  for (int ci = 0; ci < d.cin; ++ci) {
    double* dplane = din + static_cast<std::size_t>(ci) * d.h * d.w;
    for (int y = 0; y < d.h; ++y) {
      double* drow_out = dplane + static_cast<std::size_t>(y) * d.w;
      for (int x = 0; x < std::min(xin_lo, d.w); ++x)
        drow_out[x] += detail::conv_backward_input_at(d, w, dout, ci, y, x);
      int x = xin_lo;
      for (; x + 16 <= xin_hi; x += 16) {
        __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
        for (int co = 0; co < d.cout; ++co) {
          const double* goplane = dout + static_cast<std::size_t>(co) * d.h * d.w;
          const double* wk = w + (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k;
          for (int ky = 0; ky < d.k; ++ky) {
            const int oy = y - (ky - p);
            if (oy < 0 || oy >= d.h) continue;
            const double* grow = goplane + static_cast<std::size_t>(oy) * d.w + (x + p);
            const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx) {
              const __m256d wv = _mm256_set1_pd(wr[kx]);
              a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(grow - kx), wv));
              a1 = _mm256_add_pd(a1, _mm256_mul_pd(_mm256_loadu_pd(grow - kx + 4), wv));
              a2 = _mm256_add_pd(a2, _mm256_mul_pd(_mm256_loadu_pd(grow - kx + 8), wv));
              a3 = _mm256_add_pd(a3, _mm256_mul_pd(_mm256_loadu_pd(grow - kx + 12), wv));
            }
          }
        }
        _mm256_storeu_pd(drow_out + x, _mm256_add_pd(_mm256_loadu_pd(drow_out + x), a0));
        _mm256_storeu_pd(drow_out + x + 4, _mm256_add_pd(_mm256_loadu_pd(drow_out + x + 4), a1));
        _mm256_storeu_pd(drow_out + x + 8, _mm256_add_pd(_mm256_loadu_pd(drow_out + x + 8), a2));
        _mm256_storeu_pd(drow_out + x + 12,
                         _mm256_add_pd(_mm256_loadu_pd(drow_out + x + 12), a3));
      }
      for (; x + 4 <= xin_hi; x += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (int co = 0; co < d.cout; ++co) {
          const double* goplane = dout + static_cast<std::size_t>(co) * d.h * d.w;
          const double* wk = w + (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k;
          for (int ky = 0; ky < d.k; ++ky) {
            const int oy = y - (ky - p);
            if (oy < 0 || oy >= d.h) continue;
            const double* grow = goplane + static_cast<std::size_t>(oy) * d.w + (x + p);
            const double* wr = wk + static_cast<std::size_t>(ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx)
              acc = _mm256_add_pd(
                  acc, _mm256_mul_pd(_mm256_loadu_pd(grow - kx), _mm256_set1_pd(wr[kx])));
          }
        }
        const __m256d prev = _mm256_loadu_pd(drow_out + x);
        _mm256_storeu_pd(drow_out + x, _mm256_add_pd(prev, acc));
      }
      for (; x < d.w; ++x)
        drow_out[x] += detail::conv_backward_input_at(d, w, dout, ci, y, x);
    }
  }
}

// Vector mirror of the scalar WindowReduce: four chain vectors keyed by
// block index mod 4, one tail lane set, identical combination order.
struct WindowReduceVec {
  __m256d chain[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(),
                      _mm256_setzero_pd()};
  double tail[4] = {0, 0, 0, 0};

  void row(const double* irow, const double* drow, int xlo, int xhi) {
    const int span = xhi - xlo;
    const int vec_end = xlo + (span & ~3);
    int bi = 0;
    for (int x = xlo; x < vec_end; x += 4, ++bi) {
      chain[bi & 3] = _mm256_add_pd(
          chain[bi & 3], _mm256_mul_pd(_mm256_loadu_pd(irow + x), _mm256_loadu_pd(drow + x)));
    }
    for (int x = vec_end; x < xhi; ++x) tail[(x - xlo) & 3] += irow[x] * drow[x];
  }

  double result() const {
    const __m256d s = _mm256_add_pd(_mm256_add_pd(chain[0], chain[2]),
                                    _mm256_add_pd(chain[1], chain[3]));
    double lanes[4];
    _mm256_storeu_pd(lanes, s);
    for (int l = 0; l < 4; ++l) lanes[l] += tail[l];
    return combine4(lanes);
  }
};

void conv2d_backward_params_avx2(const ConvDims& d, const double* in,
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
            WindowReduceVec acc;
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
      WindowReduceVec acc;
      const int span = d.w & ~3;
      for (int y = 0; y < d.h; ++y) {
        const double* drow = dplane + static_cast<std::size_t>(y) * d.w;
        int bi = 0;
        for (int x = 0; x < span; x += 4, ++bi)
          acc.chain[bi & 3] = _mm256_add_pd(acc.chain[bi & 3], _mm256_loadu_pd(drow + x));
        for (int x = span; x < d.w; ++x) acc.tail[x & 3] += drow[x];
      }
      db[co] += acc.result();
    }
  }
}

void relu_forward_avx2(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* x, const double* dy, double* dx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), g));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

}  // namespace

const Backend* avx2_backend_table() {
  static const Backend b{
      "avx2",          conv2d_forward_avx2, conv2d_backward_input_avx2,
      conv2d_backward_params_avx2, relu_forward_avx2, relu_backward_avx2,
  };
  return &b;
}

}  // namespace ssdas::kernels

#else

namespace ssdas::kernels {
const Backend* avx2_backend_table() { return nullptr; }
}  // namespace ssdas::kernels

#endif

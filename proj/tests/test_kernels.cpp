#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "ssdas/kernels.hpp"
#include "ssdas/rng.hpp"

using namespace ssdas;
using kernels::Backend;
using kernels::ConvDims;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Independent oracle: direct zero-padded accumulation, deliberately written
// with a different loop structure than the kernels.
std::vector<double> conv_oracle(const ConvDims& d, const std::vector<double>& in,
                                const std::vector<double>& w, const std::vector<double>& b) {
  const int p = d.k / 2;
  std::vector<double> out(static_cast<std::size_t>(d.cout) * d.h * d.w, 0.0);
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ky = 0; ky < d.k; ++ky)
        for (int kx = 0; kx < d.k; ++kx) {
          const double wv = w[((static_cast<std::size_t>(co) * d.cin + ci) * d.k + ky) * d.k + kx];
          for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
              const int yy = y + ky - p, xx = x + kx - p;
              if (yy < 0 || yy >= d.h || xx < 0 || xx >= d.w) continue;
              out[(static_cast<std::size_t>(co) * d.h + y) * d.w + x] +=
                  in[(static_cast<std::size_t>(ci) * d.h + yy) * d.w + xx] * wv;
            }
        }
  for (int co = 0; co < d.cout; ++co)
    for (int i = 0; i < d.h * d.w; ++i)
      out[static_cast<std::size_t>(co) * d.h * d.w + i] += b[static_cast<std::size_t>(co)];
  return out;
}

}  // namespace

TEST_CASE("conv2d forward matches the direct oracle") {
  Rng rng(11);
  for (const ConvDims d : {ConvDims{1, 2, 4, 4, 3}, ConvDims{3, 2, 8, 8, 3},
                           ConvDims{2, 3, 5, 7, 5}, ConvDims{2, 1, 6, 6, 1}}) {
    const auto in = random_vec(static_cast<std::size_t>(d.cin) * d.h * d.w, rng);
    const auto w = random_vec(static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k, rng);
    const auto b = random_vec(static_cast<std::size_t>(d.cout), rng);
    std::vector<double> out(static_cast<std::size_t>(d.cout) * d.h * d.w, 0.0);
    kernels::scalar_backend().conv2d_forward(d, in.data(), w.data(), b.data(), out.data());
    const auto expect = conv_oracle(d, in, w, b);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("scalar and AVX2 backends are bit-identical") {
  const Backend* avx2 = kernels::avx2_backend();
  if (!avx2) {
    MESSAGE("AVX2 unavailable on this host; equivalence not exercised");
    return;
  }
  const Backend& ref = kernels::scalar_backend();
  Rng rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    ConvDims d;
    d.cin = 1 + rng.uniform_int(5);
    d.cout = 1 + rng.uniform_int(5);
    d.h = 1 + rng.uniform_int(13);
    d.w = 1 + rng.uniform_int(13);
    d.k = 1 + 2 * rng.uniform_int(3);
    const auto in = random_vec(static_cast<std::size_t>(d.cin) * d.h * d.w, rng);
    const auto w = random_vec(static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k, rng);
    const auto b = random_vec(static_cast<std::size_t>(d.cout), rng);
    const auto dout = random_vec(static_cast<std::size_t>(d.cout) * d.h * d.w, rng);

    std::vector<double> out_a(dout.size(), 0.0), out_b(dout.size(), 0.0);
    ref.conv2d_forward(d, in.data(), w.data(), b.data(), out_a.data());
    avx2->conv2d_forward(d, in.data(), w.data(), b.data(), out_b.data());
    CHECK(bit_equal(out_a, out_b));

    auto din_a = random_vec(in.size(), rng);  // nonzero accumulators
    auto din_b = din_a;
    ref.conv2d_backward_input(d, w.data(), dout.data(), din_a.data());
    avx2->conv2d_backward_input(d, w.data(), dout.data(), din_b.data());
    CHECK(bit_equal(din_a, din_b));

    auto dw_a = random_vec(w.size(), rng);
    auto dw_b = dw_a;
    auto db_a = random_vec(b.size(), rng);
    auto db_b = db_a;
    ref.conv2d_backward_params(d, in.data(), dout.data(), dw_a.data(), db_a.data());
    avx2->conv2d_backward_params(d, in.data(), dout.data(), dw_b.data(), db_b.data());
    CHECK(bit_equal(dw_a, dw_b));
    CHECK(bit_equal(db_a, db_b));
  }

  for (std::size_t n : {1u, 4u, 7u, 64u, 1001u}) {
    const auto x = random_vec(n, rng);
    const auto dy = random_vec(n, rng);
    std::vector<double> y_a(n), y_b(n);
    ref.relu_forward(x.data(), y_a.data(), n);
    avx2->relu_forward(x.data(), y_b.data(), n);
    CHECK(bit_equal(y_a, y_b));
    auto dx_a = random_vec(n, rng);
    auto dx_b = dx_a;
    ref.relu_backward(x.data(), dy.data(), dx_a.data(), n);
    avx2->relu_backward(x.data(), dy.data(), dx_b.data(), n);
    CHECK(bit_equal(dx_a, dx_b));
  }
}

TEST_CASE("backward_input agrees with the transpose of forward") {
  // <dout, conv(in)> == <din, in> when din = backward_input(dout): the
  // gather-form gradient is the adjoint of the forward map.
  Rng rng(57);
  const ConvDims d{2, 3, 6, 6, 3};
  const auto in = random_vec(static_cast<std::size_t>(d.cin) * d.h * d.w, rng);
  const auto w = random_vec(static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k, rng);
  const std::vector<double> b(static_cast<std::size_t>(d.cout), 0.0);
  const auto dout = random_vec(static_cast<std::size_t>(d.cout) * d.h * d.w, rng);

  std::vector<double> out(dout.size(), 0.0);
  kernels::scalar_backend().conv2d_forward(d, in.data(), w.data(), b.data(), out.data());
  std::vector<double> din(in.size(), 0.0);
  kernels::scalar_backend().conv2d_backward_input(d, w.data(), dout.data(), din.data());

  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) lhs += dout[i] * out[i];
  for (std::size_t i = 0; i < in.size(); ++i) rhs += din[i] * in[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("active backend selection and forcing") {
  const auto backends = kernels::available_backends();
  CHECK(backends.size() >= 1);
  CHECK(std::string(backends[0]->name) == "scalar");
  CHECK_THROWS_AS(kernels::force_backend("no-such-backend"), std::invalid_argument);
  kernels::force_backend("scalar");
  CHECK(std::string(kernels::active_backend().name) == "scalar");
  if (kernels::avx2_backend()) {
    kernels::force_backend("avx2");
    CHECK(std::string(kernels::active_backend().name) == "avx2");
  }
}

TEST_CASE("conv throughput sanity") {
  // Not a pass/fail bound; prints the rate the training loop will see.
  const ConvDims d{16, 32, 32, 32, 3};
  Rng rng(3);
  const auto in = random_vec(static_cast<std::size_t>(d.cin) * d.h * d.w, rng);
  const auto w = random_vec(static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k, rng);
  const auto b = random_vec(static_cast<std::size_t>(d.cout), rng);
  std::vector<double> out(static_cast<std::size_t>(d.cout) * d.h * d.w, 0.0);
  const Backend& bk = kernels::active_backend();
  const int reps = 200;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i)
    bk.conv2d_forward(d, in.data(), w.data(), b.data(), out.data());
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  const double flops = 2.0 * reps * static_cast<double>(d.cout) * d.cin * d.k * d.k * d.h * d.w;
  MESSAGE("backend ", bk.name, ": ", flops / secs / 1e9, " GFLOP/s");
  CHECK(out[0] == out[0]);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ssdas/gradcheck.hpp"
#include "ssdas/gradsuite.hpp"
#include "ssdas/rng.hpp"
#include "ssdas/tensor.hpp"

using namespace ssdas;

TEST_CASE("softmax basics") {
  Tape tape;
  SUBCASE("symmetry") {
    Tensor out = tape.softmax(Tensor::from({2}, {0.0, 0.0}), 0);
    CHECK(out.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("ln2 case") {
    Tensor out = tape.softmax(Tensor::from({2}, {std::log(2.0), 0.0}), 0);
    CHECK(out.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(out.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("random vectors sum to one and lie in (0,1)") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      Tensor x({4});
      for (auto& v : x.values()) v = rng.uniform(-8.0, 8.0);
      Tensor out = tape.softmax(x, 0);
      double sum = 0.0;
      for (double v : out.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
  SUBCASE("invalid axis") {
    CHECK_THROWS_AS(tape.softmax(Tensor({2, 2}), 2), std::invalid_argument);
    CHECK_THROWS_AS(tape.softmax(Tensor({2, 2}), -1), std::invalid_argument);
  }
}

TEST_CASE("cross entropy values") {
  Tape tape;
  SUBCASE("uniform over four classes") {
    Tensor probs = Tensor::from({4}, {0.25, 0.25, 0.25, 0.25});
    for (int label = 0; label < 4; ++label)
      CHECK(tape.cross_entropy(probs, label).scalar() ==
            doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("one-hot is zero loss") {
    Tensor probs = Tensor::from({3}, {0.0, 1.0, 0.0});
    CHECK(tape.cross_entropy(probs, 1).scalar() == doctest::Approx(0.0));
  }
  SUBCASE("direct evaluation") {
    Tensor probs = Tensor::from({2}, {0.25, 0.75});
    CHECK(tape.cross_entropy(probs, 1).scalar() ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(tape.cross_entropy(probs, 1).scalar() == doctest::Approx(0.287682).epsilon(1e-5));
  }
  SUBCASE("degenerate probability is clamped, loss stays finite and non-negative") {
    Tensor probs = Tensor::from({2}, {0.0, 1.0});
    const double loss = tape.cross_entropy(probs, 0).scalar();
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
    CHECK(loss == doctest::Approx(-std::log(1e-12)));
  }
  SUBCASE("label out of range") {
    Tensor probs = Tensor::from({2}, {0.5, 0.5});
    CHECK_THROWS_AS(tape.cross_entropy(probs, 2), std::invalid_argument);
    CHECK_THROWS_AS(tape.cross_entropy(probs, -1), std::invalid_argument);
  }
}

TEST_CASE("conv2d forward contracts") {
  Tape tape;
  SUBCASE("1x1 identity kernel") {
    Rng rng(7);
    Tensor in({2, 4, 4});
    for (auto& v : in.values()) v = rng.uniform();
    Tensor w = Tensor::from({2, 2, 1, 1}, {1, 0, 0, 1});
    Tensor b({2});
    Tensor out = tape.conv2d(in, w, b);
    CHECK(out.values() == in.values());
  }
  SUBCASE("all-ones 3x3 kernel on a constant image") {
    const double v = 0.37;
    Tensor in({1, 5, 5}, v);
    Tensor w({1, 1, 3, 3}, 1.0);
    Tensor b({1});
    Tensor out = tape.conv2d(in, w, b);
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x)
        CHECK(out.data()[y * 5 + x] == doctest::Approx(9.0 * v).epsilon(1e-12));
    CHECK(out.data()[0] == doctest::Approx(4.0 * v).epsilon(1e-12));  // corner
  }
  SUBCASE("channel mismatch") {
    Tensor in({2, 4, 4});
    Tensor w({1, 3, 3, 3});
    Tensor b({1});
    CHECK_THROWS_AS(tape.conv2d(in, w, b), std::invalid_argument);
  }
  SUBCASE("even kernel size") {
    Tensor in({1, 4, 4});
    Tensor w({1, 1, 2, 2});
    Tensor b({1});
    CHECK_THROWS_AS(tape.conv2d(in, w, b), std::invalid_argument);
  }
}

// The two textbook backward cases, built through the public tape-extension
// API (Tape::fresh + Tape::record) with a scalar product op.
namespace {
Tensor product_op(Tape& t, const Tensor& a, const Tensor& b) {
  const bool needs = t.recording() && (a.requires_grad() || b.requires_grad());
  Tensor out = t.fresh({1}, needs);
  out.data()[0] = a.data()[0] * b.data()[0];
  if (needs) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    const bool wa = a.requires_grad(), wb = b.requires_grad();
    t.record([=] {
      if (on->grad.empty()) return;
      if (wa) {
        an->ensure_grad();
        an->grad[0] += on->grad[0] * bn->value[0];
      }
      if (wb) {
        bn->ensure_grad();
        bn->grad[0] += on->grad[0] * an->value[0];
      }
    });
  }
  return out;
}
}  // namespace

TEST_CASE("backward: analytic derivatives of x^2 and x*y") {
  SUBCASE("f(x) = x*x at 3 gives 6") {
    Tensor x = Tensor::from({1}, {3.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = product_op(tape, x, x);
    CHECK(loss.scalar() == doctest::Approx(9.0));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
  SUBCASE("f(x,y) = x*y at (2,5) gives (5,2)") {
    Tensor x = Tensor::from({1}, {2.0});
    Tensor y = Tensor::from({1}, {5.0});
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    Tape tape;
    Tensor loss = product_op(tape, x, y);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(y.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("backward contract checks") {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  Tensor out = tape.relu(x);
  CHECK_THROWS_AS(tape.backward(out), std::invalid_argument);  // not a scalar
  Tensor leaf = Tensor::scalar_value(1.0);
  CHECK_THROWS_AS(tape.backward(leaf), std::invalid_argument);  // not on tape
}

TEST_CASE("determinism: identical runs produce bit-identical outputs and gradients") {
  auto run = [] {
    Rng rng(123);
    Tensor in({3, 8, 8});
    for (auto& v : in.values()) v = rng.uniform();
    Tensor w({4, 3, 3, 3});
    for (auto& v : w.values()) v = rng.uniform(-0.5, 0.5);
    Tensor b({4});
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape tape;
    Tensor probs = tape.softmax(tape.conv2d(in, w, b), 0);
    std::vector<std::uint8_t> labels(64, 1);
    Tensor loss = tape.cross_entropy_map(probs, labels);
    tape.backward(loss);
    std::vector<double> out = {loss.scalar()};
    out.insert(out.end(), w.grad_values().begin(), w.grad_values().end());
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("gradient suite: all primitives and the composed model pass 1e-4") {
  const auto reports = run_gradient_suite(20250809, /*points_per_primitive=*/25);
  CHECK(reports.size() >= 11);
  for (const auto& r : reports) {
    INFO(r.name << " max_rel_err=" << r.max_rel_err);
    CHECK(r.passed(1e-4));
  }
}

TEST_CASE("gradcheck flags a corrupted gradient rule") {
  // Negative control: an op whose recorded backward is off by ten percent
  // must fail the finite-difference check.
  Tensor x = Tensor::from({1}, {0.7});
  auto rep = check_gradients("corrupted", {x}, [=](Tape& t) {
    const bool needs = t.recording() && x.requires_grad();
    Tensor out = t.fresh({1}, needs);
    out.data()[0] = 2.0 * x.data()[0];
    if (needs) {
      auto xn = x.node();
      auto on = out.node();
      t.record([=] {
        if (on->grad.empty()) return;
        xn->ensure_grad();
        xn->grad[0] += on->grad[0] * 2.2;  // should be 2.0
      });
    }
    return out;
  });
  CHECK_FALSE(rep.passed());
}

TEST_CASE("cross_entropy_map matches the per-pixel mean and is non-negative") {
  Rng rng(9);
  Tape tape;
  Tensor logits({3, 4, 4});
  for (auto& v : logits.values()) v = rng.uniform(-2.0, 2.0);
  Tensor probs = tape.softmax(logits, 0);
  std::vector<std::uint8_t> labels(16);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(3));
  const double loss = tape.cross_entropy_map(probs, labels).scalar();
  CHECK(loss >= 0.0);
  double manual = 0.0;
  for (int p = 0; p < 16; ++p) manual += -std::log(probs.data()[labels[p] * 16 + p]);
  CHECK(loss == doctest::Approx(manual / 16.0).epsilon(1e-12));
}

TEST_CASE("weighted_mean semantics and empty-batch error") {
  Tape tape;
  std::vector<Tensor> scalars{Tensor::scalar_value(2.0), Tensor::scalar_value(4.0)};
  std::vector<double> w{0.5, 1.5};
  CHECK(tape.weighted_mean(scalars, w).scalar() == doctest::Approx((1.0 + 6.0) / 2.0));
  std::vector<Tensor> empty;
  std::vector<double> none;
  CHECK_THROWS_AS(tape.weighted_mean(empty, none), std::invalid_argument);
}

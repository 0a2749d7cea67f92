#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "doctest.h"
#include "ssdas/jigsaw.hpp"
#include "ssdas/rng.hpp"

using namespace ssdas;

namespace {

Tensor random_map(int c, int h, int w, Rng& rng) {
  Tensor t({c, h, w});
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

// Map whose four quadrants are constant 0/1/2/3 (n = 2).
Tensor quadrant_map() {
  Tensor t({1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      t.data()[y * 4 + x] = static_cast<double>((y / 2) * 2 + (x / 2));
  return t;
}

}  // namespace

TEST_CASE("build_permutation_set basics") {
  SUBCASE("n=1, N=1 is just the identity") {
    const auto set = build_permutation_set(1, 1, 42);
    REQUIRE(set.size() == 1);
    CHECK(set.perms[0] == Permutation{0});
  }
  SUBCASE("n=1, N=2 is impossible") {
    CHECK_THROWS_AS(build_permutation_set(1, 2, 42), std::invalid_argument);
  }
  SUBCASE("n=2, N=24 enumerates the full group exactly once") {
    const auto set = build_permutation_set(2, 24, 7);
    REQUIRE(set.size() == 24);
    std::set<Permutation> unique(set.perms.begin(), set.perms.end());
    CHECK(unique.size() == 24);
    CHECK(set.perms[0] == Permutation{0, 1, 2, 3});
  }
  SUBCASE("n=2, N=25 exceeds the group size") {
    CHECK_THROWS_AS(build_permutation_set(2, 25, 7), std::invalid_argument);
  }
  SUBCASE("n=3, N=100: distinct permutations with pairwise Hamming >= 2") {
    for (std::uint64_t seed : {1ull, 99ull, 31337ull}) {
      const auto set = build_permutation_set(3, 100, seed);
      REQUIRE(set.size() == 100);
      CHECK(set.perms[0] == Permutation{0, 1, 2, 3, 4, 5, 6, 7, 8});
      for (int i = 0; i < set.size(); ++i)
        for (int j = i + 1; j < set.size(); ++j)
          CHECK(hamming_distance(set.perms[i], set.perms[j]) >= 2);
    }
  }
  SUBCASE("same (n, N, seed) gives an identical set") {
    const auto a = build_permutation_set(3, 50, 5);
    const auto b = build_permutation_set(3, 50, 5);
    CHECK(a.perms == b.perms);
    const auto c = build_permutation_set(3, 50, 6);
    CHECK(a.perms != c.perms);
  }
}

TEST_CASE("shuffle and restore") {
  SUBCASE("identity permutation leaves the map unchanged") {
    Rng rng(3);
    Tensor m = random_map(2, 6, 6, rng);
    CHECK(shuffle(m, {0, 1, 2, 3}).values() == m.values());
    CHECK(restore(m, {0, 1, 2, 3}).values() == m.values());
  }
  SUBCASE("hand trace on quadrants with perm [1,0,3,2]") {
    Tensor m = quadrant_map();
    Tensor s = shuffle(m, {1, 0, 3, 2});
    // output patch g reads input patch perm[g]
    CHECK(s.data()[0] == 1.0);   // top-left now holds patch 1
    CHECK(s.data()[2] == 0.0);   // top-right holds patch 0
    CHECK(s.data()[8] == 3.0);   // bottom-left holds patch 3
    CHECK(s.data()[10] == 2.0);  // bottom-right holds patch 2
    Tensor r = restore(s, {1, 0, 3, 2});
    CHECK(r.values() == m.values());
  }
  SUBCASE("restore(shuffle(m, pi), pi) == m bit-for-bit on random cases") {
    Rng rng(17);
    for (int t = 0; t < 1000; ++t) {
      const int n = 1 + rng.uniform_int(3);
      const int c = 1 + rng.uniform_int(3);
      Tensor m = random_map(c, n * 4, n * 2, rng);
      Permutation perm(static_cast<std::size_t>(n) * n);
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
      rng.shuffle(perm);
      CHECK(restore(shuffle(m, perm), perm).values() == m.values());
      CHECK(shuffle(restore(m, perm), perm).values() == m.values());
    }
  }
  SUBCASE("indivisible dimensions are rejected") {
    Tensor m({1, 5, 4});
    CHECK_THROWS_AS(shuffle(m, {1, 0, 3, 2}), std::invalid_argument);
  }
  SUBCASE("invalid permutation is rejected") {
    Tensor m({1, 4, 4});
    CHECK_THROWS_AS(shuffle(m, {0, 0, 3, 2}), std::invalid_argument);
    CHECK_THROWS_AS(shuffle(m, {0, 1, 2}), std::invalid_argument);
  }
}

TEST_CASE("sample_puzzle") {
  SUBCASE("N=1 always yields label 0 and an unchanged map") {
    Rng data_rng(1), rng(2);
    Tensor m = random_map(1, 4, 4, data_rng);
    const auto set = build_permutation_set(2, 1, 3);
    for (int i = 0; i < 10; ++i) {
      const auto inst = sample_puzzle(m, set, rng);
      CHECK(inst.label == 0);
      CHECK(inst.shuffled.values() == m.values());
    }
  }
  SUBCASE("fixed seed reproduces the label sequence") {
    Rng data_rng(1);
    Tensor m = random_map(1, 6, 6, data_rng);
    const auto set = build_permutation_set(3, 50, 3);
    std::vector<int> a, b;
    {
      Rng rng(77);
      for (int i = 0; i < 50; ++i) a.push_back(sample_puzzle(m, set, rng).label);
    }
    {
      Rng rng(77);
      for (int i = 0; i < 50; ++i) b.push_back(sample_puzzle(m, set, rng).label);
    }
    CHECK(a == b);
  }
  SUBCASE("labels are close to uniform over 10000 draws at N=100") {
    Rng data_rng(1), rng(5);
    Tensor m = random_map(1, 6, 6, data_rng);
    const auto set = build_permutation_set(3, 100, 3);
    std::vector<int> counts(100, 0);
    for (int i = 0; i < 10000; ++i) ++counts[static_cast<std::size_t>(
        sample_puzzle(m, set, rng).label)];
    for (int c : counts) {
      CHECK(c >= 70);
      CHECK(c <= 130);
    }
  }
  SUBCASE("restoring the shuffled puzzle with its own label reproduces the map") {
    Rng data_rng(4), rng(9);
    const auto set = build_permutation_set(2, 24, 3);
    for (int t = 0; t < 100; ++t) {
      Tensor m = random_map(2, 4, 6, data_rng);
      const auto inst = sample_puzzle(m, set, rng);
      CHECK(inst.label >= 0);
      CHECK(inst.label < set.size());
      CHECK(restore(inst.shuffled, set.perms[static_cast<std::size_t>(inst.label)]).values() ==
            m.values());
    }
  }
}

TEST_CASE("shuffle_on_tape scatters gradients back exactly") {
  Rng rng(21);
  Tensor m = random_map(2, 4, 4, rng);
  m.set_requires_grad(true);
  Permutation perm{3, 1, 0, 2};
  Tape tape;
  Tensor s = shuffle_on_tape(tape, m, perm);
  CHECK(s.values() == shuffle(m, perm).values());
  std::vector<double> ro(static_cast<std::size_t>(s.size()));
  Rng wrng(5);
  for (auto& v : ro) v = wrng.uniform(-1.0, 1.0);
  Tensor loss = tape.weighted_sum(s, ro);
  tape.backward(loss);
  // d loss / d m = readout weights routed through the inverse permutation.
  Tensor ro_t = Tensor::from(m.shape(), ro);
  Tensor expect = restore(ro_t, perm);
  for (std::int64_t i = 0; i < m.size(); ++i)
    CHECK(m.grad()[i] == doctest::Approx(expect.values()[static_cast<std::size_t>(i)]));
}

#include "ssdas/jigsaw.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ssdas {

namespace {

// (n^2)! capped so the comparison "N > (n^2)!" stays in range.
std::int64_t capped_factorial(int m, std::int64_t cap) {
  std::int64_t f = 1;
  for (int i = 2; i <= m; ++i) {
    f *= i;
    if (f >= cap) return cap;
  }
  return f;
}

void check_permutation(const Permutation& perm, int cells) {
  if (static_cast<int>(perm.size()) != cells)
    throw std::invalid_argument("permutation length does not match grid");
  std::vector<char> seen(static_cast<std::size_t>(cells), 0);
  for (int v : perm) {
    if (v < 0 || v >= cells || seen[static_cast<std::size_t>(v)])
      throw std::invalid_argument("not a valid permutation");
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

Tensor apply_grid_map(const Tensor& map, const Permutation& perm, bool inverse) {
  if (map.shape().size() != 3) throw std::invalid_argument("shuffle: expected [C,H,W] map");
  const int cells = static_cast<int>(perm.size());
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (n * n != cells) throw std::invalid_argument("shuffle: permutation is not over a square grid");
  check_permutation(perm, cells);
  const int c = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
  if (h % n != 0 || w % n != 0)
    throw std::invalid_argument("shuffle: spatial size not divisible by grid side");
  const int ph = h / n, pw = w / n;

  Tensor out(map.shape());
  const double* src = map.data();
  double* dst = out.data();
  for (int g = 0; g < cells; ++g) {
    const int from = inverse ? g : perm[static_cast<std::size_t>(g)];
    const int to = inverse ? perm[static_cast<std::size_t>(g)] : g;
    const int fy = (from / n) * ph, fx = (from % n) * pw;
    const int ty = (to / n) * ph, tx = (to % n) * pw;
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < ph; ++y) {
        const double* s = src + (static_cast<std::int64_t>(ci) * h + fy + y) * w + fx;
        double* d = dst + (static_cast<std::int64_t>(ci) * h + ty + y) * w + tx;
        std::copy(s, s + pw, d);
      }
  }
  return out;
}

}  // namespace

int hamming_distance(const Permutation& a, const Permutation& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

PermutationSet build_permutation_set(int n, int N, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("build_permutation_set: grid side must be >= 1");
  const int cells = n * n;
  const std::int64_t max_perms = capped_factorial(cells, 1'000'000'000);
  if (N < 1 || N > max_perms)
    throw std::invalid_argument("build_permutation_set: N out of range for this grid");

  Permutation identity(static_cast<std::size_t>(cells));
  std::iota(identity.begin(), identity.end(), 0);

  // Candidate pool: the full group when it is small, otherwise a seeded
  // sample (deduplicated) several times larger than N.
  std::vector<Permutation> pool;
  if (max_perms <= 40320) {  // up to 2x2 grids (4! = 24) and 8-cell oddities
    Permutation p = identity;
    do {
      pool.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
  } else {
    const std::size_t target = std::max<std::size_t>(static_cast<std::size_t>(4 * N), 512);
    std::set<Permutation> dedup;
    dedup.insert(identity);
    Rng rng(derive_seed(seed, "perm_pool"));
    while (dedup.size() < target + 1) {
      Permutation p = identity;
      rng.shuffle(p);
      dedup.insert(p);
    }
    pool.assign(dedup.begin(), dedup.end());
  }

  // Move the identity to the front; keep the rest in pool order.
  auto id_it = std::find(pool.begin(), pool.end(), identity);
  std::iter_swap(pool.begin(), id_it);

  PermutationSet set;
  set.grid_n = n;
  set.perms.push_back(identity);
  std::vector<char> taken(pool.size(), 0);
  taken[0] = 1;
  std::vector<int> min_dist(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) min_dist[i] = hamming_distance(pool[i], identity);

  while (set.size() < N) {
    int best = -1;
    int best_dist = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = static_cast<int>(i);
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    const Permutation& chosen = pool[static_cast<std::size_t>(best)];
    set.perms.push_back(chosen);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], hamming_distance(pool[i], chosen));
    }
  }
  return set;
}

Tensor shuffle(const Tensor& map, const Permutation& perm) {
  return apply_grid_map(map, perm, /*inverse=*/false);
}

Tensor restore(const Tensor& map, const Permutation& perm) {
  return apply_grid_map(map, perm, /*inverse=*/true);
}

Tensor shuffle_on_tape(Tape& tape, const Tensor& map, const Permutation& perm) {
  if (map.shape().size() != 3) throw std::invalid_argument("shuffle: expected [C,H,W] map");
  const int cells = static_cast<int>(perm.size());
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (n * n != cells) throw std::invalid_argument("shuffle: permutation is not over a square grid");
  check_permutation(perm, cells);
  const int c = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
  if (h % n != 0 || w % n != 0)
    throw std::invalid_argument("shuffle: spatial size not divisible by grid side");
  const int ph = h / n, pw = w / n;

  const bool needs = tape.recording() && map.requires_grad();
  Tensor out = tape.fresh(map.shape(), needs);
  {
    Tensor forwarded = shuffle(map, perm);
    std::copy(forwarded.values().begin(), forwarded.values().end(), out.data());
  }
  if (needs) {
    auto in_n = map.node();
    auto out_n = out.node();
    Permutation p = perm;
    tape.record([=, p = std::move(p)] {
      if (out_n->grad.empty()) return;
      in_n->ensure_grad();
      for (int g = 0; g < cells; ++g) {
        const int from = p[static_cast<std::size_t>(g)];
        const int fy = (from / n) * ph, fx = (from % n) * pw;
        const int ty = (g / n) * ph, tx = (g % n) * pw;
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < ph; ++y) {
            const double* gsrc =
                out_n->grad.data() + (static_cast<std::int64_t>(ci) * h + ty + y) * w + tx;
            double* gdst =
                in_n->grad.data() + (static_cast<std::int64_t>(ci) * h + fy + y) * w + fx;
            for (int x = 0; x < pw; ++x) gdst[x] += gsrc[x];
          }
      }
    });
  }
  return out;
}

PuzzleInstance sample_puzzle(const Tensor& map, const PermutationSet& set, Rng& rng) {
  if (set.size() < 1) throw std::invalid_argument("sample_puzzle: empty permutation set");
  PuzzleInstance inst;
  inst.label = rng.uniform_int(set.size());
  inst.shuffled = shuffle(map, set.perms[static_cast<std::size_t>(inst.label)]);
  return inst;
}

}  // namespace ssdas

#include "ssdas/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "ssdas/alignment.hpp"
#include "ssdas/jigsaw.hpp"
#include "ssdas/nets.hpp"

namespace ssdas {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes bounded away from zero so ReLU finite differences never
// straddle the kink.
Tensor random_tensor_off_kink(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) {
    const double u = rng.uniform(-0.95, 0.95);
    v = u >= 0.0 ? u + 0.05 : u - 0.05;
  }
  return t;
}

Tensor random_probs(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  const int c = t.shape()[0];
  const std::int64_t inner = t.size() / c;
  for (std::int64_t i = 0; i < inner; ++i) {
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      const double v = rng.uniform(0.05, 1.0);
      t.data()[k * inner + i] = v;
      sum += v;
    }
    for (int k = 0; k < c; ++k) t.data()[k * inner + i] /= sum;
  }
  return t;
}

std::vector<double> random_weights(std::int64_t n, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

FdReport merge_worst(const std::string& name, const std::vector<FdReport>& reports) {
  FdReport out{name, 0.0, 0};
  for (const auto& r : reports) {
    out.max_rel_err = std::max(out.max_rel_err, r.max_rel_err);
    out.coords_checked += r.coords_checked;
  }
  return out;
}

}  // namespace

std::vector<FdReport> run_gradient_suite(std::uint64_t seed, int points_per_primitive) {
  std::vector<FdReport> suite;
  Rng master(seed);
  const int pts = points_per_primitive;

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor in = random_tensor({2, 5, 5}, master);
      Tensor w = random_tensor({3, 2, 3, 3}, master);
      Tensor b = random_tensor({3}, master);
      const auto ro = random_weights(3 * 5 * 5, master);
      runs.push_back(check_gradients("conv2d", {in, w, b}, [=](Tape& t) {
        return t.weighted_sum(t.conv2d(in, w, b), ro);
      }));
    }
    suite.push_back(merge_worst("conv2d", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor_off_kink({3, 4, 4}, master);
      const auto ro = random_weights(x.size(), master);
      runs.push_back(check_gradients(
          "relu", {x}, [=](Tape& t) { return t.weighted_sum(t.relu(x), ro); }));
    }
    suite.push_back(merge_worst("relu", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor({3, 4}, master, -2.0, 2.0);
      const auto ro = random_weights(x.size(), master);
      runs.push_back(check_gradients("softmax", {x}, [=](Tape& t) {
        Tensor s0 = t.weighted_sum(t.softmax(x, 0), ro);
        Tensor s1 = t.weighted_sum(t.softmax(x, 1), ro);
        return t.add(s0, s1);
      }));
    }
    suite.push_back(merge_worst("softmax", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor probs = random_probs({5}, master);
      const int label = master.uniform_int(5);
      runs.push_back(check_gradients(
          "cross_entropy", {probs}, [=](Tape& t) { return t.cross_entropy(probs, label); }));
    }
    suite.push_back(merge_worst("cross_entropy", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor probs = random_probs({3, 4, 4}, master);
      std::vector<std::uint8_t> labels(16);
      for (auto& l : labels) l = static_cast<std::uint8_t>(master.uniform_int(3));
      runs.push_back(check_gradients("cross_entropy_map", {probs}, [=](Tape& t) {
        return t.cross_entropy_map(probs, labels);
      }));
    }
    suite.push_back(merge_worst("cross_entropy_map", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor({2, 4, 4}, master);
      const auto ro = random_weights(2 * 2 * 2, master);
      runs.push_back(check_gradients("avg_pool_grid", {x}, [=](Tape& t) {
        return t.weighted_sum(t.avg_pool_grid(x, 2), ro);
      }));
    }
    suite.push_back(merge_worst("avg_pool_grid", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor({6}, master);
      Tensor w = random_tensor({4, 6}, master);
      Tensor b = random_tensor({4}, master);
      const auto ro = random_weights(4, master);
      runs.push_back(check_gradients("linear", {x, w, b}, [=](Tape& t) {
        return t.weighted_sum(t.linear(x, w, b), ro);
      }));
    }
    suite.push_back(merge_worst("linear", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor({2, 4, 4}, master);
      const auto ro = random_weights(2 * 2 * 2, master);
      runs.push_back(check_gradients("crop", {x}, [=](Tape& t) {
        return t.weighted_sum(t.crop(x, 1, 1, 2, 2), ro);
      }));
    }
    suite.push_back(merge_worst("crop", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor x = random_tensor({2, 4, 4}, master);
      Permutation perm{0, 1, 2, 3};
      master.shuffle(perm);
      const auto ro = random_weights(x.size(), master);
      runs.push_back(check_gradients("shuffle", {x}, [=](Tape& t) {
        return t.weighted_sum(shuffle_on_tape(t, x, perm), ro);
      }));
    }
    suite.push_back(merge_worst("shuffle", runs));
  }

  {
    std::vector<FdReport> runs;
    for (int p = 0; p < pts; ++p) {
      Tensor a = random_tensor({4}, master);
      Tensor b = random_tensor({4}, master);
      const auto ro = random_weights(4, master);
      runs.push_back(check_gradients("arithmetic", {a, b}, [=](Tape& t) {
        Tensor s1 = t.weighted_sum(t.add(a, b), ro);
        Tensor s2 = t.weighted_sum(t.scale(a, 1.3), ro);
        std::vector<Tensor> scalars{s1, s2};
        std::vector<double> w{0.5, 2.0};
        return t.weighted_mean(scalars, w);
      }));
    }
    suite.push_back(merge_worst("arithmetic", runs));
  }

  {
    // Composed segmentation + jigsaw loss on a 4-image 8x8 batch; model sizes
    // chosen to keep the composed parameter count a few thousand.
    Rng rng(derive_seed(seed, "composed"));
    SegModel model(4, rng.next_u64(), /*hidden1=*/8, /*hidden2=*/12);
    JigsawClassifier clf(4, 8, 8, 2, 24, rng.next_u64(), /*hidden=*/8);
    PermutationSet set = build_permutation_set(2, 24, rng.next_u64());

    std::vector<Tensor> images;
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
      images.push_back(random_tensor({3, 8, 8}, rng, 0.0, 1.0));
      std::vector<std::uint8_t> m(64);
      for (auto& v : m) v = static_cast<std::uint8_t>(rng.uniform_int(4));
      masks.push_back(m);
      labels.push_back(rng.uniform_int(set.size()));
    }

    std::vector<Tensor> leaves = model.parameters();
    for (const Tensor& p : clf.parameters()) leaves.push_back(p);

    auto build = [=, &model, &clf, &set](Tape& t) {
      std::vector<Tensor> scalars;
      std::vector<Tensor> maps;
      for (std::size_t i = 0; i < images.size(); ++i) {
        Tensor probs = model.forward(t, images[i]);
        scalars.push_back(t.cross_entropy_map(probs, masks[i]));
        maps.push_back(probs);
      }
      auto jig = jig_losses(t, maps, clf, set, labels);
      for (Tensor& l : jig) scalars.push_back(t.scale(l, 0.1));
      return t.mean(scalars);
    };
    Rng sampler(derive_seed(seed, "composed_coords"));
    suite.push_back(check_gradients_sampled("composed_g_plus_j", leaves, build, 100, sampler));
  }

  return suite;
}

}  // namespace ssdas

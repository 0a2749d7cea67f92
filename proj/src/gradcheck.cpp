#include "ssdas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

namespace ssdas {

namespace {

double rel_err(double a, double f) {
  const double denom = std::max({std::fabs(a), std::fabs(f), 1e-3});
  return std::fabs(a - f) / denom;
}

double eval_loss(const std::function<Tensor(Tape&)>& build_loss) {
  Tape tape;
  Tape::NoGrad guard(tape);
  return build_loss(tape).scalar();
}

FdReport run_check(const std::string& name, std::vector<Tensor>& leaves,
                   const std::function<Tensor(Tape&)>& build_loss, double h,
                   const std::vector<std::pair<int, std::int64_t>>& coords) {
  for (Tensor& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  Tensor loss = build_loss(tape);
  tape.backward(loss);

  FdReport report{name, 0.0, 0};
  for (const auto& [leaf, idx] : coords) {
    Tensor& t = leaves[static_cast<std::size_t>(leaf)];
    const double analytic = t.has_grad() ? t.grad()[idx] : 0.0;
    const double saved = t.data()[idx];
    t.data()[idx] = saved + h;
    const double up = eval_loss(build_loss);
    t.data()[idx] = saved - h;
    const double down = eval_loss(build_loss);
    t.data()[idx] = saved;
    const double fd = (up - down) / (2.0 * h);
    report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic, fd));
    ++report.coords_checked;
  }
  return report;
}

}  // namespace

FdReport check_gradients(const std::string& name, std::vector<Tensor> leaves,
                         const std::function<Tensor(Tape&)>& build_loss, double h,
                         int coords_per_leaf, Rng* sampler) {
  std::vector<std::pair<int, std::int64_t>> coords;
  for (int leaf = 0; leaf < static_cast<int>(leaves.size()); ++leaf) {
    const std::int64_t n = leaves[static_cast<std::size_t>(leaf)].size();
    if (coords_per_leaf < 0 || coords_per_leaf >= n) {
      for (std::int64_t i = 0; i < n; ++i) coords.emplace_back(leaf, i);
    } else {
      if (!sampler) throw std::invalid_argument("check_gradients: sampler required");
      for (int c = 0; c < coords_per_leaf; ++c)
        coords.emplace_back(leaf, sampler->uniform_int(static_cast<int>(n)));
    }
  }
  return run_check(name, leaves, build_loss, h, coords);
}

FdReport check_gradients_sampled(const std::string& name, std::vector<Tensor> leaves,
                                 const std::function<Tensor(Tape&)>& build_loss,
                                 int total_coords, Rng& sampler, double h) {
  std::int64_t total = 0;
  for (const Tensor& t : leaves) total += t.size();
  std::vector<std::pair<int, std::int64_t>> coords;
  for (int c = 0; c < total_coords; ++c) {
    std::int64_t flat = (static_cast<std::int64_t>(sampler.next_u64() >> 1)) % total;
    for (int leaf = 0; leaf < static_cast<int>(leaves.size()); ++leaf) {
      const std::int64_t n = leaves[static_cast<std::size_t>(leaf)].size();
      if (flat < n) {
        coords.emplace_back(leaf, flat);
        break;
      }
      flat -= n;
    }
  }
  return run_check(name, leaves, build_loss, h, coords);
}

}  // namespace ssdas

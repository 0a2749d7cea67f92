#include "ssdas/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ssdas {

double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power) {
  if (max_iter < 1) throw std::invalid_argument("poly_lr: max_iter must be >= 1");
  if (iter < 0 || iter > max_iter) throw std::invalid_argument("poly_lr: iter out of range");
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base_lr * std::pow(frac, power);
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, SgdOptions opts)
    : params_(std::move(params)), opts_(opts) {
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(p.values().size(), 0.0);
}

void SgdOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    std::vector<double>& v = velocity_[i];
    const double* g = p.grad();  // zeroed if never touched by backward
    double* w = p.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = opts_.momentum * v[j] + g[j] + opts_.weight_decay * w[j];
      w[j] -= lr * v[j];
    }
  }
  zero_grad();
}

}  // namespace ssdas

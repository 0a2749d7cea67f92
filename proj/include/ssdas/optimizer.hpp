#pragma once

#include <cstdint>
#include <vector>

#include "ssdas/tensor.hpp"

namespace ssdas {

// base_lr * (1 - iter/max_iter)^power. iter must lie in [0, max_iter].
double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power);

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// SGD with momentum and decoupled-from-nothing classic weight decay:
//   v <- momentum*v + grad + weight_decay*param
//   param <- param - lr*v
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, SgdOptions opts);

  void zero_grad();
  void step(double lr);

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdOptions opts_;
};

}  // namespace ssdas

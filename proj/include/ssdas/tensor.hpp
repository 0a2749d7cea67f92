#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace ssdas {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until ensure_grad()
  bool requires_grad = false;
  const void* tape_tag = nullptr;  // tape that produced this node, if any

  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Shared handle to a dense row-major double tensor with an optional gradient
// accumulator. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar_value(double v);

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  std::int64_t size() const { return n_->size(); }
  double* data() { return n_->value.data(); }
  const double* data() const { return n_->value.data(); }
  std::vector<double>& values() { return n_->value; }
  const std::vector<double>& values() const { return n_->value; }
  double scalar() const;

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    n_->requires_grad = rg;
    return *this;
  }
  bool has_grad() const { return !n_->grad.empty(); }
  // Allocates (zeroed) on first use.
  double* grad() {
    n_->ensure_grad();
    return n_->grad.data();
  }
  const std::vector<double>& grad_values() const { return n_->grad; }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  std::shared_ptr<TensorNode> node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

// Grad-free copy of a tensor's current values.
Tensor detached(const Tensor& t);

bool all_finite(const Tensor& t);

// Records primitive operations in forward order; backward() replays them in
// exact reverse order, accumulating gradients into every node that requires
// them. One tape per loss; not thread-safe across concurrent callers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- graph construction (also used by higher layers to add domain ops) --
  Tensor fresh(std::vector<int> shape, bool requires_grad);
  void record(std::function<void()> backward_step);
  bool recording() const { return recording_; }
  void set_recording(bool r) { recording_ = r; }

  class NoGrad {
   public:
    explicit NoGrad(Tape& t) : t_(t), prev_(t.recording_) { t_.recording_ = false; }
    ~NoGrad() { t_.recording_ = prev_; }

   private:
    Tape& t_;
    bool prev_;
  };

  // -- primitives --
  // input [Cin,H,W], kernels [Cout,Cin,k,k] (k odd, same padding), bias [Cout].
  Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
  Tensor relu(const Tensor& x);
  // Numerically stabilized by max subtraction; slices along `axis` sum to 1.
  Tensor softmax(const Tensor& x, int axis);
  // -log(probs[label]) with the probability clamped at 1e-12.
  Tensor cross_entropy(const Tensor& probs, int label);
  // probs [C,H,W], labels row-major [H*W]; mean per-pixel cross entropy.
  Tensor cross_entropy_map(const Tensor& probs, std::span<const std::uint8_t> labels);
  // [C,H,W] -> [C,n,n] mean pooling over an n-by-n grid of equal cells.
  Tensor avg_pool_grid(const Tensor& x, int grid_n);
  // x flattened to [D]; weight [O,D]; bias [O].
  Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
  // [C,H,W] -> [C,h,w] starting at (y0,x0).
  Tensor crop(const Tensor& x, int y0, int x0, int h, int w);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double s);
  // (1/B) * sum_i weights[i] * scalars[i].
  Tensor weighted_mean(std::span<const Tensor> scalars, std::span<const double> weights);
  Tensor mean(std::span<const Tensor> scalars);
  // Scalar dot product with a constant vector over the flattened tensor.
  Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. The loss must
  // be a scalar produced by this tape. Single-shot: the tape is consumed.
  void backward(const Tensor& scalar_loss);

  std::size_t num_steps() const { return steps_.size(); }
  void clear();

 private:
  std::vector<std::function<void()>> steps_;
  bool recording_ = true;
  bool consumed_ = false;
};

namespace numeric {
inline constexpr double kLogClampEps = 1e-12;
}

}  // namespace ssdas

#include "ssdas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ssdas/kernels.hpp"

namespace ssdas {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t p = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    p *= d;
  }
  return p;
}

void check_3d(const Tensor& t, const char* what) {
  if (t.shape().size() != 3)
    throw std::invalid_argument(std::string(what) + ": expected a [C,H,W] tensor");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) {
  const auto count = shape_product(shape);
  n_ = std::make_shared<TensorNode>();
  n_->shape = std::move(shape);
  n_->value.assign(static_cast<std::size_t>(count), fill);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  if (shape_product(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("tensor data length does not match shape");
  Tensor t;
  t.n_ = std::make_shared<TensorNode>();
  t.n_->shape = std::move(shape);
  t.n_->value = std::move(values);
  return t;
}

Tensor Tensor::scalar_value(double v) { return from({1}, {v}); }

double Tensor::scalar() const {
  if (size() != 1) throw std::invalid_argument("tensor is not a scalar");
  return n_->value[0];
}

Tensor detached(const Tensor& t) { return Tensor::from(t.shape(), t.values()); }

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tape::fresh(std::vector<int> shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.node()->requires_grad = requires_grad;
  t.node()->tape_tag = this;
  return t;
}

void Tape::record(std::function<void()> backward_step) {
  if (recording_) steps_.push_back(std::move(backward_step));
}

void Tape::clear() {
  steps_.clear();
  consumed_ = false;
}

void Tape::backward(const Tensor& scalar_loss) {
  if (!scalar_loss.defined() || scalar_loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  if (scalar_loss.node()->tape_tag != this)
    throw std::invalid_argument("backward: loss was not produced by this tape");
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  consumed_ = true;
  scalar_loss.node()->ensure_grad();
  scalar_loss.node()->grad[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

Tensor Tape::conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  check_3d(input, "conv2d input");
  if (kernels.shape().size() != 4)
    throw std::invalid_argument("conv2d: kernels must be [Cout,Cin,k,k]");
  const int cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const int cout = kernels.shape()[0], k = kernels.shape()[2];
  if (kernels.shape()[1] != cin)
    throw std::invalid_argument("conv2d: kernel/input channel mismatch");
  if (kernels.shape()[3] != k || k % 2 == 0)
    throw std::invalid_argument("conv2d: kernels must be square with odd size");
  if (bias.shape() != std::vector<int>{cout})
    throw std::invalid_argument("conv2d: bias must be [Cout]");

  const bool needs =
      recording() && (input.requires_grad() || kernels.requires_grad() || bias.requires_grad());
  Tensor out = fresh({cout, h, w}, needs);
  const kernels::ConvDims dims{cin, cout, h, w, k};
  const kernels::Backend& bk = kernels::active_backend();
  bk.conv2d_forward(dims, input.data(), kernels.data(), bias.data(), out.data());
  if (needs) {
    auto in_n = input.node();
    auto w_n = kernels.node();
    auto b_n = bias.node();
    auto out_n = out.node();
    const bool want_in = input.requires_grad();
    const bool want_w = kernels.requires_grad();
    const bool want_b = bias.requires_grad();
    record([=, &bk] {
      if (out_n->grad.empty()) return;
      const double* g = out_n->grad.data();
      if (want_in) {
        in_n->ensure_grad();
        bk.conv2d_backward_input(dims, w_n->value.data(), g, in_n->grad.data());
      }
      if (want_w || want_b) {
        double* dw = nullptr;
        double* db = nullptr;
        if (want_w) {
          w_n->ensure_grad();
          dw = w_n->grad.data();
        }
        if (want_b) {
          b_n->ensure_grad();
          db = b_n->grad.data();
        }
        bk.conv2d_backward_params(dims, in_n->value.data(), g, dw, db);
      }
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh(x.shape(), needs);
  const kernels::Backend& bk = kernels::active_backend();
  bk.relu_forward(x.data(), out.data(), x.values().size());
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    record([=, &bk] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      bk.relu_backward(x_n->value.data(), out_n->grad.data(), x_n->grad.data(),
                       x_n->value.size());
    });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& x, int axis) {
  const auto& shape = x.shape();
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw std::invalid_argument("softmax: invalid axis");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
  const int n = shape[axis];

  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh(shape, needs);
  const double* xv = x.data();
  double* yv = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * n * inner + i;
      double m = xv[base];
      for (int c = 1; c < n; ++c) m = std::max(m, xv[base + c * inner]);
      double sum = 0.0;
      for (int c = 0; c < n; ++c) {
        const double e = std::exp(xv[base + c * inner] - m);
        yv[base + c * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int c = 0; c < n; ++c) yv[base + c * inner] *= inv;
    }
  }
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    record([=] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      const double* y = out_n->value.data();
      const double* dy = out_n->grad.data();
      double* dx = x_n->grad.data();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
          const std::int64_t base = o * n * inner + i;
          double dot = 0.0;
          for (int c = 0; c < n; ++c) dot += dy[base + c * inner] * y[base + c * inner];
          for (int c = 0; c < n; ++c) {
            const std::int64_t idx = base + c * inner;
            dx[idx] += y[idx] * (dy[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::cross_entropy(const Tensor& probs, int label) {
  if (probs.shape().size() != 1)
    throw std::invalid_argument("cross_entropy: probs must be a vector");
  const int k = probs.shape()[0];
  if (label < 0 || label >= k) throw std::invalid_argument("cross_entropy: label out of range");
  const bool needs = recording() && probs.requires_grad();
  Tensor out = fresh({1}, needs);
  const double p = probs.data()[label];
  const double pc = std::max(p, numeric::kLogClampEps);
  out.data()[0] = -std::log(pc);
  if (needs) {
    auto p_n = probs.node();
    auto out_n = out.node();
    record([=] {
      if (out_n->grad.empty()) return;
      p_n->ensure_grad();
      const double pv = p_n->value[label];
      if (pv >= numeric::kLogClampEps) p_n->grad[label] += out_n->grad[0] * (-1.0 / pv);
    });
  }
  return out;
}

Tensor Tape::cross_entropy_map(const Tensor& probs, std::span<const std::uint8_t> labels) {
  check_3d(probs, "cross_entropy_map probs");
  const int c = probs.shape()[0], h = probs.shape()[1], w = probs.shape()[2];
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
  if (static_cast<std::int64_t>(labels.size()) != pixels)
    throw std::invalid_argument("cross_entropy_map: label count != pixel count");
  for (std::uint8_t l : labels)
    if (l >= c) throw std::invalid_argument("cross_entropy_map: label out of range");

  const bool needs = recording() && probs.requires_grad();
  Tensor out = fresh({1}, needs);
  const double* pv = probs.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < pixels; ++i) {
    const double p = pv[static_cast<std::int64_t>(labels[i]) * pixels + i];
    acc += -std::log(std::max(p, numeric::kLogClampEps));
  }
  const double inv = 1.0 / static_cast<double>(pixels);
  out.data()[0] = acc * inv;
  if (needs) {
    auto p_n = probs.node();
    auto out_n = out.node();
    std::vector<std::uint8_t> lab(labels.begin(), labels.end());
    record([=, lab = std::move(lab)] {
      if (out_n->grad.empty()) return;
      p_n->ensure_grad();
      const double g = out_n->grad[0] * inv;
      for (std::int64_t i = 0; i < pixels; ++i) {
        const std::int64_t idx = static_cast<std::int64_t>(lab[i]) * pixels + i;
        const double p = p_n->value[idx];
        if (p >= numeric::kLogClampEps) p_n->grad[idx] += g * (-1.0 / p);
      }
    });
  }
  return out;
}

Tensor Tape::avg_pool_grid(const Tensor& x, int grid_n) {
  check_3d(x, "avg_pool_grid input");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (grid_n <= 0 || h % grid_n != 0 || w % grid_n != 0)
    throw std::invalid_argument("avg_pool_grid: spatial size not divisible by grid");
  const int ch = h / grid_n, cw = w / grid_n;
  const double inv = 1.0 / (static_cast<double>(ch) * cw);

  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh({c, grid_n, grid_n}, needs);
  const double* xv = x.data();
  double* yv = out.data();
  for (int ci = 0; ci < c; ++ci)
    for (int gy = 0; gy < grid_n; ++gy)
      for (int gx = 0; gx < grid_n; ++gx) {
        double acc = 0.0;
        for (int yy = 0; yy < ch; ++yy)
          for (int xx = 0; xx < cw; ++xx)
            acc += xv[(static_cast<std::int64_t>(ci) * h + gy * ch + yy) * w + gx * cw + xx];
        yv[(static_cast<std::int64_t>(ci) * grid_n + gy) * grid_n + gx] = acc * inv;
      }
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    record([=] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int gy = 0; gy < grid_n; ++gy)
          for (int gx = 0; gx < grid_n; ++gx) {
            const double g =
                out_n->grad[(static_cast<std::int64_t>(ci) * grid_n + gy) * grid_n + gx] * inv;
            for (int yy = 0; yy < ch; ++yy)
              for (int xx = 0; xx < cw; ++xx)
                x_n->grad[(static_cast<std::int64_t>(ci) * h + gy * ch + yy) * w + gx * cw +
                          xx] += g;
          }
    });
  }
  return out;
}

Tensor Tape::linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.shape().size() != 2) throw std::invalid_argument("linear: weight must be [O,D]");
  const int out_dim = weight.shape()[0], in_dim = weight.shape()[1];
  if (x.size() != in_dim)
    throw std::invalid_argument("linear: input size does not match weight columns");
  if (bias.shape() != std::vector<int>{out_dim})
    throw std::invalid_argument("linear: bias must be [O]");

  const bool needs =
      recording() && (x.requires_grad() || weight.requires_grad() || bias.requires_grad());
  Tensor out = fresh({out_dim}, needs);
  const double* xv = x.data();
  const double* wv = weight.data();
  double* yv = out.data();
  for (int o = 0; o < out_dim; ++o) {
    double acc = bias.data()[o];
    const double* wr = wv + static_cast<std::int64_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) acc += wr[i] * xv[i];
    yv[o] = acc;
  }
  if (needs) {
    auto x_n = x.node();
    auto w_n = weight.node();
    auto b_n = bias.node();
    auto out_n = out.node();
    const bool want_x = x.requires_grad();
    const bool want_w = weight.requires_grad();
    const bool want_b = bias.requires_grad();
    record([=] {
      if (out_n->grad.empty()) return;
      const double* dy = out_n->grad.data();
      if (want_x) {
        x_n->ensure_grad();
        for (int o = 0; o < out_dim; ++o) {
          const double g = dy[o];
          const double* wr = w_n->value.data() + static_cast<std::int64_t>(o) * in_dim;
          for (int i = 0; i < in_dim; ++i) x_n->grad[i] += g * wr[i];
        }
      }
      if (want_w) {
        w_n->ensure_grad();
        for (int o = 0; o < out_dim; ++o) {
          const double g = dy[o];
          double* dwr = w_n->grad.data() + static_cast<std::int64_t>(o) * in_dim;
          for (int i = 0; i < in_dim; ++i) dwr[i] += g * x_n->value[i];
        }
      }
      if (want_b) {
        b_n->ensure_grad();
        for (int o = 0; o < out_dim; ++o) b_n->grad[o] += dy[o];
      }
    });
  }
  return out;
}

Tensor Tape::crop(const Tensor& x, int y0, int x0, int h, int w) {
  check_3d(x, "crop input");
  const int c = x.shape()[0], fh = x.shape()[1], fw = x.shape()[2];
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > fh || x0 + w > fw)
    throw std::invalid_argument("crop: window out of bounds");
  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh({c, h, w}, needs);
  const double* xv = x.data();
  double* yv = out.data();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        yv[(static_cast<std::int64_t>(ci) * h + y) * w + xx] =
            xv[(static_cast<std::int64_t>(ci) * fh + y0 + y) * fw + x0 + xx];
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    record([=] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            x_n->grad[(static_cast<std::int64_t>(ci) * fh + y0 + y) * fw + x0 + xx] +=
                out_n->grad[(static_cast<std::int64_t>(ci) * h + y) * w + xx];
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  const bool needs = recording() && (a.requires_grad() || b.requires_grad());
  Tensor out = fresh(a.shape(), needs);
  const double* av = a.data();
  const double* bv = b.data();
  double* yv = out.data();
  const std::size_t n = a.values().size();
  for (std::size_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
  if (needs) {
    auto a_n = a.node();
    auto b_n = b.node();
    auto out_n = out.node();
    const bool want_a = a.requires_grad();
    const bool want_b = b.requires_grad();
    record([=] {
      if (out_n->grad.empty()) return;
      if (want_a) {
        a_n->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) a_n->grad[i] += out_n->grad[i];
      }
      if (want_b) {
        b_n->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) b_n->grad[i] += out_n->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& x, double s) {
  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh(x.shape(), needs);
  const double* xv = x.data();
  double* yv = out.data();
  const std::size_t n = x.values().size();
  for (std::size_t i = 0; i < n; ++i) yv[i] = xv[i] * s;
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    record([=] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) x_n->grad[i] += out_n->grad[i] * s;
    });
  }
  return out;
}

Tensor Tape::weighted_mean(std::span<const Tensor> scalars, std::span<const double> weights) {
  if (scalars.empty()) throw std::invalid_argument("weighted_mean: empty batch");
  if (scalars.size() != weights.size())
    throw std::invalid_argument("weighted_mean: weight/batch length mismatch");
  bool any_grad = false;
  for (const Tensor& t : scalars) {
    if (t.size() != 1) throw std::invalid_argument("weighted_mean: inputs must be scalars");
    any_grad = any_grad || t.requires_grad();
  }
  const bool needs = recording() && any_grad;
  Tensor out = fresh({1}, needs);
  const double inv = 1.0 / static_cast<double>(scalars.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) acc += weights[i] * scalars[i].data()[0];
  out.data()[0] = acc * inv;
  if (needs) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<char> want;
    nodes.reserve(scalars.size());
    for (const Tensor& t : scalars) {
      nodes.push_back(t.node());
      want.push_back(t.requires_grad() ? 1 : 0);
    }
    std::vector<double> w(weights.begin(), weights.end());
    auto out_n = out.node();
    record([=, nodes = std::move(nodes), want = std::move(want), w = std::move(w)] {
      if (out_n->grad.empty()) return;
      const double g = out_n->grad[0] * inv;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!want[i]) continue;
        nodes[i]->ensure_grad();
        nodes[i]->grad[0] += g * w[i];
      }
    });
  }
  return out;
}

Tensor Tape::mean(std::span<const Tensor> scalars) {
  std::vector<double> ones(scalars.size(), 1.0);
  return weighted_mean(scalars, ones);
}

Tensor Tape::weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (static_cast<std::size_t>(x.size()) != weights.size())
    throw std::invalid_argument("weighted_sum: weight length mismatch");
  const bool needs = recording() && x.requires_grad();
  Tensor out = fresh({1}, needs);
  double acc = 0.0;
  const double* xv = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * xv[i];
  out.data()[0] = acc;
  if (needs) {
    auto x_n = x.node();
    auto out_n = out.node();
    std::vector<double> w(weights.begin(), weights.end());
    record([=, w = std::move(w)] {
      if (out_n->grad.empty()) return;
      x_n->ensure_grad();
      const double g = out_n->grad[0];
      for (std::size_t i = 0; i < w.size(); ++i) x_n->grad[i] += g * w[i];
    });
  }
  return out;
}

}  // namespace ssdas

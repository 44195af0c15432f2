#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations on tensors
// that require gradients record their parents and a backward closure; calling
// backward() on a scalar walks the recorded graph in reverse topological
// order. Leaf tensors that require gradients (parameters) and tensors marked
// with retain_grad() accumulate into their grad buffer; every other node's
// gradient is transient and dropped after the pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "headprune/errors.hpp"
#include "headprune/rng.hpp"

namespace headprune {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // persistent: parameters and retained tensors
  std::vector<double> work;  // transient gradient during one backward pass
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
  bool retain = false;
  bool leaf = true;
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Gradient buffer of `p` for the current pass, allocated on first use.
inline std::vector<double>& work_of(Node& p) {
  if (p.work.empty()) p.work.assign(p.data.size(), 0.0);
  return p.work;
}

}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
    for (auto extent : shape) {
      if (extent == 0) throw ConfigError("tensor: zero extent in shape " + shape_str(shape));
    }
    if (shape.empty()) shape = {1};
    if (numel(shape) != data.size()) {
      throw ConfigError("tensor: shape " + shape_str(shape) + " does not hold " +
                        std::to_string(data.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape, std::vector<double>(numel(shape))); }
  static Tensor full(const Shape& shape, double v) { return Tensor(shape, std::vector<double>(numel(shape), v)); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    t.node_->grad.assign(t.node_->data.size(), 0.0);
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  const char* op() const { return node_->op; }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  /// Accumulated gradient; empty unless this is a parameter or retained.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Keeps this non-leaf tensor's gradient after backward(). Reads as zero
  /// if the loss turns out not to depend on it.
  void retain_grad() {
    if (node_->leaf && node_->requires_grad) return;
    node_->retain = true;
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  }

  /// Reverse-mode pass from this scalar.
  void backward() const;

  /// Same values, no graph.
  Tensor detach() const { return Tensor(shape(), node_->data); }

  /// Identity of the underlying node, for tests that inspect sharing.
  const void* id() const noexcept { return node_.get(); }

 private:
  friend Tensor make_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
  std::shared_ptr<detail::Node> node_;
};

/// Wraps a freshly computed value as a graph node when any input tracks
/// gradients and recording is enabled.
inline Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data));
  out.node_->op = op;
  const bool track = detail::grad_mode() &&
                     std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    out.node_->requires_grad = true;
    out.node_->leaf = false;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

inline void Tensor::backward() const {
  if (size() != 1) throw UsageError("backward() requires a scalar, got shape " + shape_str(shape()));
  if (!node_->requires_grad) throw UsageError("backward() on a tensor with no recorded graph");

  // Post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->work.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->work.empty() && node->backward_fn) node->backward_fn(*node);
  }
  for (detail::Node* node : order) {
    if ((node->leaf || node->retain) && !node->work.empty()) {
      if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
      for (std::size_t i = 0; i < node->work.size(); ++i) node->grad[i] += node->work[i];
    }
    std::vector<double>().swap(node->work);
  }
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(x.shape(), std::move(out), op, {x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    auto& g = work_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i] * deriv(p.data[i], self.data[i]);
  });
}

}  // namespace detail

/// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = &B[p * n];
      double* crow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    const auto& G = self.work;
    if (pa.requires_grad) {
      auto& ga = detail::work_of(pa);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * pb.data[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = detail::work_of(pb);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ConfigError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return make_result({n, m}, std::move(out), "transpose", {a}, [m, n](detail::Node& self) {
    auto& g = detail::work_of(*self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.work[j * m + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& g = detail::work_of(*parent);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = detail::work_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::work_of(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.work[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = detail::work_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = detail::work_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i] * pa.data[i];
    }
  });
}

/// x[..., n] + bias[n], broadcast over all leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ConfigError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                      shape_str(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + bias[i % n];
  return make_result(x.shape(), std::move(out), "add_bias", {x, bias}, [n](detail::Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = detail::work_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::work_of(*self.parents[1]);
      for (std::size_t i = 0; i < self.work.size(); ++i) g[i % n] += self.work[i];
    }
  });
}

/// Multiplication by a constant that is not part of the graph.
inline Tensor scale(const Tensor& x, double c) {
  return detail::unary("scale", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary("sigmoid", x, [](double v) { return sigmoid(v); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

/// Clip to [lo, hi]; gradient passes only strictly inside the interval.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

/// Softmax over the last axis after adding `additive_mask`, which is either
/// empty, one value per key (broadcast over rows), or one value per element.
inline Tensor softmax(const Tensor& x, std::span<const double> additive_mask = {}) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  if (!additive_mask.empty() && additive_mask.size() != n && additive_mask.size() != x.size()) {
    throw ConfigError("softmax: mask of " + std::to_string(additive_mask.size()) + " values for input " +
                      shape_str(x.shape()));
  }
  const bool per_row = additive_mask.size() == n;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double* y = &out[r * n];
    double hi = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      double v = x[r * n + j];
      if (!additive_mask.empty()) v += additive_mask[per_row ? j : r * n + j];
      y[j] = v;
      hi = std::max(hi, v);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(y[j] - hi);
      total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  return make_result(x.shape(), std::move(out), "softmax", {x}, [n, rows](detail::Node& self) {
    auto& g = detail::work_of(*self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &self.data[r * n];
      const double* dy = &self.work[r * n];
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

/// Normalizes each row over the last axis, then applies gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ConfigError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                      " do not match input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  std::vector<double> normalized(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[r * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[r * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized[r * n + j] = (x[r * n + j] - mean) * inv_std[r];
      out[r * n + j] = normalized[r * n + j] * gamma[j] + beta[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [n, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pg = *self.parents[1];
        detail::Node& pb = *self.parents[2];
        const auto& dy = self.work;
        if (pg.requires_grad) {
          auto& g = detail::work_of(pg);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i % n] += dy[i] * normalized[i];
        }
        if (pb.requires_grad) {
          auto& g = detail::work_of(pb);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i % n] += dy[i];
        }
        if (px.requires_grad) {
          auto& g = detail::work_of(px);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxhat = dy[r * n + j] * pg.data[j];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * normalized[r * n + j];
            }
            mean_dxhat *= inv_n;
            mean_dxhat_xhat *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxhat = dy[r * n + j] * pg.data[j];
              g[r * n + j] += inv_std[r] * (dxhat - mean_dxhat - normalized[r * n + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

namespace detail {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

/// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ConfigError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    Shape probe = t.shape();
    if (probe.size() != first.size()) throw ConfigError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(probe));
    out_shape[axis] += probe[axis];
    probe[axis] = first[axis];
    if (probe != first) throw ConfigError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(t.shape()));
  }
  const auto [outer, inner] = detail::split_at(first, axis);
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t w = t.dim(axis) * inner;
    const auto src = t.data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(&src[o * w], w, &out[o * out_row + offset]);
    widths.push_back(w);
    offset += w;
  }
  return make_result(out_shape, std::move(out), "concat", parts,
                     [outer = outer, out_row, widths = std::move(widths)](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         const std::size_t w = widths[p];
                         if (self.parents[p]->requires_grad) {
                           auto& g = detail::work_of(*self.parents[p]);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < w; ++i) g[o * w + i] += self.work[o * out_row + off + i];
                         }
                         off += w;
                       }
                     });
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw ConfigError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                      std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  const auto [outer, inner] = detail::split_at(x.shape(), axis);
  const std::size_t src_row = x.dim(axis) * inner;
  const std::size_t w = (end - begin) * inner;
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * w);
  const auto src = x.data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(&src[o * src_row + begin * inner], w, &out[o * w]);
  return make_result(out_shape, std::move(out), "slice", {x},
                     [outer = outer, src_row, w, start = begin * inner](detail::Node& self) {
                       auto& g = detail::work_of(*self.parents[0]);
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t i = 0; i < w; ++i) g[o * src_row + start + i] += self.work[o * w + i];
                     });
}

/// Sum of all elements, shape [1].
inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, "sum", {x}, [](detail::Node& self) {
    auto& g = detail::work_of(*self.parents[0]);
    for (auto& v : g) v += self.work[0];
  });
}

/// Mean of all elements, shape [1].
inline Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  return make_result({1}, {total / n}, "mean", {x}, [n](detail::Node& self) {
    auto& g = detail::work_of(*self.parents[0]);
    for (auto& v : g) v += self.work[0] / n;
  });
}

/// Rows of `table` [V,d] selected by `ids` -> [len(ids), d].
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ConfigError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  if (ids.empty()) throw DataError("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw DataError("token id " + std::to_string(ids[t]) + " at position " + std::to_string(t) +
                      " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(&table.data()[static_cast<std::size_t>(ids[t]) * d], d, &out[t * d]);
  }
  return make_result({ids.size(), d}, std::move(out), "embedding", {table},
                     [d, rows = std::vector<int>(ids.begin(), ids.end())](detail::Node& self) {
                       auto& g = detail::work_of(*self.parents[0]);
                       for (std::size_t t = 0; t < rows.size(); ++t)
                         for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(rows[t]) * d + j] += self.work[t * d + j];
                     });
}

/// Inverted dropout; identity when rate is 0.
inline Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  std::vector<double> keep(x.size());
  for (auto& k : keep) k = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  return mul(x, Tensor(x.shape(), std::move(keep)));
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ConfigError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), "reshape", {x},
                     [](detail::Node& self) {
                       auto& g = detail::work_of(*self.parents[0]);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.work[i];
                     });
}

/// 0 for real positions, -1e9 for padding; feeds softmax().
inline std::vector<double> additive_pad_mask(std::span<const unsigned char> real) {
  std::vector<double> mask(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) mask[i] = real[i] ? 0.0 : -1e9;
  return mask;
}

}  // namespace headprune

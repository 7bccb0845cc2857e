// pdaf/tensor.hpp
//
// Dense f64 tensors with define-by-run reverse-mode differentiation. The op
// set is exactly what the debiased-attention network needs: matrix products,
// row-broadcast arithmetic, stabilized softmax with an additive (possibly
// -inf) key bias, layer/batch normalization, gather, and the reductions used
// by attentive pooling. Everything is checked finite after each op; the one
// deliberate exception is masked_key_bias, whose -inf entries are the
// canonical hard-mask encoding consumed by softmax_lastdim.

// Copyright 2026  PDAF Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <unordered_set>

#include "pdaf/common.hpp"

namespace pdaf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape &s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape &s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  uint64_t seq = 0;  // global execution order; backward replays in reverse
  const char *op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode &)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

namespace detail {

inline uint64_t next_seq() {
  static std::atomic<uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline void check_finite(const std::vector<double> &v, const char *op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("op '") + op + "' produced a non-finite value");
    }
  }
}

}  // namespace detail

/// Value-semantics handle on a graph node. Copies share the node. Tensors are
/// immutable once they enter a graph; only the optimizer writes through
/// mutable_data(), and it requires exclusive access.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
      throw DimensionError("Tensor::from_data: shape " + shape_str(shape) + " wants " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(data.size()));
    }
    detail::check_finite(data, "Tensor::from_data");
    return make_node(std::move(shape), std::move(data), requires_grad);
  }

  /// Additive-bias constructor: entries may be -inf (hard mask) but never NaN
  /// or +inf. This is the only way non-finite values enter a graph.
  static Tensor bias_from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
      throw DimensionError("Tensor::bias_from_data: shape/data mismatch");
    }
    for (double x : data) {
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
        throw NumericError("bias entries must be finite or -inf");
      }
    }
    return make_node(std::move(shape), std::move(data), false);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
    return make_node(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    if (!std::isfinite(v)) throw NumericError("Tensor::full: non-finite fill value");
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)), v);
    return make_node(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node()->shape; }
  int64_t numel() const { return static_cast<int64_t>(node()->value.size()); }
  int ndim() const { return static_cast<int>(node()->shape.size()); }
  int64_t dim(int i) const { return node()->shape.at(static_cast<size_t>(i)); }

  /// Row/column view of 1-D and 2-D tensors; 1-D counts as a single row.
  int64_t rows() const { return ndim() == 2 ? dim(0) : 1; }
  int64_t cols() const { return ndim() == 2 ? dim(1) : dim(0); }

  const std::vector<double> &data() const { return node()->value; }
  std::vector<double> &mutable_data() { return node()->value; }
  double at(int64_t i) const { return node()->value.at(static_cast<size_t>(i)); }
  double at(int64_t i, int64_t j) const {
    return node()->value.at(static_cast<size_t>(i * cols() + j));
  }

  bool requires_grad() const { return node()->requires_grad; }
  const std::vector<double> &grad() const {
    if (node()->grad.size() != node()->value.size()) {
      throw Error("Tensor::grad: no gradient populated (run backward first)");
    }
    return node()->grad;
  }
  bool has_grad() const { return node()->grad.size() == node()->value.size(); }
  void zero_grad() { node()->grad.assign(node()->value.size(), 0.0); }

  /// Reverse-mode sweep from this scalar. Touches each reachable grad-requiring
  /// node exactly once, in reverse execution order.
  void backward() const;

  const std::shared_ptr<TensorNode> &node_ptr() const { return node(); }

 private:
  static Tensor make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.node_->seq = detail::next_seq();
    return t;
  }

  const std::shared_ptr<TensorNode> &node() const {
    if (!node_) throw Error("use of undefined Tensor");
    return node_;
  }

  friend Tensor make_op_result(const char *op, Shape shape, std::vector<double> value,
                               std::vector<Tensor> parents,
                               std::function<void(TensorNode &)> backward, bool skip_finite_check);

  std::shared_ptr<TensorNode> node_;
};

/// The executed-op record reachable from one root, in execution order.
/// Rebuilt per backward call (define-by-run).
struct Graph {
  std::vector<TensorNode *> order;  // ascending seq

  static Graph from_root(const std::shared_ptr<TensorNode> &root) {
    Graph g;
    std::unordered_set<TensorNode *> seen;
    std::vector<TensorNode *> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
      TensorNode *n = stack.back();
      stack.pop_back();
      if (!n->requires_grad) continue;  // constant subtrees carry no gradient
      g.order.push_back(n);
      for (const auto &p : n->parents) {
        if (seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
    std::sort(g.order.begin(), g.order.end(),
              [](const TensorNode *a, const TensorNode *b) { return a->seq < b->seq; });
    return g;
  }
};

inline Tensor make_op_result(const char *op, Shape shape, std::vector<double> value,
                             std::vector<Tensor> parents,
                             std::function<void(TensorNode &)> backward,
                             bool skip_finite_check = false) {
  if (!skip_finite_check) detail::check_finite(value, op);
  Tensor out;
  out.node_ = std::make_shared<TensorNode>();
  out.node_->shape = std::move(shape);
  out.node_->value = std::move(value);
  out.node_->op = op;
  out.node_->seq = detail::next_seq();
  bool needs = false;
  for (const auto &p : parents) needs = needs || p.requires_grad();
  out.node_->requires_grad = needs;
  if (needs) {
    out.node_->parents.reserve(parents.size());
    for (const auto &p : parents) out.node_->parents.push_back(p.node_ptr());
    out.node_->backward = std::move(backward);
  }
  return out;
}

inline void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " + shape_str(shape()));
  }
  Graph g = Graph::from_root(node());
  node()->ensure_grad();
  node()->grad[0] = 1.0;
  for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------
// Shape helpers for the supported broadcast: b may equal a's shape, be a row
// vector ([n] or [1xn]) against a [mxn], or be a scalar ([1]).
// ---------------------------------------------------------------------------

namespace detail {

enum class Broadcast { kSame, kRow, kScalar };

inline Broadcast broadcast_kind(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && a.cols() == b.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) +
                       " over " + shape_str(a.shape()));
}

// Row-major matmul kernels with contiguous inner loops.

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double *a, const double *b, double *c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double *crow = c + i * n;
    const double *arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double *brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(const double *a, const double *b, double *c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    double *crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double *brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void gemm_tn(const double *a, const double *b, double *c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    const double *brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double *crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result(
      "matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode &node) {
        const auto &dc = node.grad;
        auto &pa = *node.parents[0];
        auto &pb = *node.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA += dC * B^T
          detail::gemm_nt(dc.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB += A^T * dC
          detail::gemm_tn(pa.value.data(), dc.data(), pb.grad.data(), m, k, n);
        }
      });
}

inline Tensor transpose(const Tensor &a) {
  if (a.ndim() != 2) throw DimensionError("transpose: need 2-D tensor, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = a.at(i, j);
  return make_op_result("transpose", {n, m}, std::move(out), {a}, [m, n](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int64_t j = 0; j < n; ++j)
      for (int64_t i = 0; i < m; ++i)
        pa.grad[static_cast<size_t>(i * n + j)] += node.grad[static_cast<size_t>(j * m + i)];
  });
}

namespace detail {

inline Tensor add_like(const Tensor &a, const Tensor &b, double sign, const char *op) {
  const Broadcast kind = broadcast_kind(a, b, op);
  const int64_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.data());
  const auto &bd = b.data();
  if (kind == Broadcast::kSame) {
    for (size_t i = 0; i < out.size(); ++i) out[i] += sign * bd[i];
  } else if (kind == Broadcast::kScalar) {
    for (double &x : out) x += sign * bd[0];
  } else {
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(i * cols + j)] += sign * bd[static_cast<size_t>(j)];
  }
  return make_op_result(op, a.shape(), std::move(out), {a, b},
                        [kind, rows, cols, sign](TensorNode &node) {
                          auto &pa = *node.parents[0];
                          auto &pb = *node.parents[1];
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            if (kind == Broadcast::kSame) {
                              for (size_t i = 0; i < node.grad.size(); ++i)
                                pb.grad[i] += sign * node.grad[i];
                            } else if (kind == Broadcast::kScalar) {
                              for (double g : node.grad) pb.grad[0] += sign * g;
                            } else {
                              for (int64_t i = 0; i < rows; ++i)
                                for (int64_t j = 0; j < cols; ++j)
                                  pb.grad[static_cast<size_t>(j)] +=
                                      sign * node.grad[static_cast<size_t>(i * cols + j)];
                            }
                          }
                        });
}

}  // namespace detail

inline Tensor add(const Tensor &a, const Tensor &b) { return detail::add_like(a, b, 1.0, "add"); }
inline Tensor sub(const Tensor &a, const Tensor &b) { return detail::add_like(a, b, -1.0, "sub"); }

inline Tensor mul(const Tensor &a, const Tensor &b) {
  const detail::Broadcast kind = detail::broadcast_kind(a, b, "mul");
  const int64_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.data());
  const auto &bd = b.data();
  if (kind == detail::Broadcast::kSame) {
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  } else if (kind == detail::Broadcast::kScalar) {
    for (double &x : out) x *= bd[0];
  } else {
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(i * cols + j)] *= bd[static_cast<size_t>(j)];
  }
  return make_op_result(
      "mul", a.shape(), std::move(out), {a, b}, [kind, rows, cols](TensorNode &node) {
        auto &pa = *node.parents[0];
        auto &pb = *node.parents[1];
        const auto &av = pa.value;
        const auto &bv = pb.value;
        if (pa.requires_grad) {
          pa.ensure_grad();
          if (kind == detail::Broadcast::kSame) {
            for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * bv[i];
          } else if (kind == detail::Broadcast::kScalar) {
            for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * bv[0];
          } else {
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < cols; ++j)
                pa.grad[static_cast<size_t>(i * cols + j)] +=
                    node.grad[static_cast<size_t>(i * cols + j)] * bv[static_cast<size_t>(j)];
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          if (kind == detail::Broadcast::kSame) {
            for (size_t i = 0; i < node.grad.size(); ++i) pb.grad[i] += node.grad[i] * av[i];
          } else if (kind == detail::Broadcast::kScalar) {
            for (size_t i = 0; i < node.grad.size(); ++i) pb.grad[0] += node.grad[i] * av[i];
          } else {
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < cols; ++j)
                pb.grad[static_cast<size_t>(j)] += node.grad[static_cast<size_t>(i * cols + j)] *
                                                   av[static_cast<size_t>(i * cols + j)];
          }
        }
      });
}

inline Tensor scale(const Tensor &a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  std::vector<double> out(a.data());
  for (double &x : out) x *= c;
  return make_op_result("scale", a.shape(), std::move(out), {a}, [c](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += c * node.grad[i];
  });
}

inline Tensor add_scalar(const Tensor &a, double c) {
  if (!std::isfinite(c)) throw NumericError("add_scalar: non-finite addend");
  std::vector<double> out(a.data());
  for (double &x : out) x += c;
  return make_op_result("add_scalar", a.shape(), std::move(out), {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
  });
}

inline Tensor relu(const Tensor &a) {
  std::vector<double> out(a.data());
  for (double &x : out) x = x > 0.0 ? x : 0.0;
  return make_op_result("relu", a.shape(), std::move(out), {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      if (pa.value[i] > 0.0) pa.grad[i] += node.grad[i];
    }
  });
}

inline Tensor log(const Tensor &a) {
  std::vector<double> out(a.data());
  for (double &x : out) {
    if (x <= 0.0) throw DomainError("log: input must be strictly positive, got " + std::to_string(x));
    x = std::log(x);
  }
  return make_op_result("log", a.shape(), std::move(out), {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] / pa.value[i];
  });
}

inline Tensor exp(const Tensor &a) {
  std::vector<double> out(a.data());
  for (double &x : out) x = std::exp(x);
  return make_op_result("exp", a.shape(), std::move(out), {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * node.value[i];
  });
}

/// Elementwise square root. Backward needs strictly positive inputs; the
/// pooling path guarantees that by adding its epsilon before the root.
inline Tensor sqrt(const Tensor &a) {
  std::vector<double> out(a.data());
  for (double &x : out) {
    if (x < 0.0) throw DomainError("sqrt: negative input " + std::to_string(x));
    x = std::sqrt(x);
  }
  return make_op_result("sqrt", a.shape(), std::move(out), {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      if (node.value[i] == 0.0) throw NumericError("sqrt backward at zero");
      pa.grad[i] += node.grad[i] / (2.0 * node.value[i]);
    }
  });
}

inline Tensor sum(const Tensor &a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_op_result("sum", {1}, {s}, {a}, [](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (double &g : pa.grad) g += node.grad[0];
  });
}

inline Tensor mean(const Tensor &a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_op_result("mean", {1}, {s / n}, {a}, [n](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (double &g : pa.grad) g += node.grad[0] / n;
  });
}

/// Population (biased) standard deviation over all elements. Exactly zero for
/// a constant input; backward is undefined there and raises.
inline Tensor stddev(const Tensor &a) {
  const double n = static_cast<double>(a.numel());
  double m = 0.0;
  for (double x : a.data()) m += x;
  m /= n;
  double v = 0.0;
  for (double x : a.data()) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / n);
  return make_op_result("stddev", {1}, {sd}, {a}, [n, m, sd](TensorNode &node) {
    auto &pa = *node.parents[0];
    if (!pa.requires_grad) return;
    if (sd == 0.0) throw NumericError("stddev backward: zero variance");
    pa.ensure_grad();
    for (size_t i = 0; i < pa.grad.size(); ++i) {
      pa.grad[i] += node.grad[0] * (pa.value[i] - m) / (n * sd);
    }
  });
}

/// Concatenate 2-D tensors along rows (axis 0) or columns (axis 1). 1-D
/// tensors count as single rows.
inline Tensor concat(const std::vector<Tensor> &parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  const int64_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  int64_t total = 0;
  for (const Tensor &p : parts) {
    const int64_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) {
      throw DimensionError("concat: mismatched " + std::string(axis == 0 ? "columns" : "rows"));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const int64_t out_rows = axis == 0 ? total : fixed;
  const int64_t out_cols = axis == 0 ? fixed : total;
  std::vector<double> out(static_cast<size_t>(out_rows * out_cols));
  std::vector<int64_t> extents;  // per-part size along the concat axis
  extents.reserve(parts.size());
  int64_t offset = 0;
  for (const Tensor &p : parts) {
    const int64_t pr = p.rows(), pc = p.cols();
    extents.push_back(axis == 0 ? pr : pc);
    for (int64_t i = 0; i < pr; ++i) {
      for (int64_t j = 0; j < pc; ++j) {
        const int64_t oi = axis == 0 ? offset + i : i;
        const int64_t oj = axis == 0 ? j : offset + j;
        out[static_cast<size_t>(oi * out_cols + oj)] = p.data()[static_cast<size_t>(i * pc + j)];
      }
    }
    offset += extents.back();
  }
  return make_op_result(
      "concat", {out_rows, out_cols}, std::move(out), parts,
      [axis, out_cols, extents](TensorNode &node) {
        int64_t off = 0;
        for (size_t k = 0; k < node.parents.size(); ++k) {
          auto &p = *node.parents[k];
          const int64_t ext = extents[k];
          if (p.requires_grad) {
            p.ensure_grad();
            const int64_t pr = p.shape.size() == 2 ? p.shape[0] : 1;
            const int64_t pc = p.shape.size() == 2 ? p.shape[1] : p.shape[0];
            for (int64_t i = 0; i < pr; ++i) {
              for (int64_t j = 0; j < pc; ++j) {
                const int64_t oi = axis == 0 ? off + i : i;
                const int64_t oj = axis == 0 ? j : off + j;
                p.grad[static_cast<size_t>(i * pc + j)] +=
                    node.grad[static_cast<size_t>(oi * out_cols + oj)];
              }
            }
          }
          off += ext;
        }
      });
}

/// Differentiable table lookup: out[t] = table[idx[t]]. Backward scatter-adds
/// into the table; this is how learned phoneme weights reach the attention
/// bias.
inline Tensor gather(const Tensor &table, const std::vector<int> &idx) {
  if (table.ndim() != 1) throw DimensionError("gather: table must be 1-D");
  const int64_t n = table.numel();
  std::vector<double> out(idx.size());
  for (size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || idx[t] >= n) {
      throw DimensionError("gather: index " + std::to_string(idx[t]) + " out of range [0," +
                           std::to_string(n) + ")");
    }
    out[t] = table.data()[static_cast<size_t>(idx[t])];
  }
  return make_op_result("gather", {static_cast<int64_t>(idx.size())}, std::move(out), {table},
                        [idx](TensorNode &node) {
                          auto &pt = *node.parents[0];
                          if (!pt.requires_grad) return;
                          pt.ensure_grad();
                          for (size_t t = 0; t < idx.size(); ++t) {
                            pt.grad[static_cast<size_t>(idx[t])] += node.grad[t];
                          }
                        });
}

/// Per-key additive bias with hard masking: out[j] = bias[j] where attendable,
/// -inf otherwise. The only op allowed to emit non-finite values; its output
/// feeds softmax_lastdim, where -inf means "key excluded".
inline Tensor masked_key_bias(const Tensor &bias, const std::vector<bool> &attendable) {
  if (bias.ndim() != 1 || bias.numel() != static_cast<int64_t>(attendable.size())) {
    throw DimensionError("masked_key_bias: bias " + shape_str(bias.shape()) + " vs mask length " +
                         std::to_string(attendable.size()));
  }
  std::vector<double> out(bias.data());
  for (size_t j = 0; j < attendable.size(); ++j) {
    if (!attendable[j]) out[j] = kNegInf;
  }
  return make_op_result(
      "masked_key_bias", bias.shape(), std::move(out), {bias},
      [attendable](TensorNode &node) {
        auto &pb = *node.parents[0];
        if (!pb.requires_grad) return;
        pb.ensure_grad();
        for (size_t j = 0; j < attendable.size(); ++j) {
          if (attendable[j]) pb.grad[j] += node.grad[j];
        }
      },
      /*skip_finite_check=*/true);
}

/// Numerically stabilized softmax over the last dimension with an optional
/// additive bias. Bias may be full-shape, a broadcast row, or absent; -inf
/// bias entries hard-mask their column (output exactly 0, no gradient).
/// A row with no finite entry is an error.
inline Tensor softmax_lastdim(const Tensor &x, const Tensor &bias = Tensor()) {
  const int64_t rows = x.rows(), cols = x.cols();
  bool bias_row_broadcast = false;
  if (bias.defined()) {
    if (bias.shape() == x.shape()) {
      bias_row_broadcast = rows == 1;  // degenerate distinction, same layout
    } else if (bias.rows() == 1 && bias.cols() == cols) {
      bias_row_broadcast = true;
    } else {
      throw DimensionError("softmax_lastdim: bias " + shape_str(bias.shape()) +
                           " not broadcastable over " + shape_str(x.shape()));
    }
  }
  std::vector<double> out(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i) {
    const double *xr = x.data().data() + i * cols;
    const double *br = nullptr;
    if (bias.defined()) br = bias.data().data() + (bias_row_broadcast ? 0 : i * cols);
    double mx = kNegInf;
    for (int64_t j = 0; j < cols; ++j) {
      const double e = xr[j] + (br ? br[j] : 0.0);
      if (e > mx) mx = e;
    }
    if (mx == kNegInf) {
      throw NumericError("softmax_lastdim: row " + std::to_string(i) +
                         " has no attendable entry (all -inf)");
    }
    double z = 0.0;
    double *orow = out.data() + i * cols;
    for (int64_t j = 0; j < cols; ++j) {
      const double e = xr[j] + (br ? br[j] : 0.0);
      orow[j] = e == kNegInf ? 0.0 : std::exp(e - mx);
      z += orow[j];
    }
    for (int64_t j = 0; j < cols; ++j) orow[j] /= z;
  }
  std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, bias} : std::vector<Tensor>{x};
  return make_op_result(
      "softmax_lastdim", x.shape(), std::move(out), parents,
      [rows, cols, bias_row_broadcast](TensorNode &node) {
        auto &px = *node.parents[0];
        TensorNode *pb = node.parents.size() > 1 ? node.parents[1].get() : nullptr;
        if (px.requires_grad) px.ensure_grad();
        if (pb && pb->requires_grad) pb->ensure_grad();
        for (int64_t i = 0; i < rows; ++i) {
          const double *y = node.value.data() + i * cols;
          const double *g = node.grad.data() + i * cols;
          double dot = 0.0;
          for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
          for (int64_t j = 0; j < cols; ++j) {
            const double d = y[j] * (g[j] - dot);  // zero at masked columns
            if (px.requires_grad) px.grad[static_cast<size_t>(i * cols + j)] += d;
            if (pb && pb->requires_grad) {
              const size_t bj = static_cast<size_t>(bias_row_broadcast ? j : i * cols + j);
              pb->grad[bj] += d;
            }
          }
        }
      });
}

/// Per-row normalization over the last dimension: (x - mean) / sqrt(var+eps),
/// biased variance. Affine parameters are applied by the caller with
/// broadcast mul/add so their gradients come for free.
inline Tensor layernorm_lastdim(const Tensor &x, double eps = 1e-5) {
  const int64_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(static_cast<size_t>(rows * cols));
  std::vector<double> inv_sd(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    const double *xr = x.data().data() + i * cols;
    double m = 0.0;
    for (int64_t j = 0; j < cols; ++j) m += xr[j];
    m /= static_cast<double>(cols);
    double v = 0.0;
    for (int64_t j = 0; j < cols; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(v + eps);
    inv_sd[static_cast<size_t>(i)] = inv;
    for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(i * cols + j)] = (xr[j] - m) * inv;
  }
  return make_op_result(
      "layernorm", x.shape(), std::move(out), {x}, [rows, cols, inv_sd](TensorNode &node) {
        auto &px = *node.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t i = 0; i < rows; ++i) {
          const double *y = node.value.data() + i * cols;
          const double *g = node.grad.data() + i * cols;
          double m1 = 0.0, m2 = 0.0;
          for (int64_t j = 0; j < cols; ++j) {
            m1 += g[j];
            m2 += g[j] * y[j];
          }
          m1 /= static_cast<double>(cols);
          m2 /= static_cast<double>(cols);
          const double inv = inv_sd[static_cast<size_t>(i)];
          for (int64_t j = 0; j < cols; ++j) {
            px.grad[static_cast<size_t>(i * cols + j)] += inv * (g[j] - m1 - y[j] * m2);
          }
        }
      });
}

enum class Phase { kTrain, kInfer };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormState init(int64_t dim) {
    BatchNormState s;
    s.running_mean.assign(static_cast<size_t>(dim), 0.0);
    s.running_var.assign(static_cast<size_t>(dim), 1.0);
    return s;
  }
};

/// Batch normalization over the batch dimension of [batch x d]. Train mode
/// normalizes by the biased batch statistics and folds them into the running
/// stats with the given momentum; infer mode uses the running stats. Training
/// on a single-row batch is rejected (its variance is identically zero).
inline Tensor batchnorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                        BatchNormState &state, Phase phase, double momentum = 0.1,
                        double eps = 1e-5) {
  if (x.ndim() != 2) throw DimensionError("batchnorm: need [batch x d], got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d ||
      static_cast<int64_t>(state.running_mean.size()) != d) {
    throw DimensionError("batchnorm: parameter dim mismatch with d=" + std::to_string(d));
  }
  if (phase == Phase::kTrain && b < 2) {
    throw ValidationError("batchnorm: train mode needs batch >= 2, got " + std::to_string(b));
  }
  std::vector<double> mean_c(static_cast<size_t>(d), 0.0), var_c(static_cast<size_t>(d), 0.0);
  if (phase == Phase::kTrain) {
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < d; ++j) mean_c[static_cast<size_t>(j)] += x.at(i, j);
    for (int64_t j = 0; j < d; ++j) mean_c[static_cast<size_t>(j)] /= static_cast<double>(b);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < d; ++j) {
        const double c = x.at(i, j) - mean_c[static_cast<size_t>(j)];
        var_c[static_cast<size_t>(j)] += c * c;
      }
    for (int64_t j = 0; j < d; ++j) var_c[static_cast<size_t>(j)] /= static_cast<double>(b);
    for (int64_t j = 0; j < d; ++j) {
      state.running_mean[static_cast<size_t>(j)] =
          (1.0 - momentum) * state.running_mean[static_cast<size_t>(j)] +
          momentum * mean_c[static_cast<size_t>(j)];
      state.running_var[static_cast<size_t>(j)] =
          (1.0 - momentum) * state.running_var[static_cast<size_t>(j)] +
          momentum * var_c[static_cast<size_t>(j)];
    }
  } else {
    mean_c = state.running_mean;
    var_c = state.running_var;
  }
  std::vector<double> inv(static_cast<size_t>(d));
  for (int64_t j = 0; j < d; ++j)
    inv[static_cast<size_t>(j)] = 1.0 / std::sqrt(var_c[static_cast<size_t>(j)] + eps);
  std::vector<double> xhat(static_cast<size_t>(b * d));
  std::vector<double> out(static_cast<size_t>(b * d));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      const double h = (x.at(i, j) - mean_c[static_cast<size_t>(j)]) * inv[static_cast<size_t>(j)];
      xhat[static_cast<size_t>(i * d + j)] = h;
      out[static_cast<size_t>(i * d + j)] =
          gamma.data()[static_cast<size_t>(j)] * h + beta.data()[static_cast<size_t>(j)];
    }
  }
  const bool train = phase == Phase::kTrain;
  return make_op_result(
      "batchnorm", x.shape(), std::move(out), {x, gamma, beta},
      [b, d, inv, xhat, train](TensorNode &node) {
        auto &px = *node.parents[0];
        auto &pg = *node.parents[1];
        auto &pbeta = *node.parents[2];
        if (pg.requires_grad) pg.ensure_grad();
        if (pbeta.requires_grad) pbeta.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (int64_t j = 0; j < d; ++j) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < b; ++i) {
            const double gv = node.grad[static_cast<size_t>(i * d + j)];
            sum_g += gv;
            sum_gx += gv * xhat[static_cast<size_t>(i * d + j)];
          }
          if (pbeta.requires_grad) pbeta.grad[static_cast<size_t>(j)] += sum_g;
          if (pg.requires_grad) pg.grad[static_cast<size_t>(j)] += sum_gx;
          if (px.requires_grad) {
            const double gam = pg.value[static_cast<size_t>(j)];
            const double ij = inv[static_cast<size_t>(j)];
            if (train) {
              const double mb = static_cast<double>(b);
              for (int64_t i = 0; i < b; ++i) {
                const double gv = node.grad[static_cast<size_t>(i * d + j)];
                const double xh = xhat[static_cast<size_t>(i * d + j)];
                px.grad[static_cast<size_t>(i * d + j)] +=
                    gam * ij * (gv - sum_g / mb - xh * sum_gx / mb);
              }
            } else {
              for (int64_t i = 0; i < b; ++i) {
                px.grad[static_cast<size_t>(i * d + j)] +=
                    gam * ij * node.grad[static_cast<size_t>(i * d + j)];
              }
            }
          }
        }
      });
}

/// Mean cross-entropy of logits [batch x classes] against integer targets,
/// computed through log-sum-exp for stability.
inline Tensor cross_entropy_mean(const Tensor &logits, const std::vector<int> &targets) {
  if (logits.ndim() != 2 || logits.dim(0) != static_cast<int64_t>(targets.size())) {
    throw DimensionError("cross_entropy_mean: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const int64_t b = logits.dim(0), c = logits.dim(1);
  std::vector<double> probs(static_cast<size_t>(b * c));
  double loss = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= c) {
      throw DimensionError("cross_entropy_mean: target out of range");
    }
    const double *row = logits.data().data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = std::log(z) + mx;
    for (int64_t j = 0; j < c; ++j) probs[static_cast<size_t>(i * c + j)] = std::exp(row[j] - lse);
    loss += lse - row[targets[static_cast<size_t>(i)]];
  }
  loss /= static_cast<double>(b);
  return make_op_result(
      "cross_entropy_mean", {1}, {loss}, {logits}, [b, c, probs, targets](TensorNode &node) {
        auto &pl = *node.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double g = node.grad[0] / static_cast<double>(b);
        for (int64_t i = 0; i < b; ++i) {
          for (int64_t j = 0; j < c; ++j) {
            const double onehot = j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0;
            pl.grad[static_cast<size_t>(i * c + j)] +=
                g * (probs[static_cast<size_t>(i * c + j)] - onehot);
          }
        }
      });
}

}  // namespace pdaf

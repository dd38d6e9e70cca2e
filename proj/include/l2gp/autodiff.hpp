#ifndef L2GP_AUTODIFF_HPP_
#define L2GP_AUTODIFF_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "l2gp/error.hpp"
#include "l2gp/tensor.hpp"

/**
 * Reverse-mode automatic differentiation over dense tensors.
 *
 * Every operation records its parents and a vector-Jacobian rule that is
 * itself written in terms of recorded operations. Running backward with
 * grad recording switched off yields constant gradients; running it with
 * recording on (BackwardMode::extend_graph) yields gradients that are graph
 * nodes and can be differentiated again.
 */
namespace l2gp {

struct Node;

/// Handle to a graph node. Cheap to copy; the node is shared.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::string_view op() const;
  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

  /// Replaces the value of a leaf in place (optimizer updates).
  void assign(Tensor value) const;

 private:
  std::shared_ptr<Node> node_;
};

/// Maps (node output, incoming gradient) to one gradient per parent.
using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

struct Node {
  Tensor value;
  std::string_view op = "leaf";
  std::vector<Var> parents;
  BackwardFn backward;
  bool requires_grad = false;
};

inline const Tensor& Var::value() const { return node_->value; }
inline bool Var::requires_grad() const { return node_ && node_->requires_grad; }
inline std::string_view Var::op() const { return node_->op; }
inline void Var::assign(Tensor value) const {
  if (node_->backward) throw ContractError("assign() on a non-leaf node");
  if (!value.same_shape(node_->value)) throw DimensionError("assign() changes the shape of a leaf");
  node_->value = std::move(value);
}

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local double relu_backward_fault = 1.0;
}  // namespace detail

/// Sets whether operations are recorded for the lifetime of the guard.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(detail::grad_enabled) {
    detail::grad_enabled = enabled;
  }
  ~GradModeGuard() { detail::grad_enabled = previous_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

inline bool grad_enabled() { return detail::grad_enabled; }

/// Scales the ReLU vector-Jacobian product while alive. Used only to prove
/// that the gradient checker notices a broken rule.
class FaultInjectionGuard {
 public:
  explicit FaultInjectionGuard(double relu_scale) : previous_(detail::relu_backward_fault) {
    detail::relu_backward_fault = relu_scale;
  }
  ~FaultInjectionGuard() { detail::relu_backward_fault = previous_; }
  FaultInjectionGuard(const FaultInjectionGuard&) = delete;
  FaultInjectionGuard& operator=(const FaultInjectionGuard&) = delete;

 private:
  double previous_;
};

inline Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

/// Records an operation result. Non-finite values are rejected here, so no
/// forward pass can silently carry NaN or Inf.
inline Var make_op(Tensor value, std::string_view op, std::vector<Var> parents, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool track = false;
  if (detail::grad_enabled) {
    for (const auto& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
    n->requires_grad = true;
  }
  return Var(std::move(n));
}

// Forward declarations: the backward rules reference each other.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
Var abs(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var pow_scalar(const Var& a, double p);
Var sum_all(const Var& a);
Var expand(const Var& s, const Tensor::Shape& shape);
Var sum_rows(const Var& a);
Var broadcast_rows(const Var& v, std::size_t n);
Var sum_cols(const Var& a);
Var broadcast_cols(const Var& v, std::size_t n);
Var detach(const Var& a);

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + Tensor::shape_string(a.shape()) + " vs " +
                         Tensor::shape_string(b.shape()));
  }
}

inline void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " needs a matrix, got " + Tensor::shape_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& x, const Tensor& y, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return make_op(detail::zip(a.value(), b.value(), [](double x, double y) { return x + y; }), "add",
                 {a, b}, [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  return make_op(detail::zip(a.value(), b.value(), [](double x, double y) { return x - y; }), "sub",
                 {a, b}, [](const Var&, const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  return make_op(detail::zip(a.value(), b.value(), [](double x, double y) { return x * y; }), "mul",
                 {a, b}, [](const Var& out, const Var& g) {
                   const auto& p = out.node()->parents;
                   return std::vector<Var>{mul(g, p[1]), mul(g, p[0])};
                 });
}

inline Var neg(const Var& a) {
  return make_op(detail::map(a.value(), [](double x) { return -x; }), "neg", {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

inline Var scale(const Var& a, double c) {
  return make_op(detail::map(a.value(), [c](double x) { return c * x; }), "scale", {a},
                 [c](const Var&, const Var& g) { return std::vector<Var>{scale(g, c)}; });
}

inline Var add_scalar(const Var& a, double c) {
  return make_op(detail::map(a.value(), [c](double x) { return x + c; }), "add_scalar", {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

inline Var matmul(const Var& a, const Var& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  if (y.rows() != k) {
    throw DimensionError("matmul: inner dimensions " + Tensor::shape_string(x.shape()) + " x " +
                         Tensor::shape_string(y.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = &y.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return make_op(std::move(out), "matmul", {a, b}, [](const Var& out, const Var& g) {
    const auto& p = out.node()->parents;
    return std::vector<Var>{matmul(g, transpose(p[1])), matmul(transpose(p[0]), g)};
  });
}

inline Var transpose(const Var& a) {
  detail::require_matrix(a, "transpose");
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_op(std::move(out), "transpose", {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

inline Var relu(const Var& a) {
  return make_op(detail::map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), "relu", {a},
                 [](const Var& out, const Var& g) {
                   const double fault = detail::relu_backward_fault;
                   // Gradient passes only where the input is strictly positive.
                   Tensor mask = detail::map(out.node()->parents[0].value(),
                                             [fault](double x) { return x > 0.0 ? fault : 0.0; });
                   return std::vector<Var>{mul(g, constant(std::move(mask)))};
                 });
}

inline Var abs(const Var& a) {
  return make_op(detail::map(a.value(), [](double x) { return std::fabs(x); }), "abs", {a},
                 [](const Var& out, const Var& g) {
                   // Subgradient 0 at exact ties.
                   Tensor sign = detail::map(out.node()->parents[0].value(), [](double x) {
                     return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                   });
                   return std::vector<Var>{mul(g, constant(std::move(sign)))};
                 });
}

inline Var exp(const Var& a) {
  return make_op(detail::map(a.value(), [](double x) { return std::exp(x); }), "exp", {a},
                 [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

inline Var log(const Var& a) {
  return make_op(detail::map(a.value(), [](double x) { return std::log(x); }), "log", {a},
                 [](const Var& out, const Var& g) {
                   return std::vector<Var>{mul(g, pow_scalar(out.node()->parents[0], -1.0))};
                 });
}

inline Var pow_scalar(const Var& a, double p) {
  return make_op(detail::map(a.value(), [p](double x) { return std::pow(x, p); }), "pow", {a},
                 [p](const Var& out, const Var& g) {
                   const Var& x = out.node()->parents[0];
                   return std::vector<Var>{mul(g, scale(pow_scalar(x, p - 1.0), p))};
                 });
}

/// Sum of every element; returns a rank-0 tensor.
inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tensor::Shape shape = a.shape();
  return make_op(Tensor::scalar(s), "sum_all", {a}, [shape](const Var&, const Var& g) {
    return std::vector<Var>{expand(g, shape)};
  });
}

/// Broadcasts a rank-0 tensor to `shape`.
inline Var expand(const Var& s, const Tensor::Shape& shape) {
  if (s.value().rank() != 0) throw DimensionError("expand needs a rank-0 input");
  return make_op(Tensor(shape, s.value()[0]), "expand", {s},
                 [](const Var&, const Var& g) { return std::vector<Var>{sum_all(g)}; });
}

/// Column sums of an N x C matrix as a 1 x C row.
inline Var sum_rows(const Var& a) {
  detail::require_matrix(a, "sum_rows");
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), c = x.cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  return make_op(std::move(out), "sum_rows", {a}, [n](const Var&, const Var& g) {
    return std::vector<Var>{broadcast_rows(g, n)};
  });
}

/// Repeats a 1 x C row n times.
inline Var broadcast_rows(const Var& v, std::size_t n) {
  detail::require_matrix(v, "broadcast_rows");
  if (v.value().rows() != 1) throw DimensionError("broadcast_rows needs a 1 x C row");
  const std::size_t c = v.value().cols();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = v.value()[j];
  return make_op(std::move(out), "broadcast_rows", {v},
                 [](const Var&, const Var& g) { return std::vector<Var>{sum_rows(g)}; });
}

/// Row sums of an N x C matrix as an N x 1 column.
inline Var sum_cols(const Var& a) {
  detail::require_matrix(a, "sum_cols");
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), c = x.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x[i * c + j];
  return make_op(std::move(out), "sum_cols", {a}, [c](const Var&, const Var& g) {
    return std::vector<Var>{broadcast_cols(g, c)};
  });
}

/// Repeats an N x 1 column n times.
inline Var broadcast_cols(const Var& v, std::size_t n) {
  detail::require_matrix(v, "broadcast_cols");
  if (v.value().cols() != 1) throw DimensionError("broadcast_cols needs an N x 1 column");
  const std::size_t r = v.value().rows();
  Tensor out({r, n});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v.value()[i];
  return make_op(std::move(out), "broadcast_cols", {v},
                 [](const Var&, const Var& g) { return std::vector<Var>{sum_cols(g)}; });
}

inline Var detach(const Var& a) { return constant(a.value()); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator-(const Var& a) { return neg(a); }

struct BackwardMode {
  /// When true the returned gradients are graph nodes and admit a further
  /// backward pass; when false they are constants.
  bool extend_graph = false;
};

/**
 * Gradients of a scalar `loss` with respect to each of `wrt`.
 *
 * Nodes are visited once each in reverse topological order. Inputs that the
 * loss does not depend on receive a zero gradient of matching shape.
 */
inline std::vector<Var> backward(const Var& loss, std::span<const Var> wrt, BackwardMode mode = {}) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }

  std::vector<Var> order;
  std::unordered_map<const Node*, std::size_t> index;
  if (loss.requires_grad()) {
    // Iterative post-order DFS; parents precede children in `order`.
    struct Frame {
      Var var;
      std::size_t next;
    };
    std::vector<Frame> stack;
    std::unordered_map<const Node*, bool> seen;
    stack.push_back({loss, 0});
    seen[loss.node()] = true;
    while (!stack.empty()) {
      Frame& top = stack.back();
      const auto& parents = top.var.node()->parents;
      if (top.next < parents.size()) {
        const Var p = parents[top.next++];
        if (p.requires_grad() && !seen[p.node()]) {
          seen[p.node()] = true;
          stack.push_back({p, 0});
        }
        continue;
      }
      index[top.var.node()] = order.size();
      order.push_back(top.var);
      stack.pop_back();
    }
  }

  std::vector<Var> grads(order.size());
  {
    GradModeGuard guard(mode.extend_graph);
    if (!order.empty()) grads.back() = constant(Tensor(loss.shape(), 1.0));
    for (std::size_t i = order.size(); i-- > 0;) {
      const Var& out = order[i];
      if (!grads[i].defined() || !out.node()->backward) continue;
      std::vector<Var> parent_grads = out.node()->backward(out, grads[i]);
      const auto& parents = out.node()->parents;
      for (std::size_t j = 0; j < parents.size(); ++j) {
        if (!parents[j].requires_grad() || !parent_grads[j].defined()) continue;
        const std::size_t k = index.at(parents[j].node());
        grads[k] = grads[k].defined() ? add(grads[k], parent_grads[j]) : parent_grads[j];
      }
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto it = index.find(w.node());
    if (it != index.end() && grads[it->second].defined()) {
      result.push_back(mode.extend_graph ? grads[it->second] : detach(grads[it->second]));
    } else {
      result.push_back(constant(Tensor(w.shape(), 0.0)));
    }
  }
  return result;
}

inline std::vector<Var> backward(const Var& loss, std::initializer_list<Var> wrt, BackwardMode mode = {}) {
  std::vector<Var> v(wrt);
  return backward(loss, std::span<const Var>(v), mode);
}

}  // namespace l2gp

#endif  // L2GP_AUTODIFF_HPP_

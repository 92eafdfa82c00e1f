#pragma once

// Reverse-mode autodiff over small dense tensors. The tape is built
// define-by-run: every op returns a Var holding a node with a backward
// closure. Sequence activations use the (batch, time, channel) layout;
// parameters are rank-1/2 tensors owned by a ParamStore.
//
// Everything here is scalar-generic: training instantiates float, the
// finite-difference oracles instantiate double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vts/common.hpp"
#include "vts/dsp.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts::ad {

template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // allocated on demand, same shape as val
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> back;

  Tensor<T>& ensure_grad() {
    if (grad.numel() != val.numel()) grad = Tensor<T>(val.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Tensor<T> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  bool defined() const { return n_ != nullptr; }
  const Tensor<T>& value() const { return n_->val; }
  Tensor<T>& value() { return n_->val; }
  const Tensor<T>& grad() const { return n_->grad; }
  Tensor<T>& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  std::shared_ptr<Node<T>> node() const { return n_; }

  /// Copy of the value cut off from the tape.
  Var detach() const { return constant(n_->val); }

  T scalar() const {
    if (n_->val.numel() != 1) throw ShapeError("scalar(): tensor has " + std::to_string(n_->val.numel()) + " elements");
    return n_->val[0];
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> make_node(Tensor<T> val, std::vector<std::shared_ptr<Node<T>>> parents,
                                   std::function<void(Node<T>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->back = std::move(back);
  return n;
}

}  // namespace detail

/// Run reverse-mode accumulation from a scalar root. Seeds the root gradient
/// with `seed` (1 by default; a mean over per-sample losses seeds 1/B).
template <class T>
void backward(const Var<T>& root, T seed = T(1)) {
  if (root.value().numel() != 1) throw ShapeError("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // iterative post-order DFS -> topological order
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) n->ensure_grad();
  root.node()->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->back) (*it)->back(**it);
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  auto an = a.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) bn->ensure_grad()[i] += n.grad[i];
  }));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  auto an = a.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) bn->ensure_grad()[i] -= n.grad[i];
  }));
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i] * bn->val[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) bn->ensure_grad()[i] += n.grad[i] * an->val[i];
  }));
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, c](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i] * c;
  }));
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i];
  }));
}

/// c - a, used for (1 - score) terms.
template <class T>
Var<T> rsub_scalar(T c, const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c - out[i];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] -= n.grad[i];
  }));
}

template <class T>
Var<T> vtanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      an->ensure_grad()[i] += n.grad[i] * (T(1) - n.val[i] * n.val[i]);
  }));
}

template <class T>
Var<T> vsigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      an->ensure_grad()[i] += n.grad[i] * n.val[i] * (T(1) - n.val[i]);
  }));
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (out[i] < T(0)) out[i] *= slope;
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, slope](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      an->ensure_grad()[i] += n.grad[i] * (an->val[i] < T(0) ? slope : T(1));
  }));
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return leaky_relu(a, T(0));
}

template <class T>
Var<T> vabs(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) {
      const T s = an->val[i] > T(0) ? T(1) : (an->val[i] < T(0) ? T(-1) : T(0));
      an->ensure_grad()[i] += n.grad[i] * s;
    }
  }));
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i] * T(2) * an->val[i];
  }));
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const std::size_t n_el = a.value().numel();
  Tensor<T> out({1}, T(0));
  for (std::size_t i = 0; i < n_el; ++i) out[0] += a.value()[i];
  out[0] /= static_cast<T>(n_el);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, n_el](Node<T>& n) {
    const T g = n.grad[0] / static_cast<T>(n_el);
    for (std::size_t i = 0; i < n_el; ++i) an->ensure_grad()[i] += g;
  }));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// x (B,T,C) or (N,C) times W (C,O) plus bias (O). Works on any tensor whose
/// last dimension is C.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const std::size_t c = w.value().dim(0), o = w.value().dim(1);
  const std::size_t rows = x.value().numel() / c;
  if (x.value().dim(x.value().rank() - 1) != c)
    throw ShapeError("linear: input channels " + x.value().shape_str() + " vs weight " + w.value().shape_str());
  if (b.value().numel() != o) throw ShapeError("linear: bias size mismatch");

  std::vector<std::size_t> out_shape = x.value().shape();
  out_shape.back() = o;
  Tensor<T> out(out_shape);
  as_matrix(out, rows, o).noalias() = as_matrix(x.value(), rows, c) * as_matrix(w.value(), c, o);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < o; ++j) out[r * o + j] += b.value()[j];

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {xn, wn, bn}, [xn, wn, bn, rows, c, o](Node<T>& n) {
    auto g = as_matrix(n.grad, rows, o);
    if (xn->requires_grad)
      as_matrix(xn->ensure_grad(), rows, c).noalias() += g * as_matrix(wn->val, c, o).transpose();
    if (wn->requires_grad)
      as_matrix(wn->ensure_grad(), c, o).noalias() += as_matrix(xn->val, rows, c).transpose() * g;
    if (bn->requires_grad) {
      auto& bg = bn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < o; ++j) bg[j] += n.grad[r * o + j];
    }
  }));
}

/// Batched matmul: a (N,R,K) times b-transposed (N,S,K) -> (N,R,S).
template <class T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  const std::size_t n_b = a.value().dim(0), r = a.value().dim(1), k = a.value().dim(2);
  const std::size_t s = b.value().dim(1);
  if (b.value().dim(0) != n_b || b.value().dim(2) != k)
    throw ShapeError("bmm_nt: " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor<T> out({n_b, r, s});
  for (std::size_t i = 0; i < n_b; ++i) {
    Eigen::Map<const EigenRowMat<T>> ma(a.value().data() + i * r * k, r, k);
    Eigen::Map<const EigenRowMat<T>> mb(b.value().data() + i * s * k, s, k);
    Eigen::Map<EigenRowMat<T>> mo(out.data() + i * r * s, r, s);
    mo.noalias() = ma * mb.transpose();
  }
  auto an = a.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an, bn}, [an, bn, n_b, r, k, s](Node<T>& n) {
    for (std::size_t i = 0; i < n_b; ++i) {
      Eigen::Map<const EigenRowMat<T>> g(n.grad.data() + i * r * s, r, s);
      if (an->requires_grad) {
        Eigen::Map<const EigenRowMat<T>> mb(bn->val.data() + i * s * k, s, k);
        Eigen::Map<EigenRowMat<T>> ga(an->ensure_grad().data() + i * r * k, r, k);
        ga.noalias() += g * mb;
      }
      if (bn->requires_grad) {
        Eigen::Map<const EigenRowMat<T>> ma(an->val.data() + i * r * k, r, k);
        Eigen::Map<EigenRowMat<T>> gb(bn->ensure_grad().data() + i * s * k, s, k);
        gb.noalias() += g.transpose() * ma;
      }
    }
  }));
}

/// Batched matmul: a (N,R,S) times b (N,S,C) -> (N,R,C).
template <class T>
Var<T> bmm_nn(const Var<T>& a, const Var<T>& b) {
  const std::size_t n_b = a.value().dim(0), r = a.value().dim(1), s = a.value().dim(2);
  const std::size_t c = b.value().dim(2);
  if (b.value().dim(0) != n_b || b.value().dim(1) != s)
    throw ShapeError("bmm_nn: " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor<T> out({n_b, r, c});
  for (std::size_t i = 0; i < n_b; ++i) {
    Eigen::Map<const EigenRowMat<T>> ma(a.value().data() + i * r * s, r, s);
    Eigen::Map<const EigenRowMat<T>> mb(b.value().data() + i * s * c, s, c);
    Eigen::Map<EigenRowMat<T>> mo(out.data() + i * r * c, r, c);
    mo.noalias() = ma * mb;
  }
  auto an = a.node(), bn = b.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an, bn}, [an, bn, n_b, r, s, c](Node<T>& n) {
    for (std::size_t i = 0; i < n_b; ++i) {
      Eigen::Map<const EigenRowMat<T>> g(n.grad.data() + i * r * c, r, c);
      if (an->requires_grad) {
        Eigen::Map<const EigenRowMat<T>> mb(bn->val.data() + i * s * c, s, c);
        Eigen::Map<EigenRowMat<T>> ga(an->ensure_grad().data() + i * r * s, r, s);
        ga.noalias() += g * mb.transpose();
      }
      if (bn->requires_grad) {
        Eigen::Map<const EigenRowMat<T>> ma(an->val.data() + i * r * s, r, s);
        Eigen::Map<EigenRowMat<T>> gb(bn->ensure_grad().data() + i * s * c, s, c);
        gb.noalias() += ma.transpose() * g;
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<std::size_t> shape) {
  Tensor<T> out(shape);
  if (out.numel() != a.value().numel()) throw ShapeError("reshape: element count mismatch");
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i];
  }));
}

/// Concatenate along the last (channel) dimension; all leading dims equal.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty list");
  const auto& s0 = xs[0].value().shape();
  std::size_t total_c = 0;
  std::vector<std::size_t> widths;
  for (const auto& x : xs) {
    const auto& s = x.value().shape();
    if (s.size() != s0.size()) throw ShapeError("concat_channels: rank mismatch");
    for (std::size_t d = 0; d + 1 < s.size(); ++d)
      if (s[d] != s0[d]) throw ShapeError("concat_channels: leading dim mismatch");
    widths.push_back(s.back());
    total_c += s.back();
  }
  std::vector<std::size_t> out_shape = s0;
  out_shape.back() = total_c;
  Tensor<T> out(out_shape);
  const std::size_t rows = out.numel() / total_c;
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * total_c + off + j] = v[r * widths[k] + j];
    off += widths[k];
  }
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  return Var<T>(detail::make_node<T>(std::move(out), parents,
                                     [parents, widths, total_c, rows](Node<T>& n) {
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (parents[k]->requires_grad) {
        auto& g = parents[k]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += n.grad[r * total_c + off2 + j];
      }
      off2 += widths[k];
    }
  }));
}

template <class T>
Var<T> slice_channels(const Var<T>& a, std::size_t start, std::size_t len) {
  const auto& s = a.value().shape();
  const std::size_t c = s.back();
  if (start + len > c) throw ShapeError("slice_channels: out of range");
  std::vector<std::size_t> out_shape = s;
  out_shape.back() = len;
  Tensor<T> out(out_shape);
  const std::size_t rows = out.numel() / len;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = a.value()[r * c + start + j];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, start, len, c, rows](Node<T>& n) {
    auto& g = an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < len; ++j) g[r * c + start + j] += n.grad[r * len + j];
  }));
}

/// x (B,T,C) -> (B,len,C) starting at time `start`.
template <class T>
Var<T> slice_time(const Var<T>& a, std::size_t start, std::size_t len) {
  const std::size_t b = a.value().dim(0), t = a.value().dim(1), c = a.value().dim(2);
  if (start + len > t) throw ShapeError("slice_time: out of range");
  Tensor<T> out({b, len, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < len; ++j)
      for (std::size_t k = 0; k < c; ++k) out(i, j, k) = a.value()(i, start + j, k);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, start, len, b, c](Node<T>& n) {
    auto& g = an->ensure_grad();
    const std::size_t t_in = an->val.dim(1);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t k = 0; k < c; ++k) g[(i * t_in + start + j) * c + k] += n.grad[(i * len + j) * c + k];
  }));
}

/// x (B,T,C) -> row t as (B,C).
template <class T>
Var<T> take_time(const Var<T>& a, std::size_t t) {
  const std::size_t b = a.value().dim(0), tt = a.value().dim(1), c = a.value().dim(2);
  if (t >= tt) throw ShapeError("take_time: index out of range");
  Tensor<T> out({b, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < c; ++k) out(i, k) = a.value()(i, t, k);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, t, b, c](Node<T>& n) {
    auto& g = an->ensure_grad();
    const std::size_t t_in = an->val.dim(1);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < c; ++k) g[(i * t_in + t) * c + k] += n.grad[i * c + k];
  }));
}

/// v (B,C) -> (B,T,C), the same vector at every time step.
template <class T>
Var<T> broadcast_time(const Var<T>& v, std::size_t t) {
  const std::size_t b = v.value().dim(0), c = v.value().dim(1);
  Tensor<T> out({b, t, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < c; ++k) out(i, j, k) = v.value()(i, k);
  auto vn = v.node();
  return Var<T>(detail::make_node<T>(std::move(out), {vn}, [vn, b, t, c](Node<T>& n) {
    auto& g = vn->ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t k = 0; k < c; ++k) g[i * c + k] += n.grad[(i * t + j) * c + k];
  }));
}

template <class T>
Var<T> reverse_time(const Var<T>& a) {
  const std::size_t b = a.value().dim(0), t = a.value().dim(1), c = a.value().dim(2);
  Tensor<T> out({b, t, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < c; ++k) out(i, j, k) = a.value()(i, t - 1 - j, k);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, b, t, c](Node<T>& n) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t k = 0; k < c; ++k) g[(i * t + t - 1 - j) * c + k] += n.grad[(i * t + j) * c + k];
  }));
}

/// Insert (stride-1) zeros between consecutive time steps:
/// out length = (T-1)*stride + 1. Used to express transposed convolution.
template <class T>
Var<T> zero_stuff_time(const Var<T>& a, std::size_t stride) {
  const std::size_t b = a.value().dim(0), t = a.value().dim(1), c = a.value().dim(2);
  const std::size_t t_out = (t - 1) * stride + 1;
  Tensor<T> out({b, t_out, c}, T(0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < c; ++k) out(i, j * stride, k) = a.value()(i, j, k);
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, b, t, c, stride, t_out](Node<T>& n) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t k = 0; k < c; ++k) g[(i * t + j) * c + k] += n.grad[(i * t_out + j * stride) * c + k];
  }));
}

// ---------------------------------------------------------------------------
// softmax / dropout / positional code
// ---------------------------------------------------------------------------

/// Softmax over the last dimension.
template <class T>
Var<T> softmax_lastdim(const Var<T>& a) {
  const std::size_t c = a.value().shape().back();
  const std::size_t rows = a.value().numel() / c;
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* p = out.data() + r * c;
    T mx = p[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, p[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(p[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
  }
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, rows, c](Node<T>& n) {
    auto& g = an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.val.data() + r * c;
      const T* gy = n.grad.data() + r * c;
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
    }
  }));
}

/// Inverted dropout; identity when `train` is false or p == 0.
template <class T>
Var<T> dropout(const Var<T>& a, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return a;
  Tensor<T> mask(a.value().shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an, mask = std::move(mask)](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i] * mask[i];
  }));
}

/// Add a constant tensor (e.g. sinusoidal position codes).
template <class T>
Var<T> add_constant(const Var<T>& a, const Tensor<T>& c) {
  if (!a.value().same_shape(c)) throw ShapeError("add_constant: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c[i];
  auto an = a.node();
  return Var<T>(detail::make_node<T>(std::move(out), {an}, [an](Node<T>& n) {
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->ensure_grad()[i] += n.grad[i];
  }));
}

// ---------------------------------------------------------------------------
// normalizations (per-sample statistics, affine per channel)
// ---------------------------------------------------------------------------

namespace detail {

// Shared backward for y = gamma * xhat + beta over normalization sets of
// size m indexed by (set, element); `index(set, j)` maps to flat positions
// and `channel(set, j)` to the affine channel.
template <class T, class IndexF, class ChanF>
void norm_backward(Node<T>& n, std::shared_ptr<Node<T>> xn, std::shared_ptr<Node<T>> gn,
                   std::shared_ptr<Node<T>> bn, const Tensor<T>& xhat, const std::vector<T>& inv_std,
                   std::size_t sets, std::size_t m, IndexF index, ChanF channel) {
  if (gn->requires_grad || bn->requires_grad) {
    auto& gg = gn->ensure_grad();
    auto& bg = bn->ensure_grad();
    for (std::size_t s = 0; s < sets; ++s)
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = index(s, j);
        const std::size_t ch = channel(s, j);
        gg[ch] += n.grad[i] * xhat[i];
        bg[ch] += n.grad[i];
      }
  }
  if (xn->requires_grad) {
    auto& xg = xn->ensure_grad();
    for (std::size_t s = 0; s < sets; ++s) {
      T mean_d = T(0), mean_dx = T(0);
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = index(s, j);
        const T d = n.grad[i] * gn->val[channel(s, j)];
        mean_d += d;
        mean_dx += d * xhat[i];
      }
      mean_d /= static_cast<T>(m);
      mean_dx /= static_cast<T>(m);
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = index(s, j);
        const T d = n.grad[i] * gn->val[channel(s, j)];
        xg[i] += inv_std[s] * (d - mean_d - xhat[i] * mean_dx);
      }
    }
  }
}

}  // namespace detail

/// Normalize each channel over the time axis of each sample (the batch-style
/// norm used after conv layers, computed per sample so forward passes stay
/// pure functions of one input).
template <class T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const std::size_t b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  if (gamma.value().numel() != c || beta.value().numel() != c) throw ShapeError("instance_norm: affine size mismatch");
  Tensor<T> out({b, t, c});
  Tensor<T> xhat({b, t, c});
  std::vector<T> inv_std(b * c);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      T mean = T(0);
      for (std::size_t j = 0; j < t; ++j) mean += x.value()(i, j, k);
      mean /= static_cast<T>(t);
      T var = T(0);
      for (std::size_t j = 0; j < t; ++j) {
        const T d = x.value()(i, j, k) - mean;
        var += d * d;
      }
      var /= static_cast<T>(t);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[i * c + k] = is;
      for (std::size_t j = 0; j < t; ++j) {
        const T xh = (x.value()(i, j, k) - mean) * is;
        xhat(i, j, k) = xh;
        out(i, j, k) = gamma.value()[k] * xh + beta.value()[k];
      }
    }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Var<T>(detail::make_node<T>(
      std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), b, t, c](Node<T>& n) {
        detail::norm_backward<T>(
            n, xn, gn, bn, xhat, inv_std, b * c, t,
            [t, c](std::size_t s, std::size_t j) {
              const std::size_t i = s / c, k = s % c;
              return (i * t + j) * c + k;
            },
            [c](std::size_t s, std::size_t) { return s % c; });
      }));
}

/// Normalize over (time x channels-in-group) per sample.
template <class T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t groups,
                  T eps = T(1e-5)) {
  const std::size_t b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  groups = std::min(groups, c);
  if (c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  const std::size_t gc = c / groups;
  if (gamma.value().numel() != c || beta.value().numel() != c) throw ShapeError("group_norm: affine size mismatch");
  Tensor<T> out({b, t, c});
  Tensor<T> xhat({b, t, c});
  std::vector<T> inv_std(b * groups);
  const std::size_t m = t * gc;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t g = 0; g < groups; ++g) {
      T mean = T(0);
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t u = 0; u < gc; ++u) mean += x.value()(i, j, g * gc + u);
      mean /= static_cast<T>(m);
      T var = T(0);
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t u = 0; u < gc; ++u) {
          const T d = x.value()(i, j, g * gc + u) - mean;
          var += d * d;
        }
      var /= static_cast<T>(m);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[i * groups + g] = is;
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t u = 0; u < gc; ++u) {
          const std::size_t k = g * gc + u;
          const T xh = (x.value()(i, j, k) - mean) * is;
          xhat(i, j, k) = xh;
          out(i, j, k) = gamma.value()[k] * xh + beta.value()[k];
        }
    }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Var<T>(detail::make_node<T>(
      std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), b, t, c, groups, gc, m](Node<T>& n) {
        detail::norm_backward<T>(
            n, xn, gn, bn, xhat, inv_std, b * groups, m,
            [t, c, gc, groups](std::size_t s, std::size_t j) {
              const std::size_t i = s / groups, g = s % groups;
              const std::size_t tt = j / gc, u = j % gc;
              return (i * t + tt) * c + g * gc + u;
            },
            [gc, groups](std::size_t s, std::size_t j) {
              const std::size_t g = s % groups;
              return g * gc + j % gc;
            });
      }));
}

/// Normalize each time step over channels.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const std::size_t c = x.value().shape().back();
  const std::size_t rows = x.value().numel() / c;
  if (gamma.value().numel() != c || beta.value().numel() != c) throw ShapeError("layer_norm: affine size mismatch");
  Tensor<T> out(x.value().shape());
  Tensor<T> xhat(x.value().shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = x.value().data() + r * c;
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += p[j];
    mean /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T d = p[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T xh = (p[j] - mean) * is;
      xhat[r * c + j] = xh;
      out[r * c + j] = gamma.value()[j] * xh + beta.value()[j];
    }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Var<T>(detail::make_node<T>(
      std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c](Node<T>& n) {
        detail::norm_backward<T>(
            n, xn, gn, bn, xhat, inv_std, rows, c,
            [c](std::size_t s, std::size_t j) { return s * c + j; },
            [](std::size_t, std::size_t j) { return j; });
      }));
}

// ---------------------------------------------------------------------------
// random resampling as a differentiable (piecewise-linear) map
// ---------------------------------------------------------------------------

/// Apply one pre-drawn resample map per sample; gradients flow through the
/// interpolation weights.
template <class T>
Var<T> resample_time(const Var<T>& x, const std::vector<vts::dsp::ResampleMap>& maps) {
  const std::size_t b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  if (maps.size() != b) throw ShapeError("resample_time: need one map per sample");
  for (const auto& m : maps)
    if (m.in_len != t || m.rows.size() != t) throw ShapeError("resample_time: map length mismatch");
  Tensor<T> out({b, t, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      const auto& r = maps[i].rows[j];
      for (std::size_t k = 0; k < c; ++k) {
        // x0 + w1*(x1-x0): exact when the two source frames agree
        const T x0 = x.value()(i, r.i0, k);
        const T x1 = x.value()(i, r.i1, k);
        out(i, j, k) = x0 + static_cast<T>(r.w1) * (x1 - x0);
      }
    }
  auto xn = x.node();
  return Var<T>(detail::make_node<T>(std::move(out), {xn}, [xn, maps, b, t, c](Node<T>& n) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const auto& r = maps[i].rows[j];
        for (std::size_t k = 0; k < c; ++k) {
          const T gv = n.grad[(i * t + j) * c + k];
          g[(i * t + r.i0) * c + k] += static_cast<T>(r.w0) * gv;
          g[(i * t + r.i1) * c + k] += static_cast<T>(r.w1) * gv;
        }
      }
  }));
}

// ---------------------------------------------------------------------------
// parameter store
// ---------------------------------------------------------------------------

template <class T>
class ParamStore {
 public:
  Var<T> create(const std::string& name, Tensor<T> init) {
    if (params_.count(name)) throw Error("parameter already exists: " + name);
    auto v = Var<T>::leaf(std::move(init), true);
    params_.emplace(name, v);
    return v;
  }

  const Var<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  Var<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grad() {
    for (auto& [k, v] : params_) v.grad().fill(T(0));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.value().numel();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Var<T>> params_;  // ordered: deterministic iteration
};

}  // namespace vts::ad

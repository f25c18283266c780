#pragma once

// Dense 4-D (N,C,H,W) tensors with reverse-mode automatic differentiation.
// A Tensor is a cheap handle onto a graph Node; ops build new nodes and
// record a backward closure when any input requires gradients. Calling
// backward() on a scalar walks the graph in reverse topological order and
// accumulates into every requires_grad leaf.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mstn {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Incompatible tensor dimensions.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally invalid configuration (bad geometry, bad grid dims, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse (e.g. backward on a non-scalar).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// File or directory problem.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value where one is not allowed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  long long numel() const {
    return static_cast<long long>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

inline void check_valid_shape(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ShapeError("shape entries must be positive, got " + s.str());
  }
}

// ---------------------------------------------------------------------------
// Autograd switch (thread-local)
// ---------------------------------------------------------------------------

namespace autograd {

inline bool& enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
inline bool enabled() { return enabled_flag(); }
inline void set_enabled(bool on) { enabled_flag() = on; }

}  // namespace autograd

/// Scoped "do not record graph" guard for inference and finite differencing.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(autograd::enabled()) { autograd::set_enabled(false); }
  ~NoGradGuard() { autograd::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---------------------------------------------------------------------------
// Graph node
// ---------------------------------------------------------------------------

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // lazily allocated; same length as value once present
  bool requires_grad = false;
  // Parents are held by shared_ptr so saved activations stay alive for the
  // backward pass; the graph is a DAG with parent-only edges (no cycles).
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s) {
    check_valid_shape(s);
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = s;
    t.node_->value.assign(static_cast<size_t>(s.numel()), T(0));
    return t;
  }

  static Tensor full(const Shape& s, T v) {
    Tensor t = zeros(s);
    for (auto& x : t.node_->value) x = v;
    return t;
  }

  static Tensor from_data(const Shape& s, std::vector<T> data) {
    check_valid_shape(s);
    if (static_cast<long long>(data.size()) != s.numel()) {
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + s.str());
    }
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = s;
    t.node_->value = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long long numel() const { return node_->shape.numel(); }

  std::span<T> data() { return {node_->value.data(), node_->value.size()}; }
  std::span<const T> data() const {
    return {node_->value.data(), node_->value.size()};
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const {
    if (!has_grad()) {
      throw UsageError("tensor has no gradient (backward not run yet?)");
    }
    return {node_->grad.data(), node_->grad.size()};
  }
  void zero_grad() {
    if (node_) node_->grad.clear();
  }

  /// Value of a 1-element tensor.
  T item() const {
    if (numel() != 1) {
      throw UsageError("item() requires a scalar tensor, shape is " +
                       shape().str());
    }
    return node_->value[0];
  }

  T at(int n, int c, int h, int w) const {
    const Shape& s = node_->shape;
    return node_->value[((static_cast<size_t>(n) * s.c + c) * s.h + h) * s.w + w];
  }

  /// Copy of the values with graph and gradient dropped.
  Tensor detach() const {
    return from_data(shape(), node_->value);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->value.size());
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<U>(node_->value[i]);
    }
    return Tensor<U>::from_data(Shape{shape().n, shape().c, shape().h, shape().w},
                                std::move(out));
  }

  /// Reverse-mode sweep from a scalar root. Each leaf with requires_grad
  /// accumulates additively; call zero_grad() between independent sweeps.
  void backward() const {
    if (!node_) throw UsageError("backward() on an undefined tensor");
    if (numel() != 1) {
      throw UsageError("backward() requires a scalar root, shape is " +
                       shape().str());
    }
    // Iterative post-order DFS over parent edges; reversing it yields the
    // reverse topological order that visits every node exactly once.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    seen.insert(node_.get());
    stack.emplace_back(node_.get(), 0);
    while (!stack.empty()) {
      auto& [cur, next] = stack.back();
      if (next < cur->parents.size()) {
        Node<T>* parent = cur->parents[next++].get();
        if (seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(cur);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* cur = *it;
      if (cur->backward && !cur->grad.empty()) cur->backward(*cur);
    }
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// ---------------------------------------------------------------------------
// Op plumbing
// ---------------------------------------------------------------------------

namespace detail {

/// Wraps a freshly computed value into a tensor and, if grad recording is on
/// and any input needs it, attaches the inputs and the backward closure.
template <class T>
Tensor<T> make_op(const Shape& shape, std::vector<T> value,
                  std::initializer_list<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> backward) {
  Tensor<T> out = Tensor<T>::from_data(shape, std::move(value));
  bool needs = false;
  if (autograd::enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    auto node = out.node();
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return out;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
                            [](Node<T>& self) {
                              for (int k = 0; k < 2; ++k) {
                                auto& p = *self.parents[k];
                                if (!p.requires_grad) continue;
                                p.ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  p.grad[i] += self.grad[i];
                                }
                              }
                            });
}

template <class T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "subtract");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
                            [](Node<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  pa.grad[i] += self.grad[i];
                                }
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  pb.grad[i] -= self.grad[i];
                                }
                              }
                            });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return detail::make_op<T>(a.shape(), std::move(out), {a},
                            [factor](Node<T>& self) {
                              auto& p = *self.parents[0];
                              if (!p.requires_grad) return;
                              p.ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                p.grad[i] += factor * self.grad[i];
                              }
                            });
}

/// Elementwise product. Also accepts one (N,C,1,1) operand against a
/// (N,C,H,W) operand, broadcast per channel (the Eq-form a*x gating).
template <class T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_op<T>(
        sa, std::move(out), {a, b}, [](Node<T>& self) {
          auto& pa = *self.parents[0];
          auto& pb = *self.parents[1];
          if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
              pa.grad[i] += self.grad[i] * pb.value[i];
            }
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
              pb.grad[i] += self.grad[i] * pa.value[i];
            }
          }
        });
  }

  // Broadcast case: exactly one side is (N,C,1,1).
  const bool a_is_gate = (sa.n == sb.n && sa.c == sb.c && sa.h == 1 && sa.w == 1);
  const bool b_is_gate = (sa.n == sb.n && sa.c == sb.c && sb.h == 1 && sb.w == 1);
  if (!a_is_gate && !b_is_gate) {
    throw ShapeError("multiply: shape mismatch " + sa.str() + " vs " + sb.str());
  }
  const Tensor<T>& gate = a_is_gate ? a : b;
  const Tensor<T>& map = a_is_gate ? b : a;
  const Shape& sm = map.shape();
  const size_t plane = static_cast<size_t>(sm.h) * sm.w;
  const auto gv = gate.data();
  const auto mv = map.data();
  std::vector<T> out(mv.size());
  for (int nc = 0; nc < sm.n * sm.c; ++nc) {
    const T g = gv[nc];
    const T* src = mv.data() + plane * nc;
    T* dst = out.data() + plane * nc;
    for (size_t i = 0; i < plane; ++i) dst[i] = g * src[i];
  }
  // Parent order: gate first, map second.
  return detail::make_op<T>(
      sm, std::move(out), {gate, map}, [plane](Node<T>& self) {
        auto& pg = *self.parents[0];
        auto& pm = *self.parents[1];
        const int channels = pg.shape.n * pg.shape.c;
        if (pg.requires_grad) {
          pg.ensure_grad();
          for (int nc = 0; nc < channels; ++nc) {
            const T* g = self.grad.data() + plane * nc;
            const T* m = pm.value.data() + plane * nc;
            T acc = T(0);
            for (size_t i = 0; i < plane; ++i) acc += g[i] * m[i];
            pg.grad[nc] += acc;
          }
        }
        if (pm.requires_grad) {
          pm.ensure_grad();
          for (int nc = 0; nc < channels; ++nc) {
            const T gval = pg.value[nc];
            const T* g = self.grad.data() + plane * nc;
            T* dst = pm.grad.data() + plane * nc;
            for (size_t i = 0; i < plane; ++i) dst[i] += gval * g[i];
          }
        }
      });
}

/// max(x, 0); subgradient at 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  return detail::make_op<T>(a.shape(), std::move(out), {a},
                            [](Node<T>& self) {
                              auto& p = *self.parents[0];
                              if (!p.requires_grad) return;
                              p.ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                if (p.value[i] > T(0)) p.grad[i] += self.grad[i];
                              }
                            });
}

/// Total sum reduced to a (1,1,1,1) scalar.
template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto av = a.data();
  T acc = T(0);
  for (size_t i = 0; i < av.size(); ++i) acc += av[i];
  return detail::make_op<T>(Shape{1, 1, 1, 1}, std::vector<T>{acc}, {a},
                            [](Node<T>& self) {
                              auto& p = *self.parents[0];
                              if (!p.requires_grad) return;
                              p.ensure_grad();
                              const T g = self.grad[0];
                              for (size_t i = 0; i < p.grad.size(); ++i) {
                                p.grad[i] += g;
                              }
                            });
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers (value-only, never recorded)
// ---------------------------------------------------------------------------

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <class T>
Tensor<T> clamp01(const Tensor<T>& t) {
  std::vector<T> out(t.data().begin(), t.data().end());
  for (auto& v : out) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return Tensor<T>::from_data(t.shape(), std::move(out));
}

/// Pads H and W up to (target_h, target_w) by replicating the border.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& t, int target_h, int target_w) {
  const Shape& s = t.shape();
  if (target_h < s.h || target_w < s.w) {
    throw UsageError("pad_replicate: target smaller than input");
  }
  if (target_h == s.h && target_w == s.w) return t.detach();
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, target_h, target_w});
  auto src = t.data();
  auto dst = out.data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* sp = src.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
      T* dp = dst.data() + (static_cast<size_t>(n) * s.c + c) * target_h * target_w;
      for (int y = 0; y < target_h; ++y) {
        const int sy = y < s.h ? y : s.h - 1;
        for (int x = 0; x < target_w; ++x) {
          const int sx = x < s.w ? x : s.w - 1;
          dp[y * target_w + x] = sp[sy * s.w + sx];
        }
      }
    }
  }
  return out;
}

/// Top-left crop back to (h, w).
template <class T>
Tensor<T> crop(const Tensor<T>& t, int h, int w) {
  const Shape& s = t.shape();
  if (h > s.h || w > s.w) throw UsageError("crop: target larger than input");
  if (h == s.h && w == s.w) return t.detach();
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, h, w});
  auto src = t.data();
  auto dst = out.data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* sp = src.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
      T* dp = dst.data() + (static_cast<size_t>(n) * s.c + c) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) dp[y * w + x] = sp[y * s.w + x];
      }
    }
  }
  return out;
}

}  // namespace mstn

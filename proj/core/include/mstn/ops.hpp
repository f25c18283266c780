#pragma once

// Channel-vector ops used by the attention path, plus the training loss.

#include <cmath>
#include <optional>
#include <type_traits>
#include <utility>

#include "mstn/tensor.hpp"

namespace mstn {

/// (N,C,H,W) -> (N,C,1,1), mean over the spatial plane.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  const Shape& is = input.shape();
  const int plane = is.h * is.w;
  const T inv = T(1) / static_cast<T>(plane);
  std::vector<T> out(static_cast<size_t>(is.n) * is.c);
  const auto src = input.data();
  for (int n = 0; n < is.n; ++n) {
    for (int c = 0; c < is.c; ++c) {
      const T* p = src.data() + (static_cast<size_t>(n) * is.c + c) * plane;
      T acc = T(0);
      for (int i = 0; i < plane; ++i) acc += p[i];
      out[static_cast<size_t>(n) * is.c + c] = acc * inv;
    }
  }
  auto backward = [plane, inv](Node<T>& self) {
    auto& in = *self.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    const int nc = self.shape.n * self.shape.c;
    for (int i = 0; i < nc; ++i) {
      const T g = self.grad[i] * inv;
      T* dst = in.grad.data() + static_cast<size_t>(i) * plane;
      for (int j = 0; j < plane; ++j) dst[j] += g;
    }
  };
  return detail::make_op<T>({is.n, is.c, 1, 1}, std::move(out), {input},
                            std::move(backward));
}

/// y[n,d] = sum_c w[d,c] * x[n,c] (+ b[d]); x (N,C,1,1), w (D,C,1,1),
/// b (D,1,1,1), y (N,D,1,1).
template <class T>
Tensor<T> fully_connected(
    const Tensor<T>& input, const Tensor<T>& weight,
    const std::type_identity_t<std::optional<Tensor<T>>>& bias) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.h != 1 || is.w != 1) {
    throw ShapeError("fully_connected: input must be (N,C,1,1), got " +
                     is.str());
  }
  if (ws.h != 1 || ws.w != 1 || ws.c != is.c) {
    throw ShapeError("fully_connected: weight " + ws.str() +
                     " does not match input " + is.str());
  }
  const int N = is.n, C = is.c, D = ws.n;
  if (bias && !(bias->shape() == Shape{D, 1, 1, 1})) {
    throw ShapeError("fully_connected: bias shape " + bias->shape().str() +
                     " does not match " + std::to_string(D) + " outputs");
  }

  const auto x = input.data();
  const auto w = weight.data();
  std::vector<T> out(static_cast<size_t>(N) * D, T(0));
  for (int n = 0; n < N; ++n) {
    for (int d = 0; d < D; ++d) {
      T acc = bias ? bias->data()[d] : T(0);
      const T* wp = w.data() + static_cast<size_t>(d) * C;
      const T* xp = x.data() + static_cast<size_t>(n) * C;
      for (int c = 0; c < C; ++c) acc += wp[c] * xp[c];
      out[static_cast<size_t>(n) * D + d] = acc;
    }
  }

  const bool has_bias = bias.has_value();
  auto backward = [N, C, D, has_bias](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& w = *self.parents[1];
    if (in.requires_grad) {
      in.ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int d = 0; d < D; ++d) {
          const T g = self.grad[static_cast<size_t>(n) * D + d];
          const T* wp = w.value.data() + static_cast<size_t>(d) * C;
          T* gx = in.grad.data() + static_cast<size_t>(n) * C;
          for (int c = 0; c < C; ++c) gx[c] += g * wp[c];
        }
      }
    }
    if (w.requires_grad) {
      w.ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int d = 0; d < D; ++d) {
          const T g = self.grad[static_cast<size_t>(n) * D + d];
          const T* xp = in.value.data() + static_cast<size_t>(n) * C;
          T* gw = w.grad.data() + static_cast<size_t>(d) * C;
          for (int c = 0; c < C; ++c) gw[c] += g * xp[c];
        }
      }
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      b.ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int d = 0; d < D; ++d) {
          b.grad[d] += self.grad[static_cast<size_t>(n) * D + d];
        }
      }
    }
  };
  if (bias) {
    return detail::make_op<T>({N, D, 1, 1}, std::move(out),
                              {input, weight, *bias}, std::move(backward));
  }
  return detail::make_op<T>({N, D, 1, 1}, std::move(out), {input, weight},
                            std::move(backward));
}

/// Elementwise two-way softmax over a pair of logit tensors of equal shape.
/// Returns (a, b) with a + b == 1; computed with max subtraction so large
/// logits cannot overflow.
template <class T>
std::pair<Tensor<T>, Tensor<T>> softmax_pair(const Tensor<T>& logit_a,
                                             const Tensor<T>& logit_b) {
  detail::check_same_shape(logit_a, logit_b, "softmax_pair");
  const size_t n = logit_a.shape().numel();
  const auto la = logit_a.data();
  const auto lb = logit_b.data();
  std::vector<T> av(n), bv(n);
  for (size_t i = 0; i < n; ++i) {
    const T m = std::max(la[i], lb[i]);
    const T ea = std::exp(la[i] - m);
    const T eb = std::exp(lb[i] - m);
    const T inv = T(1) / (ea + eb);
    av[i] = ea * inv;
    bv[i] = eb * inv;
  }

  // d a / d la = a*b, d a / d lb = -a*b (and symmetrically for b). Each output
  // is its own node; grads from both accumulate into the shared logits.
  auto grad_into = [n](Node<T>& self, T sign_first) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const bool ga = pa.requires_grad;
    const bool gb = pb.requires_grad;
    if (!ga && !gb) return;
    if (ga) pa.ensure_grad();
    if (gb) pb.ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const T v = self.value[i];
      const T j = self.grad[i] * v * (T(1) - v) * sign_first;
      if (ga) pa.grad[i] += j;
      if (gb) pb.grad[i] -= j;
    }
  };
  Tensor<T> a = detail::make_op<T>(
      logit_a.shape(), std::move(av), {logit_a, logit_b},
      [grad_into](Node<T>& self) { grad_into(self, T(1)); });
  Tensor<T> b = detail::make_op<T>(
      logit_b.shape(), std::move(bv), {logit_a, logit_b},
      [grad_into](Node<T>& self) { grad_into(self, T(-1)); });
  return {std::move(a), std::move(b)};
}

/// Mean absolute error over all elements; returns a (1,1,1,1) scalar.
/// Subgradient at zero difference is 0.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_shape(pred, target, "l1_loss");
  const size_t n = pred.shape().numel();
  const T inv = T(1) / static_cast<T>(n);
  const auto p = pred.data();
  const auto t = target.data();
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += std::abs(p[i] - t[i]);
  std::vector<T> out{acc * inv};

  auto backward = [n, inv](Node<T>& self) {
    auto& pr = *self.parents[0];
    auto& tg = *self.parents[1];
    const T g = self.grad[0] * inv;
    const bool gp = pr.requires_grad;
    const bool gt = tg.requires_grad;
    if (!gp && !gt) return;
    if (gp) pr.ensure_grad();
    if (gt) tg.ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const T d = pr.value[i] - tg.value[i];
      const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (gp) pr.grad[i] += s;
      if (gt) tg.grad[i] -= s;
    }
  };
  return detail::make_op<T>({1, 1, 1, 1}, std::move(out), {pred, target},
                            std::move(backward));
}

}  // namespace mstn

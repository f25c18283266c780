#pragma once

// Direct 2-D cross-correlation and its transpose, with full reverse-mode
// gradients. Loops are ordered so the innermost index walks rows
// contiguously; the stride-1 case is split out so it vectorizes.

#include <algorithm>
#include <optional>
#include <type_traits>

#include "mstn/tensor.hpp"

namespace mstn {
namespace detail {

struct TapRange {
  int lo;
  int hi;  // inclusive
  bool empty() const { return lo > hi; }
};

/// Indices q in [0, q_len) with q*s - p + kk inside [0, m_len).
inline TapRange tap_range(int q_len, int m_len, int s, int p, int kk) {
  const int num_lo = p - kk;
  const int lo = num_lo <= 0 ? 0 : (num_lo + s - 1) / s;
  const int num_hi = m_len - 1 + p - kk;
  const int hi = num_hi < 0 ? -1 : std::min(q_len - 1, num_hi / s);
  return {lo, hi};
}

template <class T>
void axpy_strided(T* dst, const T* src, T a, int lo, int hi, int src_stride) {
  if (src_stride == 1) {
    for (int q = lo; q <= hi; ++q) dst[q] += a * src[q];
  } else {
    for (int q = lo; q <= hi; ++q) dst[q] += a * src[q * src_stride];
  }
}

template <class T>
void axpy_scatter(T* dst, const T* src, T a, int lo, int hi, int dst_stride) {
  if (dst_stride == 1) {
    for (int q = lo; q <= hi; ++q) dst[q] += a * src[q];
  } else {
    for (int q = lo; q <= hi; ++q) dst[q * dst_stride] += a * src[q];
  }
}

template <class T>
T dot_strided(const T* a, const T* b, int lo, int hi, int a_stride) {
  T acc = T(0);
  if (a_stride == 1) {
    for (int q = lo; q <= hi; ++q) acc += a[q] * b[q];
  } else {
    for (int q = lo; q <= hi; ++q) acc += a[q * a_stride] * b[q];
  }
  return acc;
}

struct ConvDims {
  int n, cin, h, w;    // input
  int cout, k, s, p;   // filter geometry
  int ho, wo;          // output
};

// out[n,co,oh,ow] += sum_{ci,kh,kw} in[n,ci,oh*s-p+kh,ow*s-p+kw] * w[co,ci,kh,kw]
template <class T>
void conv2d_forward_accum(const T* in, const T* w, T* out, const ConvDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      T* outp = out + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
      for (int ci = 0; ci < d.cin; ++ci) {
        const T* inp = in + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
        const T* wp = w + (static_cast<size_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.ho, d.h, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.wo, d.w, d.s, d.p, kw);
            if (rw.empty()) continue;
            const T wv = wp[kh * d.k + kw];
            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
              const int ih = oh * d.s - d.p + kh;
              axpy_strided(outp + oh * d.wo, inp + ih * d.w - d.p + kw, wv,
                           rw.lo, rw.hi, d.s);
            }
          }
        }
      }
    }
  }
}

// gin[n,ci,oh*s-p+kh,ow*s-p+kw] += sum_co gout[n,co,oh,ow] * w[co,ci,kh,kw]
template <class T>
void conv2d_input_grad_accum(const T* gout, const T* w, T* gin,
                             const ConvDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      const T* gop = gout + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
      for (int ci = 0; ci < d.cin; ++ci) {
        T* ginp = gin + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
        const T* wp = w + (static_cast<size_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.ho, d.h, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.wo, d.w, d.s, d.p, kw);
            if (rw.empty()) continue;
            const T wv = wp[kh * d.k + kw];
            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
              const int ih = oh * d.s - d.p + kh;
              axpy_scatter(ginp + ih * d.w - d.p + kw, gop + oh * d.wo, wv,
                           rw.lo, rw.hi, d.s);
            }
          }
        }
      }
    }
  }
}

// gw[co,ci,kh,kw] += sum_{n,oh,ow} in[n,ci,oh*s-p+kh,ow*s-p+kw] * gout[n,co,oh,ow]
template <class T>
void conv2d_weight_grad_accum(const T* in, const T* gout, T* gw,
                              const ConvDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      const T* gop = gout + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
      for (int ci = 0; ci < d.cin; ++ci) {
        const T* inp = in + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
        T* gwp = gw + (static_cast<size_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.ho, d.h, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.wo, d.w, d.s, d.p, kw);
            if (rw.empty()) continue;
            T acc = T(0);
            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
              const int ih = oh * d.s - d.p + kh;
              acc += dot_strided(inp + ih * d.w - d.p + kw, gop + oh * d.wo,
                                 rw.lo, rw.hi, d.s);
            }
            gwp[kh * d.k + kw] += acc;
          }
        }
      }
    }
  }
}

struct ConvTDims {
  int n, cin, h, w;    // input
  int cout, k, s, p;   // filter geometry
  int ho, wo;          // output, ho = (h-1)*s - 2p + k
};

// out[n,co,ih*s-p+kh,iw*s-p+kw] += sum_ci in[n,ci,ih,iw] * w[ci,co,kh,kw]
template <class T>
void convt_forward_accum(const T* in, const T* w, T* out, const ConvTDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      const T* inp = in + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
      for (int co = 0; co < d.cout; ++co) {
        T* outp = out + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
        const T* wp = w + (static_cast<size_t>(ci) * d.cout + co) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.h, d.ho, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.w, d.wo, d.s, d.p, kw);
            if (rw.empty()) continue;
            const T wv = wp[kh * d.k + kw];
            for (int ih = rh.lo; ih <= rh.hi; ++ih) {
              const int oh = ih * d.s - d.p + kh;
              axpy_scatter(outp + oh * d.wo - d.p + kw, inp + ih * d.w, wv,
                           rw.lo, rw.hi, d.s);
            }
          }
        }
      }
    }
  }
}

// gin[n,ci,ih,iw] += sum_co gout[n,co,ih*s-p+kh,iw*s-p+kw] * w[ci,co,kh,kw]
template <class T>
void convt_input_grad_accum(const T* gout, const T* w, T* gin,
                            const ConvTDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      T* ginp = gin + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
      for (int co = 0; co < d.cout; ++co) {
        const T* gop = gout + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
        const T* wp = w + (static_cast<size_t>(ci) * d.cout + co) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.h, d.ho, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.w, d.wo, d.s, d.p, kw);
            if (rw.empty()) continue;
            const T wv = wp[kh * d.k + kw];
            for (int ih = rh.lo; ih <= rh.hi; ++ih) {
              const int oh = ih * d.s - d.p + kh;
              axpy_strided(ginp + ih * d.w, gop + oh * d.wo - d.p + kw, wv,
                           rw.lo, rw.hi, d.s);
            }
          }
        }
      }
    }
  }
}

// gw[ci,co,kh,kw] += sum_{n,ih,iw} in[n,ci,ih,iw] * gout[n,co,ih*s-p+kh,iw*s-p+kw]
template <class T>
void convt_weight_grad_accum(const T* in, const T* gout, T* gw,
                             const ConvTDims& d) {
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      const T* inp = in + (static_cast<size_t>(n) * d.cin + ci) * d.h * d.w;
      for (int co = 0; co < d.cout; ++co) {
        const T* gop = gout + (static_cast<size_t>(n) * d.cout + co) * d.ho * d.wo;
        T* gwp = gw + (static_cast<size_t>(ci) * d.cout + co) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const TapRange rh = tap_range(d.h, d.ho, d.s, d.p, kh);
          if (rh.empty()) continue;
          for (int kw = 0; kw < d.k; ++kw) {
            const TapRange rw = tap_range(d.w, d.wo, d.s, d.p, kw);
            if (rw.empty()) continue;
            T acc = T(0);
            for (int ih = rh.lo; ih <= rh.hi; ++ih) {
              const int oh = ih * d.s - d.p + kh;
              acc += dot_strided(gop + oh * d.wo - d.p + kw, inp + ih * d.w,
                                 rw.lo, rw.hi, d.s);
            }
            gwp[kh * d.k + kw] += acc;
          }
        }
      }
    }
  }
}

// Per-channel bias: broadcast into every spatial position.
template <class T>
void bias_fill(const T* bias, T* out, int n, int c, int plane) {
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T b = bias[ch];
      T* dst = out + (static_cast<size_t>(i) * c + ch) * plane;
      for (int p = 0; p < plane; ++p) dst[p] = b;
    }
  }
}

template <class T>
void bias_grad_accum(const T* gout, T* gbias, int n, int c, int plane) {
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = gout + (static_cast<size_t>(i) * c + ch) * plane;
      T acc = T(0);
      for (int p = 0; p < plane; ++p) acc += src[p];
      gbias[ch] += acc;
    }
  }
}

template <class T>
void check_conv_args(const Tensor<T>& input, const Tensor<T>& weight,
                     const std::optional<Tensor<T>>& bias, int stride,
                     int padding, bool transposed, const char* op) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) {
    throw ConfigError(std::string(op) + ": kernel must be square, got " +
                      ws.str());
  }
  if (ws.h < 1 || stride < 1) {
    throw ConfigError(std::string(op) + ": kernel and stride must be >= 1");
  }
  if (padding < 0) {
    throw ConfigError(std::string(op) + ": padding must be >= 0");
  }
  const int expected_cin = transposed ? ws.n : ws.c;
  if (is.c != expected_cin) {
    throw ShapeError(std::string(op) + ": input channels " +
                     std::to_string(is.c) + " do not match weight " + ws.str());
  }
  if (bias) {
    const int cout = transposed ? ws.c : ws.n;
    const Shape& bs = bias->shape();
    if (!(bs == Shape{cout, 1, 1, 1})) {
      throw ShapeError(std::string(op) + ": bias shape " + bs.str() +
                       " does not match " + std::to_string(cout) + " channels");
    }
  }
}

}  // namespace detail

/// Cross-correlation of (N,Cin,H,W) with (Cout,Cin,k,k); output
/// (N,Cout,(H+2p-k)/s+1,(W+2p-k)/s+1). The bias parameter is excluded from
/// deduction so std::nullopt and bare tensors both work at call sites.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                 int stride, int padding) {
  detail::check_conv_args(input, weight, bias, stride, padding, false, "conv2d");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  detail::ConvDims d;
  d.n = is.n;
  d.cin = is.c;
  d.h = is.h;
  d.w = is.w;
  d.cout = ws.n;
  d.k = ws.h;
  d.s = stride;
  d.p = padding;
  d.ho = (is.h + 2 * padding - d.k) / stride + 1;
  d.wo = (is.w + 2 * padding - d.k) / stride + 1;
  if (is.h + 2 * padding - d.k < 0 || is.w + 2 * padding - d.k < 0 ||
      d.ho < 1 || d.wo < 1) {
    throw ConfigError("conv2d: non-positive output dims for input " + is.str() +
                      ", k=" + std::to_string(d.k) + ", s=" +
                      std::to_string(stride) + ", p=" + std::to_string(padding));
  }

  std::vector<T> out(static_cast<size_t>(d.n) * d.cout * d.ho * d.wo, T(0));
  if (bias) {
    detail::bias_fill(bias->data().data(), out.data(), d.n, d.cout,
                      d.ho * d.wo);
  }
  detail::conv2d_forward_accum(input.data().data(), weight.data().data(),
                               out.data(), d);

  const bool has_bias = bias.has_value();
  auto backward = [d, has_bias](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& w = *self.parents[1];
    if (in.requires_grad) {
      in.ensure_grad();
      detail::conv2d_input_grad_accum(self.grad.data(), w.value.data(),
                                      in.grad.data(), d);
    }
    if (w.requires_grad) {
      w.ensure_grad();
      detail::conv2d_weight_grad_accum(in.value.data(), self.grad.data(),
                                       w.grad.data(), d);
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      b.ensure_grad();
      detail::bias_grad_accum(self.grad.data(), b.grad.data(), d.n, d.cout,
                              d.ho * d.wo);
    }
  };
  const Shape os{d.n, d.cout, d.ho, d.wo};
  if (bias) {
    return detail::make_op<T>(os, std::move(out), {input, weight, *bias},
                              std::move(backward));
  }
  return detail::make_op<T>(os, std::move(out), {input, weight},
                            std::move(backward));
}

/// Adjoint of conv2d with the same geometry; weight laid out (Cin,Cout,k,k).
/// Output spatial dims are (H-1)*s - 2p + k; k=4,s=2,p=1 doubles exactly.
template <class T>
Tensor<T> conv_transpose2d(
    const Tensor<T>& input, const Tensor<T>& weight,
    const std::type_identity_t<std::optional<Tensor<T>>>& bias, int stride,
    int padding) {
  detail::check_conv_args(input, weight, bias, stride, padding, true,
                          "conv_transpose2d");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  detail::ConvTDims d;
  d.n = is.n;
  d.cin = is.c;
  d.h = is.h;
  d.w = is.w;
  d.cout = ws.c;
  d.k = ws.h;
  d.s = stride;
  d.p = padding;
  d.ho = (is.h - 1) * stride - 2 * padding + d.k;
  d.wo = (is.w - 1) * stride - 2 * padding + d.k;
  if (d.ho < 1 || d.wo < 1) {
    throw ConfigError("conv_transpose2d: non-positive output dims for input " +
                      is.str() + ", k=" + std::to_string(d.k) + ", s=" +
                      std::to_string(stride) + ", p=" + std::to_string(padding));
  }

  std::vector<T> out(static_cast<size_t>(d.n) * d.cout * d.ho * d.wo, T(0));
  if (bias) {
    detail::bias_fill(bias->data().data(), out.data(), d.n, d.cout,
                      d.ho * d.wo);
  }
  detail::convt_forward_accum(input.data().data(), weight.data().data(),
                              out.data(), d);

  const bool has_bias = bias.has_value();
  auto backward = [d, has_bias](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& w = *self.parents[1];
    if (in.requires_grad) {
      in.ensure_grad();
      detail::convt_input_grad_accum(self.grad.data(), w.value.data(),
                                     in.grad.data(), d);
    }
    if (w.requires_grad) {
      w.ensure_grad();
      detail::convt_weight_grad_accum(in.value.data(), self.grad.data(),
                                      w.grad.data(), d);
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      b.ensure_grad();
      detail::bias_grad_accum(self.grad.data(), b.grad.data(), d.n, d.cout,
                              d.ho * d.wo);
    }
  };
  const Shape os{d.n, d.cout, d.ho, d.wo};
  if (bias) {
    return detail::make_op<T>(os, std::move(out), {input, weight, *bias},
                              std::move(backward));
  }
  return detail::make_op<T>(os, std::move(out), {input, weight},
                            std::move(backward));
}

}  // namespace mstn

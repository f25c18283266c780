#pragma once

// Independent reference implementations used to validate the library. These
// are written as plain nested loops with no shared code paths with the real
// kernels; keep them slow and obvious.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mstn/rng.hpp"
#include "mstn/tensor.hpp"

namespace oracle {

using mstn::Rng;
using mstn::Shape;
using mstn::Tensor;

inline size_t idx(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

inline Tensor<double> rand_tensor(const Shape& s, Rng& rng, double lo = 0.0,
                                  double hi = 1.0) {
  std::vector<double> v(s.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from_data(s, std::move(v));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  auto av = a.data();
  auto bv = b.data();
  if (av.size() != bv.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(av[i]) - bv[i]));
  }
  return m;
}

// y[n,co,oh,ow] = b[co] + sum_{ci,kh,kw} x[n,ci,oh*s-p+kh,ow*s-p+kw] * w[co,ci,kh,kw]
inline Tensor<double> ref_conv2d(const Tensor<double>& x,
                                 const Tensor<double>& w,
                                 const std::optional<Tensor<double>>& b,
                                 int stride, int padding) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * padding - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * padding - ws.w) / stride + 1;
  const Shape ys{xs.n, ws.n, oh, ow};
  std::vector<double> y(ys.numel(), 0.0);
  auto xv = x.data();
  auto wv = w.data();
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int q = 0; q < oh; ++q)
        for (int r = 0; r < ow; ++r) {
          double acc = b ? b->data()[co] : 0.0;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int ih = q * stride - padding + kh;
                const int iw = r * stride - padding + kw;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += xv[idx(xs, n, ci, ih, iw)] * wv[idx(ws, co, ci, kh, kw)];
              }
          y[idx(ys, n, co, q, r)] = acc;
        }
  return Tensor<double>::from_data(ys, std::move(y));
}

// Scatter form: every input pixel adds x*w into y[ih*s-p+kh, iw*s-p+kw].
// Weight layout (Cin, Cout, k, k).
inline Tensor<double> ref_conv_transpose2d(const Tensor<double>& x,
                                           const Tensor<double>& w,
                                           const std::optional<Tensor<double>>& b,
                                           int stride, int padding) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h - 1) * stride - 2 * padding + ws.h;
  const int ow = (xs.w - 1) * stride - 2 * padding + ws.w;
  const Shape ys{xs.n, ws.c, oh, ow};
  std::vector<double> y(ys.numel(), 0.0);
  auto xv = x.data();
  auto wv = w.data();
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.c; ++co) {
      for (int ci = 0; ci < xs.c; ++ci)
        for (int ih = 0; ih < xs.h; ++ih)
          for (int iw = 0; iw < xs.w; ++iw)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int q = ih * stride - padding + kh;
                const int r = iw * stride - padding + kw;
                if (q < 0 || q >= oh || r < 0 || r >= ow) continue;
                y[idx(ys, n, co, q, r)] +=
                    xv[idx(xs, n, ci, ih, iw)] * wv[idx(ws, ci, co, kh, kw)];
              }
      if (b) {
        for (int q = 0; q < oh; ++q)
          for (int r = 0; r < ow; ++r) y[idx(ys, n, co, q, r)] += b->data()[co];
      }
    }
  return Tensor<double>::from_data(ys, std::move(y));
}

template <typename T>
double ref_psnr(const Tensor<T>& x, const Tensor<T>& y, double range) {
  auto xv = x.data();
  auto yv = y.data();
  double se = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) {
    const double d = static_cast<double>(xv[i]) - static_cast<double>(yv[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(xv.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

// Direct windowed SSIM: for each fully-inside 11x11 window, weighted moments
// under a freshly built Gaussian (sigma 1.5), averaged over windows, channels,
// and batch.
template <typename T>
double ref_ssim(const Tensor<T>& x, const Tensor<T>& y, double range) {
  const Shape s = x.shape();
  const int W = 11;
  double g[W][W];
  {
    double lin[W];
    double norm = 0.0;
    for (int i = 0; i < W; ++i) {
      const double d = i - (W - 1) / 2.0;
      lin[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    }
    for (int i = 0; i < W; ++i)
      for (int j = 0; j < W; ++j) {
        g[i][j] = lin[i] * lin[j];
        norm += g[i][j];
      }
    for (int i = 0; i < W; ++i)
      for (int j = 0; j < W; ++j) g[i][j] /= norm;
  }
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  auto xv = x.data();
  auto yv = y.data();
  double total = 0.0;
  long count = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh + W <= s.h; ++oh)
        for (int ow = 0; ow + W <= s.w; ++ow) {
          double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int i = 0; i < W; ++i)
            for (int j = 0; j < W; ++j) {
              const double a = xv[idx(s, n, c, oh + i, ow + j)];
              const double b = yv[idx(s, n, c, oh + i, ow + j)];
              mx += g[i][j] * a;
              my += g[i][j] * b;
              mxx += g[i][j] * a * a;
              myy += g[i][j] * b * b;
              mxy += g[i][j] * a * b;
            }
          const double vx = mxx - mx * mx;
          const double vy = myy - my * my;
          const double cxy = mxy - mx * my;
          total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
          ++count;
        }
  return total / static_cast<double>(count);
}

// Step-by-step attention oracle: squeeze, compress, two gates, paired softmax,
// per-channel blend. fc_w (D,C), fc_b (D), ga_w/gb_w (C,D) given as tensors in
// their registry shapes (D,C,1,1), (D,1,1,1), (C,D,1,1).
inline Tensor<double> ref_afsm(const Tensor<double>& x1,
                               const Tensor<double>& x2,
                               const Tensor<double>& fc_w,
                               const Tensor<double>& fc_b,
                               const Tensor<double>& ga_w,
                               const Tensor<double>& gb_w) {
  const Shape s = x1.shape();
  const int C = s.c;
  const int D = fc_w.shape().n;
  auto x1v = x1.data();
  auto x2v = x2.data();
  std::vector<double> out(s.numel());
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> sq(C, 0.0);
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          acc += x1v[idx(s, n, c, h, w)] + x2v[idx(s, n, c, h, w)];
        }
      sq[c] = acc / (static_cast<double>(s.h) * s.w);
    }
    std::vector<double> z(D, 0.0);
    for (int d = 0; d < D; ++d) {
      double acc = fc_b.data()[d];
      for (int c = 0; c < C; ++c) acc += fc_w.at(d, c, 0, 0) * sq[c];
      z[d] = std::max(acc, 0.0);
    }
    for (int c = 0; c < C; ++c) {
      double la = 0.0, lb = 0.0;
      for (int d = 0; d < D; ++d) {
        la += ga_w.at(c, d, 0, 0) * z[d];
        lb += gb_w.at(c, d, 0, 0) * z[d];
      }
      const double m = std::max(la, lb);
      const double ea = std::exp(la - m), eb = std::exp(lb - m);
      const double a = ea / (ea + eb), b = eb / (ea + eb);
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          out[idx(s, n, c, h, w)] = a * x1v[idx(s, n, c, h, w)] +
                                    b * x2v[idx(s, n, c, h, w)];
        }
    }
  }
  return Tensor<double>::from_data(s, std::move(out));
}

}  // namespace oracle

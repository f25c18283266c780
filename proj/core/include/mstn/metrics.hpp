#pragma once

// Full-reference quality metrics. Plain value computations (no autodiff);
// everything accumulates in double regardless of the tensor's precision.

#include <cmath>
#include <limits>
#include <vector>

#include "mstn/tensor.hpp"

namespace mstn {

/// 10*log10(range^2 / MSE) in dB; +infinity when the images are identical.
template <class T>
double psnr(const Tensor<T>& x, const Tensor<T>& y, double data_range = 1.0) {
  detail::check_same_shape(x, y, "psnr");
  if (data_range <= 0.0) throw ConfigError("psnr: data_range must be > 0");
  const auto xv = x.data();
  const auto yv = y.data();
  const size_t n = x.shape().numel();
  // Neumaier-compensated sum: a plain accumulator drifts by ~n*eps, which is
  // enough to push closed-form cases (uniform 0.1 error -> 20 dB) off their
  // exact value.
  double se = 0.0, comp = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(xv[i]) - static_cast<double>(yv[i]);
    const double term = d * d;
    const double t = se + term;
    comp += std::abs(se) >= std::abs(term) ? (se - t) + term : (term - t) + se;
    se = t;
  }
  const double mse = (se + comp) / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

namespace detail {

inline std::vector<double> gaussian_window_11() {
  // 11 taps, sigma 1.5, normalized to sum 1.
  std::vector<double> w(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering: (H,W) -> (H-10, W-10).
inline std::vector<double> filter_valid(const std::vector<double>& img, int h,
                                        int w, const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int wo = w - k + 1;
  const int ho = h - k + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * wo);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += win[t] * img[y * w + x + t];
      tmp[y * wo + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(ho) * wo);
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += win[t] * tmp[(y + t) * wo + x];
      out[y * wo + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), K1=0.01,
/// K2=0.03, valid windows only, computed per channel and averaged.
template <class T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, double data_range = 1.0) {
  detail::check_same_shape(x, y, "ssim");
  if (data_range <= 0.0) throw ConfigError("ssim: data_range must be > 0");
  const Shape& s = x.shape();
  if (s.h < 11 || s.w < 11) {
    throw ConfigError("ssim: image " + s.str() +
                      " is smaller than the 11x11 window");
  }
  const double c1 = 0.01 * data_range * 0.01 * data_range;
  const double c2 = 0.03 * data_range * 0.03 * data_range;
  const auto win = detail::gaussian_window_11();

  const auto xv = x.data();
  const auto yv = y.data();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  double total = 0.0;
  size_t count = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    std::vector<double> xa(plane), ya(plane), xx(plane), yy(plane), xy(plane);
    const size_t off = nc * plane;
    for (size_t i = 0; i < plane; ++i) {
      const double a = static_cast<double>(xv[off + i]);
      const double b = static_cast<double>(yv[off + i]);
      xa[i] = a;
      ya[i] = b;
      xx[i] = a * a;
      yy[i] = b * b;
      xy[i] = a * b;
    }
    const auto mx = detail::filter_valid(xa, s.h, s.w, win);
    const auto my = detail::filter_valid(ya, s.h, s.w, win);
    const auto mxx = detail::filter_valid(xx, s.h, s.w, win);
    const auto myy = detail::filter_valid(yy, s.h, s.w, win);
    const auto mxy = detail::filter_valid(xy, s.h, s.w, win);
    for (size_t i = 0; i < mx.size(); ++i) {
      const double mu_x = mx[i], mu_y = my[i];
      const double var_x = mxx[i] - mu_x * mu_x;
      const double var_y = myy[i] - mu_y * mu_y;
      const double cov = mxy[i] - mu_x * mu_y;
      const double num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
      const double den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
      total += num / den;
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace mstn

#include <optional>

#include "conv_sweep.hpp"
#include "doctest.h"
#include "mstn/conv.hpp"
#include "oracles.hpp"

using namespace mstn;
using oracle::idx;
using oracle::rand_tensor;

TEST_CASE("conv2d matches hand-computed 1d example") {
  // x = [1 2 3; 4 5 6; 7 8 9], k=3 all-ones, p=1, s=1: center tap sums the
  // 3x3 neighborhood
  auto x = Tensor<double>::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = Tensor<double>::from_data({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto out = conv2d(x, w, std::nullopt, 1, 1);
  CHECK(out.shape() == Shape{1, 1, 3, 3});
  CHECK(out.at(0, 0, 1, 1) == 45.0);
  CHECK(out.at(0, 0, 0, 0) == 1 + 2 + 4 + 5);
  CHECK(out.at(0, 0, 2, 2) == 5 + 6 + 8 + 9);
}

TEST_CASE("conv2d stride-2 geometry") {
  Rng rng(1);
  auto x = rand_tensor({1, 1, 7, 9}, rng);
  auto w = rand_tensor({2, 1, 3, 3}, rng);
  auto out = conv2d(x, w, std::nullopt, 2, 1);
  CHECK(out.shape() == Shape{1, 2, 4, 5});
}

TEST_CASE("conv_transpose2d doubles spatial size with k4 s2 p1") {
  Rng rng(3);
  auto x = rand_tensor({2, 3, 5, 6}, rng);
  auto w = rand_tensor({3, 2, 4, 4}, rng);
  auto out = conv_transpose2d(x, w, std::nullopt, 2, 1);
  CHECK(out.shape() == Shape{2, 2, 10, 12});
  CHECK(oracle::max_abs_diff(
            out, oracle::ref_conv_transpose2d(x, w, std::nullopt, 2, 1)) <
        1e-12);
}

TEST_CASE("invalid conv arguments raise") {
  Rng rng(4);
  auto x = rand_tensor({1, 3, 5, 5}, rng);
  auto w = rand_tensor({2, 4, 3, 3}, rng);  // channel mismatch
  CHECK_THROWS_AS(conv2d(x, w, std::nullopt, 1, 1), ShapeError);

  auto w2 = rand_tensor({2, 3, 3, 3}, rng);
  auto bad_bias = rand_tensor({3, 1, 1, 1}, rng);
  std::optional<Tensor<double>> ob = bad_bias;
  CHECK_THROWS_AS(conv2d(x, w2, ob, 1, 1), ShapeError);

  auto tiny = rand_tensor({1, 3, 2, 2}, rng);
  auto w7 = rand_tensor({2, 3, 7, 7}, rng);  // output would be empty
  CHECK_THROWS_AS(conv2d(tiny, w7, std::nullopt, 1, 1), ConfigError);
}

// Brute-force gradients for conv2d, mirroring the forward oracle's tap walk.
namespace {

struct ConvGrads {
  Tensor<double> gx, gw, gb;
};

ConvGrads ref_conv2d_grads(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& y, int s, int p) {
  const Shape xs = x.shape(), ws = w.shape(), ys = y.shape();
  std::vector<double> gx(xs.numel(), 0.0), gw(ws.numel(), 0.0),
      gb(ws.n, 0.0);
  auto xv = x.data();
  auto wv = w.data();
  auto yv = y.data();
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int q = 0; q < ys.h; ++q)
        for (int r = 0; r < ys.w; ++r) {
          const double g = yv[idx(ys, n, co, q, r)];
          gb[co] += g;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int ih = q * s - p + kh;
                const int iw = r * s - p + kw;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                gx[idx(xs, n, ci, ih, iw)] +=
                    g * wv[idx(ws, co, ci, kh, kw)];
                gw[idx(ws, co, ci, kh, kw)] += g * xv[idx(xs, n, ci, ih, iw)];
              }
        }
  return {Tensor<double>::from_data(xs, std::move(gx)),
          Tensor<double>::from_data(ws, std::move(gw)),
          Tensor<double>::from_data({ws.n, 1, 1, 1}, std::move(gb))};
}

ConvGrads ref_convt_grads(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>& y, int s, int p) {
  const Shape xs = x.shape(), ws = w.shape(), ys = y.shape();
  std::vector<double> gx(xs.numel(), 0.0), gw(ws.numel(), 0.0),
      gb(ws.c, 0.0);
  auto xv = x.data();
  auto wv = w.data();
  auto yv = y.data();
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.c; ++co)
      for (int q = 0; q < ys.h; ++q)
        for (int r = 0; r < ys.w; ++r) gb[co] += yv[idx(ys, n, co, q, r)];
    for (int ci = 0; ci < xs.c; ++ci)
      for (int ih = 0; ih < xs.h; ++ih)
        for (int iw = 0; iw < xs.w; ++iw)
          for (int co = 0; co < ws.c; ++co)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int q = ih * s - p + kh;
                const int r = iw * s - p + kw;
                if (q < 0 || q >= ys.h || r < 0 || r >= ys.w) continue;
                const double g = yv[idx(ys, n, co, q, r)];
                gx[idx(xs, n, ci, ih, iw)] +=
                    g * wv[idx(ws, ci, co, kh, kw)];
                gw[idx(ws, ci, co, kh, kw)] +=
                    g * xv[idx(xs, n, ci, ih, iw)];
              }
  }
  return {Tensor<double>::from_data(xs, std::move(gx)),
          Tensor<double>::from_data(ws, std::move(gw)),
          Tensor<double>::from_data({ws.c, 1, 1, 1}, std::move(gb))};
}

Tensor<double> grad_tensor(const Tensor<double>& t) {
  auto g = t.grad();
  return Tensor<double>::from_data(t.shape(),
                                   std::vector<double>(g.begin(), g.end()));
}

}  // namespace

TEST_CASE("conv2d backward matches brute-force gradients") {
  Rng rng(17);
  for (auto [k, s, p] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0},
                         {4, 2, 1}}) {
    auto x = rand_tensor({2, 3, 8, 7}, rng, -1.0, 1.0);
    auto w = rand_tensor({4, 3, k, k}, rng, -1.0, 1.0);
    auto b = rand_tensor({4, 1, 1, 1}, rng, -1.0, 1.0);
    std::optional<Tensor<double>> ob = b;
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    auto out = conv2d(x, w, ob, s, p);
    auto y = rand_tensor(out.shape(), rng, -1.0, 1.0);
    sum(multiply(out, y)).backward();
    auto ref = ref_conv2d_grads(x, w, y, s, p);
    CHECK(oracle::max_abs_diff(grad_tensor(x), ref.gx) < 1e-11);
    CHECK(oracle::max_abs_diff(grad_tensor(w), ref.gw) < 1e-11);
    CHECK(oracle::max_abs_diff(grad_tensor(b), ref.gb) < 1e-11);
  }
}

TEST_CASE("conv_transpose2d backward matches brute-force gradients") {
  Rng rng(18);
  for (auto [k, s, p] : {std::tuple{4, 2, 1}, {3, 1, 1}, {2, 2, 0}}) {
    auto x = rand_tensor({2, 4, 5, 6}, rng, -1.0, 1.0);
    auto w = rand_tensor({4, 2, k, k}, rng, -1.0, 1.0);
    auto b = rand_tensor({2, 1, 1, 1}, rng, -1.0, 1.0);
    std::optional<Tensor<double>> ob = b;
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    auto out = conv_transpose2d(x, w, ob, s, p);
    auto y = rand_tensor(out.shape(), rng, -1.0, 1.0);
    sum(multiply(out, y)).backward();
    auto ref = ref_convt_grads(x, w, y, s, p);
    CHECK(oracle::max_abs_diff(grad_tensor(x), ref.gx) < 1e-11);
    CHECK(oracle::max_abs_diff(grad_tensor(w), ref.gw) < 1e-11);
    CHECK(oracle::max_abs_diff(grad_tensor(b), ref.gb) < 1e-11);
  }
}

TEST_CASE("exhaustive small-shape sweep vs oracle with adjoint identity") {
  auto res = convsweep::run_conv_sweep(/*seed=*/20240811);
  INFO("cases=", res.cases, " fwd=", res.max_forward_err,
       " adj=", res.max_adjoint_err);
  CHECK(res.cases > 10000);
  CHECK(res.max_forward_err < 1e-10);
  CHECK(res.max_adjoint_err < 1e-10);
}

#pragma once

// Central-difference gradient verification for scalar-valued graphs.
// Works in double; float accumulates too much noise at eps ~ 1e-4.

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mstn/rng.hpp"
#include "mstn/tensor.hpp"

namespace mstn {

struct GradcheckOpts {
  // Small enough that few relu boundaries fall inside difference intervals;
  // at double precision both truncation and rounding stay orders of
  // magnitude below tol.
  double eps = 1e-5;
  double tol = 1e-4;
  // Coordinates checked per input; every coordinate if numel <= max_coords.
  int max_coords = 64;
  uint64_t seed = 0;
  // Relative error uses max(|fd|, |ad|, denom_floor) so near-zero gradients
  // do not blow up the ratio; the floor makes the test absolute (at
  // tol*denom_floor) for gradients below it.
  double denom_floor = 1e-4;
  // When a coordinate disagrees, the analytic gradient is re-evaluated at
  // x-eps and x+eps. If the slope jump across the interval explains at least
  // this fraction of the FD-AD discrepancy, a kink (relu boundary) sits
  // inside the interval -- central differences measure an average of two
  // slopes there and say nothing about either -- so the coordinate is
  // skipped. A wrong-but-smooth gradient shows no jump and still fails.
  double kink_ratio = 0.5;
  // Fraction of checked coordinates allowed to be skipped as kinks before the
  // check fails anyway. In deep composites a weight coordinate touches
  // thousands of relu pre-activations across spatial positions, so a few
  // percent of probes land on a boundary even with a small eps.
  double max_skip_fraction = 0.05;
};

struct GradcheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  int coords_skipped = 0;  // kink-straddling coordinates, see kink_ratio
  std::string worst;       // "input 2 coord 17: ad=..., fd=..."
};

/// fn must rebuild its graph from the current contents of `inputs` on every
/// call and return a (1,1,1,1) scalar. Inputs are perturbed in place and
/// restored.
inline GradcheckResult finite_diff_gradcheck(
    const std::function<Tensor<double>()>& fn,
    std::vector<Tensor<double>> inputs, const GradcheckOpts& opts = {}) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }

  Tensor<double> loss = fn();
  if (!(loss.shape() == Shape{1, 1, 1, 1})) {
    throw UsageError("finite_diff_gradcheck: fn must return a scalar, got " +
                     loss.shape().str());
  }
  loss.backward();

  // Copied out because the kink probe below reruns backward, which replaces
  // the gradient buffers the spans point into.
  std::vector<std::vector<double>> base_grads;
  base_grads.reserve(inputs.size());
  for (const auto& in : inputs) {
    const auto g = in.grad();
    base_grads.emplace_back(g.begin(), g.end());
  }

  GradcheckResult res;
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    const size_t n = in.shape().numel();
    std::vector<size_t> coords(n);
    std::iota(coords.begin(), coords.end(), size_t{0});
    if (n > static_cast<size_t>(opts.max_coords)) {
      Rng rng(opts.seed, static_cast<uint64_t>(t) + 1);
      for (int i = 0; i < opts.max_coords; ++i) {
        const size_t j = i + rng.next_below(n - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(static_cast<size_t>(opts.max_coords));
    }

    const auto& grad = base_grads[t];
    auto vals = in.data();
    for (size_t c : coords) {
      const double saved = vals[c];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[c] = saved + opts.eps;
        fp = fn().item();
        vals[c] = saved - opts.eps;
        fm = fn().item();
        vals[c] = saved;
      }
      const double fd = (fp - fm) / (2.0 * opts.eps);
      const double ad = grad[c];
      const double denom =
          std::max({std::abs(fd), std::abs(ad), opts.denom_floor});
      const double rel = std::abs(fd - ad) / denom;
      ++res.coords_checked;
      if (rel > opts.tol) {
        // Analytic slope on each side of the difference interval.
        const auto grad_at = [&](double x) {
          vals[c] = x;
          for (auto& other : inputs) other.zero_grad();
          fn().backward();
          vals[c] = saved;
          return in.grad()[c];
        };
        const double gp = grad_at(saved + opts.eps);
        const double gm = grad_at(saved - opts.eps);
        if (std::abs(gp - gm) >= opts.kink_ratio * std::abs(fd - ad)) {
          ++res.coords_skipped;
          continue;
        }
      }
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(t) + " coord " +
                    std::to_string(c) + ": ad=" + std::to_string(ad) +
                    ", fd=" + std::to_string(fd);
      }
    }
  }
  const int skip_budget = std::max(
      2, static_cast<int>(opts.max_skip_fraction * res.coords_checked));
  res.ok = res.max_rel_err <= opts.tol && res.coords_skipped <= skip_budget;
  return res;
}

}  // namespace mstn

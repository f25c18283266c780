#pragma once

// Two-branch channel attention (AFSM) and the cross-scale fusion block (MFFM).

#include <optional>
#include <string>

#include "mstn/layers.hpp"

namespace mstn {

/// Adaptive feature selection: u = x1+x2; s = pool(u); z = relu(fc(s));
/// (a,b) = softmax over the two gate projections of z; out = a*x1 + b*x2
/// with per-channel broadcast. a+b == 1, so equal inputs pass through
/// unchanged.
template <class T>
class Afsm {
 public:
  Afsm() = default;
  Afsm(ParamRegistry<T>& reg, const std::string& name, int channels, Rng& rng)
      : channels_(channels), d_(std::max(channels / 4, 4)) {
    fc_ = FullyConnectedLayer<T>(reg, name + ".fc", channels, d_, rng);
    gate_a_ = FullyConnectedLayer<T>(reg, name + ".gate_a", d_, channels, rng,
                                     /*with_bias=*/false);
    gate_b_ = FullyConnectedLayer<T>(reg, name + ".gate_b", d_, channels, rng,
                                     /*with_bias=*/false);
  }

  /// The per-channel gate pair (a, b), each (N,C,1,1) with a+b == 1.
  std::pair<Tensor<T>, Tensor<T>> gates(const Tensor<T>& x1,
                                        const Tensor<T>& x2) const {
    detail::check_same_shape(x1, x2, "afsm_forward");
    if (x1.shape().c != channels_) {
      throw ShapeError("afsm_forward: expected " + std::to_string(channels_) +
                       " channels, got " + x1.shape().str());
    }
    Tensor<T> u = add(x1, x2);
    Tensor<T> s = global_avg_pool(u);
    Tensor<T> z = relu(fc_.forward(s));
    return softmax_pair(gate_a_.forward(z), gate_b_.forward(z));
  }

  Tensor<T> forward(const Tensor<T>& x1, const Tensor<T>& x2) const {
    auto [a, b] = gates(x1, x2);
    return add(multiply(a, x1), multiply(b, x2));
  }

  int compressed_dim() const { return d_; }

 private:
  FullyConnectedLayer<T> fc_;
  FullyConnectedLayer<T> gate_a_;
  FullyConnectedLayer<T> gate_b_;
  int channels_ = 0;
  int d_ = 0;
};

/// Cross-scale fusion: the fine branch is downsampled to the coarse width,
/// fused with the coarse branch (AFSM, or plain addition under the ablation),
/// refined, upsampled back, passed through an RB, and added to the original
/// fine input.
template <class T>
class Mffm {
 public:
  Mffm() = default;
  Mffm(ParamRegistry<T>& reg, const std::string& name, int c_fine, int c_coarse,
       Rng& rng, bool use_afsm)
      : name_(name), c_fine_(c_fine), c_coarse_(c_coarse) {
    down_ = ConvLayer<T>(reg, name + ".down", c_fine, c_coarse, 3, 2, 1, rng);
    if (use_afsm) {
      afsm_.emplace(reg, name + ".afsm", c_coarse, rng);
    }
    mid_ = ConvLayer<T>(reg, name + ".mid", c_coarse, c_coarse, 3, 1, 1, rng);
    // The deconv starts at zero for the same reason RB's conv2 does: the whole
    // cell is then the identity on the fine branch at init.
    up_ = DeconvLayer<T>(reg, name + ".up", c_coarse, c_fine, 4, 2, 1, rng,
                         /*with_bias=*/true, /*zero_init=*/true);
    rb_ = ResidualBlock<T>(reg, name + ".rb", c_fine, c_fine, rng);
  }

  Tensor<T> forward(const Tensor<T>& fine, const Tensor<T>& coarse) const {
    const Shape& fs = fine.shape();
    const Shape& cs = coarse.shape();
    if (fs.c != c_fine_ || cs.c != c_coarse_) {
      throw ShapeError(name_ + ": channel widths (" + fs.str() + ", " +
                       cs.str() + ") do not match configured (" +
                       std::to_string(c_fine_) + ", " +
                       std::to_string(c_coarse_) + ")");
    }
    if (fs.h % 2 != 0 || fs.w % 2 != 0) {
      throw ConfigError(name_ + ": fine input dims must be even, got " +
                        fs.str());
    }
    if (cs.h * 2 != fs.h || cs.w * 2 != fs.w || cs.n != fs.n) {
      throw ShapeError(name_ + ": coarse input " + cs.str() +
                       " is not the half-scale of fine input " + fs.str());
    }
    Tensor<T> f = down_.forward(fine);
    Tensor<T> g = afsm_ ? afsm_->forward(f, coarse) : add(f, coarse);
    Tensor<T> h = up_.forward(mid_.forward(g));
    return add(rb_.forward(h), fine);
  }

 private:
  std::string name_;
  ConvLayer<T> down_;
  std::optional<Afsm<T>> afsm_;
  ConvLayer<T> mid_;
  DeconvLayer<T> up_;
  ResidualBlock<T> rb_;
  int c_fine_ = 0;
  int c_coarse_ = 0;
};

}  // namespace mstn

#pragma once

// Parameterized building blocks. Every parameter is registered (by name, in
// construction order) in the owning model's ParamRegistry; the optimizer and
// checkpoint code iterate that registry, never the layers themselves.

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mstn/conv.hpp"
#include "mstn/ops.hpp"
#include "mstn/rng.hpp"
#include "mstn/tensor.hpp"

namespace mstn {

template <class T>
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T> add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) {
      throw UsageError("ParamRegistry: duplicate parameter '" + name + "'");
    }
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.shape().numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

namespace detail {

// Kaiming-style uniform: w ~ U(-L, L), L = sqrt(6/fan_in). Draw order is
// element order, so a fixed construction order gives bitwise-identical
// parameters for a fixed seed.
template <class T>
Tensor<T> init_uniform(const Shape& shape, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>::from_data(shape, std::move(v));
}

}  // namespace detail

template <class T>
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(ParamRegistry<T>& reg, const std::string& name, int cin, int cout,
            int k, int stride, int padding, Rng& rng, bool with_bias = true,
            bool zero_init = false)
      : stride_(stride), padding_(padding) {
    weight_ = reg.add(
        name + ".weight",
        zero_init
            ? Tensor<T>::zeros({cout, cin, k, k})
            : detail::init_uniform<T>({cout, cin, k, k}, cin * k * k, rng));
    if (with_bias) {
      bias_ = reg.add(name + ".bias", Tensor<T>::zeros({cout, 1, 1, 1}));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight_, bias_, stride_, padding_);
  }

  const Tensor<T>& weight() const { return weight_; }

 private:
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
  int stride_ = 1;
  int padding_ = 0;
};

template <class T>
class DeconvLayer {
 public:
  DeconvLayer() = default;
  DeconvLayer(ParamRegistry<T>& reg, const std::string& name, int cin, int cout,
              int k, int stride, int padding, Rng& rng, bool with_bias = true,
              bool zero_init = false)
      : stride_(stride), padding_(padding) {
    weight_ = reg.add(
        name + ".weight",
        zero_init
            ? Tensor<T>::zeros({cin, cout, k, k})
            : detail::init_uniform<T>({cin, cout, k, k}, cin * k * k, rng));
    if (with_bias) {
      bias_ = reg.add(name + ".bias", Tensor<T>::zeros({cout, 1, 1, 1}));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight_, bias_, stride_, padding_);
  }

 private:
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
  int stride_ = 2;
  int padding_ = 1;
};

/// conv-relu-conv with identity skip; a 1x1 projection replaces the identity
/// iff the channel width changes. No normalization layers anywhere; instead
/// conv2 starts at zero, so the block is the identity (or the projection) at
/// init and the skip-path variance cannot compound across a deep stack.
template <class T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamRegistry<T>& reg, const std::string& name, int cin,
                int cout, Rng& rng)
      : cin_(cin) {
    conv1_ = ConvLayer<T>(reg, name + ".conv1", cin, cout, 3, 1, 1, rng);
    conv2_ = ConvLayer<T>(reg, name + ".conv2", cout, cout, 3, 1, 1, rng,
                          /*with_bias=*/true, /*zero_init=*/true);
    if (cin != cout) {
      proj_.emplace(reg, name + ".proj", cin, cout, 1, 1, 0, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.shape().c != cin_) {
      throw ShapeError("ResidualBlock: expected " + std::to_string(cin_) +
                       " input channels, got " + x.shape().str());
    }
    Tensor<T> skip = proj_ ? proj_->forward(x) : x;
    return add(skip, conv2_.forward(relu(conv1_.forward(x))));
  }

 private:
  ConvLayer<T> conv1_;
  ConvLayer<T> conv2_;
  std::optional<ConvLayer<T>> proj_;
  int cin_ = 0;
};

template <class T>
class FullyConnectedLayer {
 public:
  FullyConnectedLayer() = default;
  FullyConnectedLayer(ParamRegistry<T>& reg, const std::string& name, int cin,
                      int dout, Rng& rng, bool with_bias = true) {
    weight_ = reg.add(name + ".weight",
                      detail::init_uniform<T>({dout, cin, 1, 1}, cin, rng));
    if (with_bias) {
      bias_ = reg.add(name + ".bias", Tensor<T>::zeros({dout, 1, 1, 1}));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return fully_connected(x, weight_, bias_);
  }

 private:
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
};

}  // namespace mstn

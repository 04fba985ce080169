#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace aca {

/// Seeded parameter factory. Draw order is fixed by construction order, so a
/// given seed always yields bit-identical parameters.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Glorot-uniform matrix, optionally shrunk by `gain`.
  Tensor glorot(std::size_t rows, std::size_t cols, double gain = 1.0) {
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = u(rng_);
    return Tensor::parameter({rows, cols}, std::move(v));
  }

  Tensor uniform(Shape shape, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng_);
    return Tensor::parameter(std::move(shape), std::move(v));
  }

  static Tensor constant(Shape shape, double value) {
    auto n = shape_numel(shape);
    return Tensor::parameter(std::move(shape), std::vector<double>(n, value));
  }

 private:
  std::mt19937_64 rng_;
};

/// Visitor signature used by every parameter-owning struct:
/// `p.for_each_param([](const std::string& name, Tensor& t) {...})`.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// Flat, ordered view of named parameters.
template <class Owner>
std::vector<std::pair<std::string, Tensor>> named_params(Owner& owner) {
  std::vector<std::pair<std::string, Tensor>> out;
  owner.for_each_param([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

template <class Owner>
std::size_t param_count(Owner& owner) {
  std::size_t n = 0;
  owner.for_each_param([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

template <class Owner>
void set_trainable(Owner& owner, bool on) {
  owner.for_each_param([on](const std::string&, Tensor& t) {
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  });
}

template <class Owner>
void zero_grads(Owner& owner) {
  owner.for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
}

/// Deep copy: fresh storage with the same values and trainability.
template <class Owner>
Owner clone_params(const Owner& src) {
  Owner copy = src;
  copy.for_each_param([](const std::string&, Tensor& t) {
    Tensor fresh(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
    fresh.set_requires_grad(t.requires_grad());
    t = fresh;
  });
  return copy;
}

/// Dense layer weights: x W + b.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear make(Initializer& init, std::size_t in, std::size_t out, double gain = 1.0) {
    return {init.glorot(in, out, gain), Initializer::constant({out}, 0.0)};
  }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

  void for_each_param(const ParamVisitor& f, const std::string& prefix) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams make(std::size_t width) {
    return {Initializer::constant({width}, 1.0), Initializer::constant({width}, 0.0)};
  }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void for_each_param(const ParamVisitor& f, const std::string& prefix) {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
};

}  // namespace aca

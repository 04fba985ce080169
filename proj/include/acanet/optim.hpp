#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace aca {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent over an explicit list of leaves.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  /// Applies one update from the accumulated grads; leaves without a grad are skipped.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto w = p.mutable_values();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g[k];
        v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g[k] * g[k];
        w[k] -= opt_.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opt_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace aca

#pragma once

// Dense fp64 tensors with tape-based reverse-mode differentiation.
//
// Ops record themselves on the thread's active Tape (see TapeScope) whenever
// at least one input requires a gradient. Without an active tape the same
// functions are plain forward computations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aca {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  std::span<double> ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using DataPtr = std::shared_ptr<TensorData>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape shape, double v) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.data_->requires_grad = true;
    return t;
  }

  Tensor(Shape shape, std::vector<double> values)
      : data_(std::make_shared<detail::TensorData>()) {
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
    if (shape.empty()) throw ShapeError("tensor needs at least one dimension");
    if (shape_numel(shape) != values.size())
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(shape));
    data_->shape = std::move(shape);
    data_->value = std::move(values);
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  std::size_t ndim() const { return data_->shape.size(); }
  std::size_t numel() const { return data_->value.size(); }
  std::size_t rows() const { return data_->shape.front(); }
  std::size_t cols() const { return ndim() >= 2 ? data_->shape[1] : 1; }

  std::span<const double> values() const { return data_->value; }
  /// Only leaves should be mutated (initialisation, optimiser steps).
  std::span<double> mutable_values() { return data_->value; }

  double operator[](std::size_t i) const { return data_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return data_->value[r * cols() + c]; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return data_->value[0];
  }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }
  bool has_grad() const { return !data_->grad.empty(); }
  std::span<const double> grad() const { return data_->grad; }
  void zero_grad() { data_->grad.clear(); }

  /// Same values, no gradient tracking.
  Tensor detach() const { return Tensor(shape(), data_->value); }

  const detail::DataPtr& data() const { return data_; }

  friend bool same_storage(const Tensor& a, const Tensor& b) { return a.data_ == b.data_; }

 private:
  detail::DataPtr data_;
};

/// Ordered record of differentiable ops. One backward pass per tape.
class Tape {
 public:
  struct Record {
    detail::DataPtr output;
    std::function<void(const std::vector<double>&)> backward;
  };

  void record(detail::DataPtr output, std::function<void(const std::vector<double>&)> fn) {
    if (consumed_) throw ContractError("tape already consumed by backward(); re-run forward");
    records_.push_back({std::move(output), std::move(fn)});
  }

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  void backward(const Tensor& loss) {
    if (consumed_) throw ContractError("backward() called twice on the same tape");
    if (!loss.defined() || loss.numel() != 1)
      throw ContractError("backward() needs a scalar loss, got " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any parameter");
    consumed_ = true;
    loss.data()->ensure_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward(it->output->grad);
    }
    // Release intermediates; leaf grads stay with their owners.
    records_.clear();
  }

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

namespace detail {
inline Tape*& active_tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

/// Makes `tape` the recording target for this thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : prev_(detail::active_tape_slot()) {
    detail::active_tape_slot() = &tape;
  }
  ~TapeScope() { detail::active_tape_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> ins) {
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// Wraps a forward result; records `fn` when tracking applies.
template <class Fn>
Tensor finish(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> ins,
              Fn&& fn) {
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = active_tape();
  if (tape && any_requires_grad(ins)) {
    out.set_requires_grad(true);
    tape->record(out.data(), std::forward<Fn>(fn));
  }
  return out;
}

// Gradient buffer of an input, or an empty span if it does not need one.
inline std::span<double> grad_of(const DataPtr& d) {
  if (!d->requires_grad) return {};
  return d->ensure_grad();
}

inline void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// c += a * b  (a: r x k, b: k x n)
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T  (a: r x k, b: n x k)
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c += a^T * b  (a: k x r, b: k x n)
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t r,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * r;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const auto r = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(r * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), r, k, n);
  auto da = a.data(), db = b.data();
  return detail::finish({r, n}, std::move(out), {&a, &b}, [da, db, r, k, n](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      detail::gemm_nt(g.data(), db->value.data(), ga.data(), r, n, k);
    if (auto gb = detail::grad_of(db); !gb.empty())
      detail::gemm_tn(da->value.data(), g.data(), gb.data(), r, k, n);
  });
}

/// a * b^T without materialising the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  const auto r = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  std::vector<double> out(r * n, 0.0);
  detail::gemm_nt(a.values().data(), b.values().data(), out.data(), r, k, n);
  auto da = a.data(), db = b.data();
  return detail::finish({r, n}, std::move(out), {&a, &b}, [da, db, r, k, n](const auto& g) {
    // out = a b^T: d a = g b, d b = g^T a
    if (auto ga = detail::grad_of(da); !ga.empty())
      detail::gemm_nn(g.data(), db->value.data(), ga.data(), r, n, k);
    if (auto gb = detail::grad_of(db); !gb.empty())
      detail::gemm_tn(g.data(), da->value.data(), gb.data(), r, n, k);
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_2d(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  auto da = a.data();
  return detail::finish({c, r}, std::move(out), {&a}, [da, r, c](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto da = a.data(), db = b.data();
  return detail::finish(a.shape(), std::move(out), {&a, &b}, [da, db](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (auto gb = detail::grad_of(db); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto da = a.data(), db = b.data();
  return detail::finish(a.shape(), std::move(out), {&a, &b}, [da, db](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (auto gb = detail::grad_of(db); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto da = a.data(), db = b.data();
  return detail::finish(a.shape(), std::move(out), {&a, &b}, [da, db](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db->value[i];
    if (auto gb = detail::grad_of(db); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da->value[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  auto da = a.data();
  return detail::finish(a.shape(), std::move(out), {&a}, [da, s](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
  auto da = a.data();
  return detail::finish(a.shape(), std::move(out), {&a}, [da](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

/// Adds `bias` (length c) to every row of an r x c matrix.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  detail::require_2d(a, "add_bias");
  const auto r = a.rows(), c = a.cols();
  if (bias.numel() != c)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs matrix " +
                     shape_str(a.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] + bias[j];
  auto da = a.data(), db = bias.data();
  return detail::finish(a.shape(), std::move(out), {&a, &bias}, [da, db, r, c](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (auto gb = detail::grad_of(db); !gb.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
  });
}

/// Scales row i of `a` (r x c) by s[i]; `s` has r entries.
inline Tensor mul_rows(const Tensor& a, const Tensor& s) {
  detail::require_2d(a, "mul_rows");
  const auto r = a.rows(), c = a.cols();
  if (s.numel() != r)
    throw ShapeError("mul_rows: scale " + shape_str(s.shape()) + " vs matrix " +
                     shape_str(a.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] * s[i];
  auto da = a.data(), ds = s.data();
  return detail::finish(a.shape(), std::move(out), {&a, &s}, [da, ds, r, c](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * ds->value[i];
    if (auto gs = detail::grad_of(ds); !gs.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gs[i] += g[i * c + j] * da->value[i * c + j];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  auto da = a.data();
  return detail::finish(a.shape(), std::move(out), {&a}, [da](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (da->value[i] > 0.0) ga[i] += g[i];
  });
}

/// log(1 + e^x), evaluated without overflow.
inline Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  auto da = a.data();
  return detail::finish(a.shape(), std::move(out), {&a}, [da](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = da->value[i];
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      ga[i] += g[i] * sig;
    }
  });
}

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

/// Softmax along each row. Columns with `column_mask[j] == false` get zero
/// weight; a row with every column masked produces all zeros.
inline Tensor row_softmax(const Tensor& a, const std::vector<bool>& column_mask = {}) {
  detail::require_2d(a, "row_softmax");
  const auto r = a.rows(), c = a.cols();
  if (!column_mask.empty() && column_mask.size() != c)
    throw ShapeError("row_softmax: mask length " + std::to_string(column_mask.size()) +
                     " vs " + std::to_string(c) + " columns");
  std::vector<bool> keep(c, true);
  for (std::size_t j = 0; j < column_mask.size(); ++j) keep[j] = column_mask[j];
  std::vector<double> out(a.numel(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (keep[j]) mx = std::max(mx, a[i * c + j]);
    if (!std::isfinite(mx)) continue;
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (keep[j]) sum += (out[i * c + j] = std::exp(a[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  auto da = a.data();
  auto probs = std::make_shared<std::vector<double>>(out);
  return detail::finish(a.shape(), std::move(out), {&a}, [da, probs, r, c](const auto& g) {
    auto ga = detail::grad_of(da);
    const auto& p = *probs;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * p[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += p[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row standardisation followed by an affine map (gain, bias of length c).
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  detail::require_2d(a, "layer_norm");
  const auto r = a.rows(), c = a.cols();
  if (c < 2) throw ShapeError("layer_norm: need at least 2 columns, got " + shape_str(a.shape()));
  if (gain.numel() != c || bias.numel() != c)
    throw ShapeError("layer_norm: gain/bias length must be " + std::to_string(c));
  std::vector<double> xhat(a.numel()), inv_std(r), out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += a[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = a[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (a[i * c + j] - mean) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
    }
  }
  auto da = a.data(), dg = gain.data(), db = bias.data();
  auto saved = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>(
      std::move(xhat), std::move(inv_std));
  return detail::finish(
      a.shape(), std::move(out), {&a, &gain, &bias}, [da, dg, db, saved, r, c](const auto& g) {
        const auto& [xh, istd] = *saved;
        if (auto gg = detail::grad_of(dg); !gg.empty())
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xh[i * c + j];
        if (auto gb = detail::grad_of(db); !gb.empty())
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        if (auto ga = detail::grad_of(da); !ga.empty()) {
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double sum_dx = 0.0, sum_dx_xh = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[i * c + j] * dg->value[j];
              sum_dx += dxh;
              sum_dx_xh += dxh * xh[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[i * c + j] * dg->value[j];
              ga[i * c + j] +=
                  istd[i] * (dxh - inv_c * sum_dx - xh[i * c + j] * inv_c * sum_dx_xh);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

/// Stacks a (r1 x c) on top of b (r2 x c).
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "concat_rows");
  detail::require_2d(b, "concat_rows");
  if (a.cols() != b.cols())
    throw ShapeError("concat_rows: column counts differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const auto na = a.numel();
  auto da = a.data(), db = b.data();
  return detail::finish({a.rows() + b.rows(), a.cols()}, std::move(out), {&a, &b},
                        [da, db, na](const auto& g) {
                          if (auto ga = detail::grad_of(da); !ga.empty())
                            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                          if (auto gb = detail::grad_of(db); !gb.empty())
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                        });
}

/// Places a (r x c1) left of b (r x c2).
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "concat_cols");
  detail::require_2d(b, "concat_cols");
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const auto r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = a[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = b[i * cb + j];
  }
  auto da = a.data(), db = b.data();
  return detail::finish({r, c}, std::move(out), {&a, &b}, [da, db, r, ca, cb, c](const auto& g) {
    if (auto ga = detail::grad_of(da); !ga.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
    if (auto gb = detail::grad_of(db); !gb.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
  });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_cols");
  if (begin >= end || end > a.cols())
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") for " + shape_str(a.shape()));
  const auto r = a.rows(), c = a.cols(), w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * c + begin + j];
  auto da = a.data();
  return detail::finish({r, w}, std::move(out), {&a}, [da, r, c, w, begin](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
  });
}

/// Rows of `a` picked by index (repeats allowed).
inline Tensor select_rows(const Tensor& a, std::span<const std::size_t> idx) {
  detail::require_2d(a, "select_rows");
  if (idx.empty()) throw ShapeError("select_rows: empty index list");
  const auto c = a.cols();
  std::vector<double> out(idx.size() * c);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= a.rows())
      throw ShapeError("select_rows: index " + std::to_string(idx[k]) + " out of range for " +
                       shape_str(a.shape()));
    for (std::size_t j = 0; j < c; ++j) out[k * c + j] = a[idx[k] * c + j];
  }
  auto da = a.data();
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  return detail::finish({idx.size(), c}, std::move(out), {&a},
                        [da, rows = std::move(rows), c](const auto& g) {
                          auto ga = detail::grad_of(da);
                          for (std::size_t k = 0; k < rows.size(); ++k)
                            for (std::size_t j = 0; j < c; ++j) ga[rows[k] * c + j] += g[k * c + j];
                        });
}

/// Copy of `base` with row idx[k] replaced by row k of `rows`. Indices must be distinct.
inline Tensor scatter_rows(const Tensor& base, const Tensor& rows,
                           std::span<const std::size_t> idx) {
  detail::require_2d(base, "scatter_rows");
  detail::require_2d(rows, "scatter_rows");
  if (rows.cols() != base.cols() || rows.rows() != idx.size())
    throw ShapeError("scatter_rows: " + shape_str(rows.shape()) + " into " +
                     shape_str(base.shape()) + " with " + std::to_string(idx.size()) +
                     " indices");
  const auto c = base.cols();
  std::vector<double> out(base.values().begin(), base.values().end());
  std::vector<bool> replaced(base.rows(), false);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= base.rows() || replaced[idx[k]])
      throw ShapeError("scatter_rows: bad or repeated index " + std::to_string(idx[k]));
    replaced[idx[k]] = true;
    for (std::size_t j = 0; j < c; ++j) out[idx[k] * c + j] = rows[k * c + j];
  }
  auto db = base.data(), dr = rows.data();
  std::vector<std::size_t> ix(idx.begin(), idx.end());
  return detail::finish(base.shape(), std::move(out), {&base, &rows},
                        [db, dr, ix = std::move(ix), replaced = std::move(replaced),
                         c](const auto& g) {
                          if (auto gb = detail::grad_of(db); !gb.empty())
                            for (std::size_t i = 0; i < replaced.size(); ++i)
                              if (!replaced[i])
                                for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i * c + j];
                          if (auto gr = detail::grad_of(dr); !gr.empty())
                            for (std::size_t k = 0; k < ix.size(); ++k)
                              for (std::size_t j = 0; j < c; ++j) gr[k * c + j] += g[ix[k] * c + j];
                        });
}

/// Column means: r x c -> 1 x c.
inline Tensor mean_rows(const Tensor& a) {
  detail::require_2d(a, "mean_rows");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (auto& v : out) v *= inv;
  auto da = a.data();
  return detail::finish({1, c}, std::move(out), {&a}, [da, r, c, inv](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
  });
}

/// Broadcasts a 1 x c row to n x c.
inline Tensor repeat_rows(const Tensor& a, std::size_t n) {
  if (a.ndim() != 2 || a.rows() != 1)
    throw ShapeError("repeat_rows: expected a 1 x c row, got " + shape_str(a.shape()));
  const auto c = a.cols();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[j];
  auto da = a.data();
  return detail::finish({n, c}, std::move(out), {&a}, [da, n, c](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[j] += g[i * c + j];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  auto da = a.data();
  return detail::finish(std::move(shape), std::move(out), {&a}, [da](const auto& g) {
    auto ga = detail::grad_of(da);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses (all return shape {1})
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto da = a.data();
  return detail::finish({1}, {s}, {&a}, [da](const auto& g) {
    auto ga = detail::grad_of(da);
    for (auto& x : ga) x += g[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mse");
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  auto da = a.data(), db = b.data();
  return detail::finish({1}, {s / n}, {&a, &b}, [da, db, n](const auto& g) {
    auto ga = detail::grad_of(da);
    auto gb = detail::grad_of(db);
    for (std::size_t i = 0; i < da->value.size(); ++i) {
      const double d = 2.0 * (da->value[i] - db->value[i]) / n * g[0];
      if (!ga.empty()) ga[i] += d;
      if (!gb.empty()) gb[i] -= d;
    }
  });
}

/// Mean absolute error; the subgradient at zero difference is 0.
inline Tensor mae(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mae");
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  auto da = a.data(), db = b.data();
  return detail::finish({1}, {s / n}, {&a, &b}, [da, db, n](const auto& g) {
    auto ga = detail::grad_of(da);
    auto gb = detail::grad_of(db);
    for (std::size_t i = 0; i < da->value.size(); ++i) {
      const double diff = da->value[i] - db->value[i];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (!ga.empty()) ga[i] += sgn / n * g[0];
      if (!gb.empty()) gb[i] -= sgn / n * g[0];
    }
  });
}

/// Stacks scalar tensors into an n x 1 column.
inline Tensor stack_scalars(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: nothing to stack");
  std::vector<double> out;
  out.reserve(xs.size());
  bool track = false;
  for (const auto& x : xs) {
    if (x.numel() != 1) throw ShapeError("stack_scalars: non-scalar " + shape_str(x.shape()));
    out.push_back(x[0]);
    track = track || x.requires_grad();
  }
  Tensor result({xs.size(), 1}, std::move(out));
  Tape* tape = active_tape();
  if (tape && track) {
    result.set_requires_grad(true);
    std::vector<detail::DataPtr> ins;
    for (const auto& x : xs) ins.push_back(x.data());
    tape->record(result.data(), [ins = std::move(ins)](const auto& g) {
      for (std::size_t i = 0; i < ins.size(); ++i)
        if (auto gi = detail::grad_of(ins[i]); !gi.empty()) gi[0] += g[i];
    });
  }
  return result;
}

}  // namespace aca

#pragma once

// Shared helpers for the unit tests and the acceptance runner: random
// tensors, a central-difference gradient checker, small worlds, and
// brute-force oracles that deliberately avoid the library code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <acanet/acanet.hpp>

namespace aca::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

/// Named leaves of a parameter block whose visitor takes a prefix.
template <class Owner>
std::vector<std::pair<std::string, Tensor>> params_of(Owner& owner, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  owner.for_each_param([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); }, prefix);
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "leaf[index]"
  std::size_t checked = 0;
};

inline constexpr double kFdStep = 1e-5;
// Relative error uses max(|analytic|, |numeric|, floor) so entries that are
// zero in both do not divide by zero. The floor scales with the loss, since
// central differences on a loss of size L carry about eps * L / h of roundoff.
inline constexpr double kRelFloor = 1e-6;

inline double rel_error(double a, double n, double floor = kRelFloor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares tape gradients of `loss()` with central differences for every
/// entry of every leaf. `loss` must read the leaves it is given.
inline GradCheck gradcheck(std::vector<std::pair<std::string, Tensor>> leaves,
                           const std::function<Tensor()>& loss, double h = kFdStep) {
  for (auto& [name, t] : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  double scale = 1.0;
  {
    Tape tape;
    TapeScope scope(tape);
    auto l = loss();
    scale = std::max(1.0, std::abs(l.item()));
    tape.backward(l);
  }
  const double floor = kRelFloor * scale;
  GradCheck out;
  for (auto& [name, t] : leaves) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss().item();
      v[i] = keep - h;
      const double down = loss().item();
      v[i] = keep;
      const double e = rel_error(analytic[i], (up - down) / (2.0 * h), floor);
      ++out.checked;
      if (e > out.max_rel_error) {
        out.max_rel_error = e;
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

inline GradCheck gradcheck(std::vector<Tensor> leaves, const std::function<Tensor()>& loss) {
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t i = 0; i < leaves.size(); ++i) named.emplace_back("input" + std::to_string(i), leaves[i]);
  return gradcheck(std::move(named), loss);
}

/// Weighted sum with fixed random weights, so every output entry matters.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(rng, y.shape(), -1.0, 1.0, false);
  return sum_all(mul(y, w));
}

/// Default world, shrunk so generation takes milliseconds.
inline WorldConfig small_world(std::uint64_t seed = 3, OrderPattern pattern = OrderPattern::mixed) {
  auto c = default_world_config();
  c.seed = seed;
  c.pattern = pattern;
  return c;
}

inline ModelConfig reduced_model() {
  ModelConfig m;
  m.channels = 8;
  m.gnn_hidden = 8;
  m.heads = 2;
  m.mlp_ratio = 2;
  m.ongoing_slots = 10;
  m.readout_hidden = 8;
  return m;
}

struct OracleLabel {
  double pressure = 0.0;
  std::size_t count = 0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<std::size_t, double>> edges;  // count, time sum
};

/// Linear scan over every event, independent of the per-minute index.
inline OracleLabel oracle_label(const History& h, std::int64_t minute, std::uint32_t horizon) {
  OracleLabel o;
  double sum = 0.0;
  for (const auto& e : h.events) {
    if (e.create_minute < minute || e.create_minute >= minute + horizon) continue;
    sum += e.delivery_time;
    ++o.count;
    auto& [c, t] = o.edges[{e.src_aoi, e.dst_aoi}];
    ++c;
    t += e.delivery_time;
  }
  if (o.count) o.pressure = sum / static_cast<double>(o.count);
  return o;
}

/// Dense truth: count x mean time per edge, which is the summed time.
inline std::vector<double> oracle_truth(const OracleLabel& o, const FlowGraph& global) {
  const auto n = global.node_count();
  std::vector<double> a(n * n, 0.0);
  for (const auto& [key, ct] : o.edges) {
    std::size_t r = n, c = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (global.nodes[i].id == key.first) r = i;
      if (global.nodes[i].id == key.second) c = i;
    }
    a[r * n + c] = ct.second;
  }
  return a;
}

/// (A_w + I) with min-max scaled edge weights, then row-normalised.
inline std::vector<double> oracle_normalized_adjacency(const FlowGraph& g) {
  const auto n = g.node_count();
  double lo = 1e300, hi = -1e300;
  for (const auto& e : g.edges) {
    lo = std::min(lo, e.order_count * e.avg_delivery_time);
    hi = std::max(hi, e.order_count * e.avg_delivery_time);
  }
  std::vector<double> a(n * n, 0.0);
  for (const auto& e : g.edges) {
    std::size_t r = 0, c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.nodes[i].id == e.src) r = i;
      if (g.nodes[i].id == e.dst) c = i;
    }
    const double w = e.order_count * e.avg_delivery_time;
    const double scaled = hi > lo ? 0.01 + 0.99 * (w - lo) / (hi - lo) : 1.0;
    a[r * n + c] += scaled;
  }
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] += 1.0;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j];
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= s;
  }
  return a;
}

struct OracleMetrics {
  double mae, rmse, mape;
};

inline OracleMetrics oracle_metrics(const std::vector<double>& y, const std::vector<double>& p) {
  long double a = 0, s = 0, m = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const long double d = static_cast<long double>(p[i]) - y[i];
    a += d < 0 ? -d : d;
    s += d * d;
    if (y[i] >= 60.0) {
      m += (d < 0 ? -d : d) / y[i];
      ++k;
    }
  }
  const long double n = static_cast<long double>(y.size());
  return {static_cast<double>(a / n), static_cast<double>(std::sqrt(s / n)),
          k ? static_cast<double>(m / k) : 0.0};
}

}  // namespace aca::testing

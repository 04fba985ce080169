#pragma once

// Training-split statistics: z-score for node and supply/environment
// features, min-max into (0,1] for edge attributes. Labels stay in seconds.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "embedding.hpp"
#include "graph.hpp"

namespace aca {

struct ZScore {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Zero-variance columns get mean 0 / std 1 and pass through unchanged.
  static ZScore fit(const std::vector<std::vector<double>>& rows, std::size_t width) {
    ZScore z;
    z.mean.assign(width, 0.0);
    z.stddev.assign(width, 1.0);
    if (rows.empty()) return z;
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < width; ++j) {
      double m = 0.0;
      for (const auto& r : rows) m += r.at(j);
      m /= n;
      double var = 0.0;
      for (const auto& r : rows) var += (r[j] - m) * (r[j] - m);
      const double sd = std::sqrt(var / n);
      if (sd > 1e-12) {
        z.mean[j] = m;
        z.stddev[j] = sd;
      }
    }
    return z;
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (x.size() != mean.size())
      throw std::invalid_argument("z-score: expected " + std::to_string(mean.size()) + " values");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / stddev[j];
    return out;
  }
};

struct MinMax {
  double lo = 0.0;
  double hi = 0.0;

  bool degenerate() const { return !(hi > lo); }
  /// Into [kMinEdgeWeight, 1]; degenerate ranges pass the value through.
  double apply(double v) const { return degenerate() ? v : minmax_positive(v, lo, hi); }

  void include(double v, bool first) {
    lo = first ? v : std::min(lo, v);
    hi = first ? v : std::max(hi, v);
  }
};

struct NormalizationStats {
  ZScore node;
  ZScore supply;
  MinMax global_count, global_time;
  MinMax ongoing_count, ongoing_time;
  double label_mean = 0.0;
  double label_std = 1.0;
};

/// Reads only the training split.
inline NormalizationStats fit_normalization(const Dataset& train) {
  if (train.samples.empty()) throw std::invalid_argument("cannot fit normalization on an empty split");
  NormalizationStats s;
  std::vector<std::vector<double>> node_rows;
  for (const auto& n : train.global.nodes) node_rows.push_back(n.features);
  s.node = ZScore::fit(node_rows, train.header.f_aoi);

  std::vector<std::vector<double>> f_rows;
  for (const auto& smp : train.samples) f_rows.push_back(smp.f.values);
  s.supply = ZScore::fit(f_rows, train.header.n_f);

  bool first = true;
  for (const auto& e : train.global.edges) {
    s.global_count.include(e.order_count, first);
    s.global_time.include(e.avg_delivery_time, first);
    first = false;
  }
  first = true;
  for (const auto& smp : train.samples)
    for (const auto& e : smp.ongoing.edges) {
      s.ongoing_count.include(e.order_count, first);
      s.ongoing_time.include(e.avg_delivery_time, first);
      first = false;
    }

  double sum = 0.0;
  for (const auto& smp : train.samples) sum += smp.label_pressure;
  s.label_mean = sum / static_cast<double>(train.samples.size());
  double var = 0.0;
  for (const auto& smp : train.samples) var += std::pow(smp.label_pressure - s.label_mean, 2);
  s.label_std = std::max(std::sqrt(var / static_cast<double>(train.samples.size())), 1.0);
  return s;
}

inline FlowGraph normalize_graph(const NormalizationStats& s, const FlowGraph& g) {
  FlowGraph out = g;
  const bool ongoing = g.kind == GraphKind::ongoing;
  const auto& cnt = ongoing ? s.ongoing_count : s.global_count;
  const auto& tim = ongoing ? s.ongoing_time : s.global_time;
  for (auto& n : out.nodes) n.features = s.node.apply(n.features);
  for (auto& e : out.edges) {
    e.order_count = cnt.apply(e.order_count);
    e.avg_delivery_time = tim.apply(e.avg_delivery_time);
  }
  return out;
}

/// Normalised copy of a sample; label and a_truth are left untouched.
inline Sample apply_normalization(const NormalizationStats& s, const Sample& smp) {
  Sample out = smp;
  out.ongoing = normalize_graph(s, smp.ongoing);
  out.f.values = s.supply.apply(smp.f.values);
  return out;
}

}  // namespace aca

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace aca {

/// Labels below this many seconds are left out of MAPE.
inline constexpr double kMapeFloorSeconds = 60.0;

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  double runtime_per_batch = 0.0;  // seconds, median
  std::size_t input_bytes = 0;     // per sample, aca_two_graph encoding
  std::size_t count = 0;
};

/// MAE, RMSE and MAPE; accumulation runs in index order so results are reproducible.
inline MetricsReport accuracy_metrics(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw std::invalid_argument("metrics: length mismatch");
  if (truth.empty()) throw std::invalid_argument("metrics: empty split");
  MetricsReport r;
  r.count = truth.size();
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (truth[i] >= kMapeFloorSeconds) {
      pct_sum += std::abs(e) / truth[i];
      ++pct_n;
    }
  }
  const double n = static_cast<double>(truth.size());
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.mape = pct_n ? pct_sum / static_cast<double>(pct_n) : 0.0;
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace aca

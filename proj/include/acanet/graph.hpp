#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace aca {

enum class GraphKind { global, ongoing, truth_future };

inline const char* to_string(GraphKind k) {
  switch (k) {
    case GraphKind::global: return "global";
    case GraphKind::ongoing: return "ongoing";
    case GraphKind::truth_future: return "truth_future";
  }
  return "?";
}

struct AoiNode {
  std::uint32_t id = 0;
  std::vector<double> features;

  bool operator==(const AoiNode&) const = default;
};

/// Directed order flow. For ongoing graphs `avg_delivery_time` holds the mean
/// elapsed time of the still-open orders.
struct FlowEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  double order_count = 0.0;
  double avg_delivery_time = 0.0;

  double weight() const { return order_count * avg_delivery_time; }
  bool operator==(const FlowEdge&) const = default;
};

struct FlowGraph {
  GraphKind kind = GraphKind::global;
  std::vector<AoiNode> nodes;
  std::vector<FlowEdge> edges;

  std::size_t node_count() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }

  /// Map from AOI id to row position in `nodes`.
  std::unordered_map<std::uint32_t, std::size_t> index() const {
    std::unordered_map<std::uint32_t, std::size_t> ix;
    for (std::size_t i = 0; i < nodes.size(); ++i) ix.emplace(nodes[i].id, i);
    return ix;
  }

  bool operator==(const FlowGraph&) const = default;
};

struct SupplyEnvVector {
  std::vector<double> values;
  bool operator==(const SupplyEnvVector&) const = default;
};

/// Dense row-major square matrix over the global node order.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * n + c]; }
  bool operator==(const DenseMatrix&) const = default;
};

struct Sample {
  std::uint32_t district_id = 0;
  std::int64_t minute_index = 0;
  FlowGraph ongoing{GraphKind::ongoing, {}, {}};
  std::uint32_t global_ref = 0;
  SupplyEnvVector f;
  double label_pressure = 0.0;
  DenseMatrix a_truth;

  bool operator==(const Sample&) const = default;
};

struct DatasetHeader {
  std::uint32_t version = 1;
  std::uint32_t f_aoi = 8;
  std::uint32_t n_f = 12;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  FlowGraph global{GraphKind::global, {}, {}};
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

namespace detail {
inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void check_graph(const FlowGraph& g, std::size_t f_aoi, const std::string& tag,
                        std::vector<std::string>& out) {
  std::set<std::uint32_t> ids;
  for (const auto& node : g.nodes) {
    if (!ids.insert(node.id).second) out.push_back(tag + ": duplicate node id " + std::to_string(node.id));
    if (node.features.size() != f_aoi)
      out.push_back(tag + ": node " + std::to_string(node.id) + " has " +
                    std::to_string(node.features.size()) + " features, expected " +
                    std::to_string(f_aoi));
    else if (!all_finite(node.features))
      out.push_back(tag + ": node " + std::to_string(node.id) + " has non-finite features");
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& e : g.edges) {
    if (!ids.count(e.src) || !ids.count(e.dst))
      out.push_back(tag + ": edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                    " references a missing node");
    if (!pairs.insert({e.src, e.dst}).second)
      out.push_back(tag + ": duplicate edge " + std::to_string(e.src) + "->" + std::to_string(e.dst));
    if (!(e.order_count >= 0.0) || !(e.avg_delivery_time >= 0.0) ||
        !std::isfinite(e.order_count) || !std::isfinite(e.avg_delivery_time))
      out.push_back(tag + ": edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                    " has a negative or non-finite attribute");
  }
}
}  // namespace detail

/// Structural problems with a sample; empty when it is well formed. Never throws.
inline std::vector<std::string> validate(const Sample& s, const FlowGraph& global,
                                         const DatasetHeader& header) {
  std::vector<std::string> out;
  detail::check_graph(s.ongoing, header.f_aoi, "ongoing", out);
  auto gix = global.index();
  for (const auto& node : s.ongoing.nodes)
    if (!gix.count(node.id))
      out.push_back("ongoing node " + std::to_string(node.id) + " is not in the global graph");
  if (s.f.values.size() != header.n_f)
    out.push_back("supply/env vector has " + std::to_string(s.f.values.size()) +
                  " values, expected " + std::to_string(header.n_f));
  else if (!detail::all_finite(s.f.values))
    out.push_back("supply/env vector has non-finite values");
  if (!(s.label_pressure > 0.0) || !std::isfinite(s.label_pressure))
    out.push_back("label pressure must be positive and finite");
  if (s.a_truth.n != global.node_count() || s.a_truth.values.size() != s.a_truth.n * s.a_truth.n)
    out.push_back("a_truth is " + std::to_string(s.a_truth.n) + "x" + std::to_string(s.a_truth.n) +
                  ", expected " + std::to_string(global.node_count()) + "x" +
                  std::to_string(global.node_count()));
  for (double v : s.a_truth.values)
    if (!(v >= 0.0) || !std::isfinite(v)) {
      out.push_back("a_truth has a negative or non-finite entry");
      break;
    }
  return out;
}

inline std::vector<std::string> validate_graph(const FlowGraph& g, const DatasetHeader& header) {
  std::vector<std::string> out;
  detail::check_graph(g, header.f_aoi, to_string(g.kind), out);
  return out;
}

/// Folds duplicate (src,dst) flows: counts add, times average weighted by count.
inline std::vector<FlowEdge> aggregate_edges(const std::vector<FlowEdge>& raw) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> acc;
  for (const auto& e : raw) {
    auto& [count, weighted] = acc[{e.src, e.dst}];
    count += e.order_count;
    weighted += e.order_count * e.avg_delivery_time;
  }
  std::vector<FlowEdge> out;
  out.reserve(acc.size());
  for (const auto& [key, cw] : acc)
    out.push_back({key.first, key.second, cw.first, cw.first > 0.0 ? cw.second / cw.first : 0.0});
  return out;
}

}  // namespace aca

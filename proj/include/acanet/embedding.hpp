#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "graph.hpp"
#include "params.hpp"
#include "tensor.hpp"

namespace aca {

/// Lower bound of min-max scaled edge weights, keeping every real edge > 0.
inline constexpr double kMinEdgeWeight = 0.01;

inline double minmax_positive(double v, double lo, double hi) {
  if (!(hi > lo)) return 1.0;
  const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return kMinEdgeWeight + (1.0 - kMinEdgeWeight) * s;
}

/// Row-normalised (A_w + I) over the graph's node order, where A_w holds the
/// min-max scaled order_count * avg_delivery_time of each edge.
inline Tensor normalized_adjacency(const FlowGraph& g) {
  const std::size_t n = g.node_count();
  if (n == 0) throw ShapeError("normalized_adjacency: graph has no nodes");
  const auto ix = g.index();
  double lo = 0.0, hi = 0.0;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const double w = g.edges[k].weight();
    lo = k == 0 ? w : std::min(lo, w);
    hi = k == 0 ? w : std::max(hi, w);
  }
  std::vector<double> a(n * n, 0.0);
  for (const auto& e : g.edges) a[ix.at(e.src) * n + ix.at(e.dst)] += minmax_positive(e.weight(), lo, hi);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] += 1.0;
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += a[i * n + j];
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= row;
  }
  return Tensor({n, n}, std::move(a));
}

/// Two propagation layers and a linear projection:
///   H1 = relu(Â X W1 + b1), H2 = relu(Â H1 W2 + b2), E = H2 Wp + bp.
struct GraphEmbedder {
  Linear layer1;
  Linear layer2;
  Linear proj;

  static GraphEmbedder make(Initializer& init, std::size_t f_aoi, std::size_t hidden,
                            std::size_t channels) {
    return {Linear::make(init, f_aoi, hidden), Linear::make(init, hidden, hidden),
            Linear::make(init, hidden, channels)};
  }

  /// `adjacency` n x n (row-normalised), `features` n x F_AOI.
  Tensor operator()(const Tensor& adjacency, const Tensor& features) const {
    if (features.cols() != layer1.weight.rows())
      throw ShapeError("embed_graph: node features have " + std::to_string(features.cols()) +
                       " columns, expected " + std::to_string(layer1.weight.rows()));
    if (adjacency.rows() != features.rows() || adjacency.cols() != features.rows())
      throw ShapeError("embed_graph: adjacency " + shape_str(adjacency.shape()) +
                       " does not match " + std::to_string(features.rows()) + " nodes");
    auto h1 = relu(add_bias(matmul(adjacency, matmul(features, layer1.weight)), layer1.bias));
    auto h2 = relu(add_bias(matmul(adjacency, matmul(h1, layer2.weight)), layer2.bias));
    return proj(h2);
  }

  void for_each_param(const ParamVisitor& f, const std::string& prefix) {
    layer1.for_each_param(f, prefix + ".gnn1");
    layer2.for_each_param(f, prefix + ".gnn2");
    proj.for_each_param(f, prefix + ".proj");
  }
};

/// One token per supply/environment feature: value_i * v_i + id_i.
struct FeatureEmbedder {
  Tensor value_vectors;  // N_f x C
  Tensor identity;       // N_f x C

  static FeatureEmbedder make(Initializer& init, std::size_t n_f, std::size_t channels) {
    return {init.glorot(n_f, channels), init.glorot(n_f, channels)};
  }

  std::size_t n_features() const { return value_vectors.rows(); }

  /// `f` holds N_f values (any shape with N_f elements).
  Tensor operator()(const Tensor& f) const {
    if (f.numel() != n_features())
      throw ShapeError("embed_features: got " + std::to_string(f.numel()) + " values, expected " +
                       std::to_string(n_features()));
    return add(mul_rows(value_vectors, f), identity);
  }

  void for_each_param(const ParamVisitor& fn, const std::string& prefix) {
    fn(prefix + ".value_vectors", value_vectors);
    fn(prefix + ".identity", identity);
  }
};

}  // namespace aca

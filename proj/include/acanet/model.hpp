#pragma once

// Full forward pipeline:
//   graph embeddings -> inter-graph CAT -> influence CAT -> adaptive adjacency
//   -> frozen pressure simulator (+ a small residual readout)
// with switches that remove components for ablation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "agl.hpp"
#include "attention.hpp"
#include "embedding.hpp"
#include "graph.hpp"
#include "normalization.hpp"
#include "params.hpp"
#include "simulator.hpp"
#include "tensor.hpp"

namespace aca {

struct ModelConfig {
  std::size_t channels = 32;       // C (= C_f)
  std::size_t gnn_hidden = 32;     // C_h
  std::size_t heads = 8;           // H
  std::size_t mlp_ratio = 4;
  std::size_t ongoing_slots = 16;  // m
  std::size_t readout_hidden = 32;
  InterGraphDirection direction = InterGraphDirection::global_query;
};

struct AblationMask {
  bool use_ongoing = true;
  bool use_global = true;
  bool use_cross_attention = true;
  bool use_adaptive_learning = true;

  std::string label() const {
    std::string s;
    auto put = [&](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += "+";
      s += name;
    };
    put(use_ongoing, "ongoing");
    put(use_global, "global");
    put(use_cross_attention, "CA");
    put(use_adaptive_learning, "AGL");
    return s.empty() ? "features-only" : s;
  }

  bool operator==(const AblationMask&) const = default;
};

/// The six component combinations of the ablation study, in table order.
inline std::vector<AblationMask> ablation_rows() {
  return {{false, false, false, false}, {true, false, false, false}, {false, true, false, false},
          {true, true, false, false},   {true, true, true, false},   {true, true, true, true}};
}

/// Per-dataset constants shared by every sample.
struct GlobalContext {
  Tensor node_features;  // M x F_AOI, normalised
  Tensor adjacency;      // M x M, normalized_adjacency of the global graph
  Tensor prior;          // M x M, row-stochastic historical flow (used without AGL)
  std::map<std::uint32_t, std::size_t> index;  // AOI id -> row
  std::size_t size() const { return node_features.rows(); }
};

inline Tensor node_feature_matrix(const FlowGraph& g, std::size_t f_aoi) {
  std::vector<double> v;
  v.reserve(g.node_count() * f_aoi);
  for (const auto& n : g.nodes) v.insert(v.end(), n.features.begin(), n.features.end());
  return Tensor({g.node_count(), f_aoi}, std::move(v));
}

inline GlobalContext make_global_context(const NormalizationStats& stats, const FlowGraph& raw_global,
                                         std::size_t f_aoi) {
  GlobalContext ctx;
  const auto g = normalize_graph(stats, raw_global);
  ctx.node_features = node_feature_matrix(g, f_aoi);
  ctx.adjacency = normalized_adjacency(g);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) ctx.index[g.nodes[i].id] = i;
  DenseMatrix flow(g.node_count());
  for (const auto& e : raw_global.edges)
    flow(ctx.index.at(e.src), ctx.index.at(e.dst)) += e.order_count * e.avg_delivery_time;
  ctx.prior = simulator_adjacency(flow);
  return ctx;
}

/// Model-ready tensors for one sample.
struct PreparedSample {
  Tensor ongoing_features;                // m x F_AOI (zero rows for padding)
  Tensor ongoing_adjacency;               // m x m
  std::vector<bool> ongoing_mask;         // m, true for real nodes
  std::vector<std::size_t> ongoing_rows;  // global row of each real slot, in slot order
  Tensor supply;                          // 1 x N_f
  Tensor truth;                           // M x M, row-normalised
  std::vector<bool> truth_rows;           // supervised rows
  Tensor sim_adjacency;                   // truth with empty rows uniform
  double label = 0.0;
  std::int64_t minute = 0;
  bool has_ongoing() const { return !ongoing_rows.empty(); }
};

/// Keeps at most `slots` ongoing nodes (largest incident order count, ties by
/// id), pads to `slots`, and builds every tensor the forward pass needs.
inline PreparedSample prepare_sample(const NormalizationStats& stats, const GlobalContext& ctx,
                                     const Sample& raw, std::size_t f_aoi, std::size_t slots) {
  const Sample s = apply_normalization(stats, raw);
  PreparedSample out;
  out.label = raw.label_pressure;
  out.minute = raw.minute_index;

  FlowGraph on = s.ongoing;
  if (on.node_count() > slots) {
    std::map<std::uint32_t, double> load;
    for (const auto& e : raw.ongoing.edges) {
      load[e.src] += e.order_count;
      load[e.dst] += e.order_count;
    }
    std::vector<std::uint32_t> ids;
    for (const auto& n : on.nodes) ids.push_back(n.id);
    std::stable_sort(ids.begin(), ids.end(), [&](auto a, auto b) { return load[a] > load[b]; });
    ids.resize(slots);
    std::sort(ids.begin(), ids.end());
    std::erase_if(on.nodes, [&](const AoiNode& n) { return !std::binary_search(ids.begin(), ids.end(), n.id); });
    std::erase_if(on.edges, [&](const FlowEdge& e) {
      return !std::binary_search(ids.begin(), ids.end(), e.src) ||
             !std::binary_search(ids.begin(), ids.end(), e.dst);
    });
  }

  const auto real = on.node_count();
  std::vector<double> feats(slots * f_aoi, 0.0);
  std::vector<double> adj(slots * slots, 0.0);
  out.ongoing_mask.assign(slots, false);
  if (real > 0) {
    auto a = normalized_adjacency(on);
    for (std::size_t i = 0; i < real; ++i) {
      std::copy(on.nodes[i].features.begin(), on.nodes[i].features.end(), feats.begin() + i * f_aoi);
      for (std::size_t j = 0; j < real; ++j) adj[i * slots + j] = a.at(i, j);
      out.ongoing_mask[i] = true;
      out.ongoing_rows.push_back(ctx.index.at(on.nodes[i].id));
    }
  }
  for (std::size_t i = real; i < slots; ++i) adj[i * slots + i] = 1.0;
  out.ongoing_features = Tensor({slots, f_aoi}, std::move(feats));
  out.ongoing_adjacency = Tensor({slots, slots}, std::move(adj));
  out.supply = Tensor({1, s.f.values.size()}, s.f.values);
  auto nt = truth_adjacency_normalized(raw.a_truth);
  out.truth = std::move(nt.matrix);
  out.truth_rows = std::move(nt.row_mask);
  out.sim_adjacency = simulator_adjacency(raw.a_truth);
  return out;
}

struct AcaNetParams {
  GraphEmbedder embed_global;
  GraphEmbedder embed_ongoing;
  FeatureEmbedder embed_features;
  CatBlockParams inter_cat;
  CatBlockParams influence_cat;
  Linear fuse_graph;     // [E_global | pooled ongoing] -> C, used without cross attention
  Linear fuse_features;  // [E | pooled feature tokens] -> C, used without cross attention
  AglParams agl;
  Linear readout1;       // [pooled E_out | pooled tokens] -> readout_hidden
  Linear readout2;       // -> 1
  double label_scale = 1.0;  // seconds per readout unit (training label std)

  static AcaNetParams make(const ModelConfig& cfg, std::size_t f_aoi, std::size_t n_f,
                           std::uint64_t seed, double label_scale = 1.0) {
    Initializer init(seed);
    const auto c = cfg.channels;
    AcaNetParams p;
    p.embed_global = GraphEmbedder::make(init, f_aoi, cfg.gnn_hidden, c);
    p.embed_ongoing = GraphEmbedder::make(init, f_aoi, cfg.gnn_hidden, c);
    p.embed_features = FeatureEmbedder::make(init, n_f, c);
    p.inter_cat = CatBlockParams::make(init, c, cfg.heads, cfg.mlp_ratio);
    p.influence_cat = CatBlockParams::make(init, c, cfg.heads, cfg.mlp_ratio);
    p.fuse_graph = Linear::make(init, 2 * c, c);
    p.fuse_features = Linear::make(init, 2 * c, c);
    p.agl = AglParams::make(init, c, c);
    p.readout1 = Linear::make(init, 2 * c, cfg.readout_hidden);
    p.readout2 = Linear::make(init, cfg.readout_hidden, 1, 0.5);
    p.label_scale = label_scale;
    return p;
  }

  void for_each_param(const ParamVisitor& f) {
    embed_global.for_each_param(f, "embed_global");
    embed_ongoing.for_each_param(f, "embed_ongoing");
    embed_features.for_each_param(f, "embed_features");
    inter_cat.for_each_param(f, "inter_cat");
    influence_cat.for_each_param(f, "influence_cat");
    fuse_graph.for_each_param(f, "fuse_graph");
    fuse_features.for_each_param(f, "fuse_features");
    agl.for_each_param(f, "agl");
    readout1.for_each_param(f, "readout1");
    readout2.for_each_param(f, "readout2");
  }

  /// Parameters that take part in the forward pass under `mask`.
  std::vector<std::pair<std::string, Tensor>> active_params(const AblationMask& mask) {
    std::vector<std::pair<std::string, Tensor>> out;
    for_each_param([&](const std::string& name, Tensor& t) {
      auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
      if (starts("embed_global") && !mask.use_global) return;
      if (starts("embed_ongoing") && !mask.use_ongoing) return;
      if ((starts("inter_cat") || starts("influence_cat")) && !mask.use_cross_attention) return;
      if (starts("fuse_") && mask.use_cross_attention) return;
      if (starts("fuse_graph") && !mask.use_global && !mask.use_ongoing) return;
      if (starts("agl") && !mask.use_adaptive_learning) return;
      out.emplace_back(name, t);
    });
    return out;
  }
};

struct ForwardResult {
  Tensor pressure;    // {1}, seconds
  Tensor adjacency;   // M x M fed to the simulator
  Tensor graph_loss;  // {1}; constant 0 without adaptive learning
  Tensor e_out;       // M x C
};

/// Global-graph embedding; shared by every sample of a batch.
inline Tensor encode_global(const AcaNetParams& p, const GlobalContext& ctx, const AblationMask& mask) {
  if (!mask.use_global) return Tensor::zeros({ctx.size(), p.embed_global.proj.weight.cols()});
  return p.embed_global(ctx.adjacency, ctx.node_features);
}

inline Tensor masked_mean_rows(const Tensor& x, const std::vector<bool>& mask) {
  const auto rows = masked_rows(mask);
  if (rows.empty()) return Tensor::zeros({1, x.cols()});
  return mean_rows(select_rows(x, rows));
}

inline ForwardResult forward(const AcaNetParams& p, const SimParams& sim, const GlobalContext& ctx,
                             const Tensor& e_global, const PreparedSample& s, const AblationMask& mask,
                             const ModelConfig& cfg, AttentionTrace* trace = nullptr) {
  const auto M = ctx.size();
  const auto C = cfg.channels;
  Tensor e_ongoing = mask.use_ongoing
                         ? p.embed_ongoing(s.ongoing_adjacency, s.ongoing_features)
                         : Tensor::zeros({s.ongoing_mask.size(), C});
  Tensor tokens = p.embed_features(s.supply);

  Tensor e_out;
  if (mask.use_cross_attention) {
    Tensor fused;
    if (cfg.direction == InterGraphDirection::global_query) {
      fused = inter_graph_cat(p.inter_cat, e_global, e_ongoing, s.ongoing_mask, cfg.direction, trace);
    } else {
      // Ongoing slots attend over global nodes; their rows then replace the
      // matching global rows so the result stays M x C.
      auto on = inter_graph_cat(p.inter_cat, e_global, e_ongoing, s.ongoing_mask, cfg.direction, trace);
      if (s.has_ongoing()) {
        std::vector<std::size_t> slots(s.ongoing_rows.size());
        std::iota(slots.begin(), slots.end(), 0);
        fused = scatter_rows(e_global, select_rows(on, slots), s.ongoing_rows);
      } else {
        fused = e_global;
      }
    }
    e_out = influence_cat(p.influence_cat, fused, tokens, trace);
  } else {
    Tensor fused = Tensor::zeros({M, C});
    if (mask.use_global || mask.use_ongoing) {
      auto pooled_on = repeat_rows(masked_mean_rows(e_ongoing, s.ongoing_mask), M);
      fused = p.fuse_graph(concat_cols(e_global, pooled_on));
    }
    auto pooled_tok = repeat_rows(mean_rows(tokens), M);
    e_out = p.fuse_features(concat_cols(fused, pooled_tok));
  }

  ForwardResult r;
  r.e_out = e_out;
  if (mask.use_adaptive_learning) {
    r.adjacency = adaptive_adjacency(p.agl, e_out);
    r.graph_loss = graph_loss(r.adjacency, s.truth, s.truth_rows);
  } else {
    r.adjacency = ctx.prior;
    r.graph_loss = Tensor::scalar(0.0);
  }
  auto simulated = simulate_pressure(sim, ctx.node_features, r.adjacency, s.supply);
  auto summary = concat_cols(mean_rows(e_out), mean_rows(tokens));
  auto residual = scale(reshape(p.readout2(relu(p.readout1(summary))), {1}), p.label_scale);
  r.pressure = add(simulated, residual);
  return r;
}

}  // namespace aca

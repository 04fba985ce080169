#pragma once

// Pressure surrogate f2: (future adjacency, global node features, supply/env
// features) -> seconds. Two propagation layers with separate self and
// neighbour weights, mean pooling, and an MLP head with a softplus output.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "agl.hpp"
#include "graph.hpp"
#include "optim.hpp"
#include "params.hpp"
#include "tensor.hpp"

namespace aca {

struct SimParams {
  Tensor self1, neigh1, bias1;  // F_AOI x H
  Tensor self2, neigh2, bias2;  // H x H
  Linear head1;                 // (H + N_f) -> H2
  Linear head2;                 // H2 -> 1
  Tensor output_scale;          // {1}, seconds; never trained

  static SimParams make(Initializer& init, std::size_t f_aoi, std::size_t n_f,
                        std::size_t hidden = 32, double output_scale = 1000.0) {
    SimParams p;
    p.self1 = init.glorot(f_aoi, hidden);
    p.neigh1 = init.glorot(f_aoi, hidden);
    p.bias1 = Initializer::constant({hidden}, 0.0);
    p.self2 = init.glorot(hidden, hidden);
    p.neigh2 = init.glorot(hidden, hidden);
    p.bias2 = Initializer::constant({hidden}, 0.0);
    p.head1 = Linear::make(init, hidden + n_f, hidden);
    p.head2 = Linear::make(init, hidden, 1, 0.1);
    // softplus(log(e - 1)) == 1, so an untrained model predicts output_scale.
    p.head2.bias.mutable_values()[0] = std::log(std::exp(1.0) - 1.0);
    p.output_scale = Tensor({1}, {output_scale});
    return p;
  }

  double scale_seconds() const { return output_scale[0]; }

  /// Trainable tensors only (output_scale is a fixed constant).
  void for_each_param(const ParamVisitor& f, const std::string& prefix = "sim") {
    f(prefix + ".self1", self1);
    f(prefix + ".neigh1", neigh1);
    f(prefix + ".bias1", bias1);
    f(prefix + ".self2", self2);
    f(prefix + ".neigh2", neigh2);
    f(prefix + ".bias2", bias2);
    head1.for_each_param(f, prefix + ".head1");
    head2.for_each_param(f, prefix + ".head2");
  }
};

/// Returns a {1} tensor in seconds, differentiable with respect to `a`.
inline Tensor simulate_pressure(const SimParams& p, const Tensor& node_features, const Tensor& a,
                                const Tensor& f) {
  const auto m = node_features.rows();
  if (a.ndim() != 2 || a.rows() != m || a.cols() != m)
    throw ShapeError("simulate_pressure: adjacency " + shape_str(a.shape()) + " vs " +
                     std::to_string(m) + " nodes");
  if (node_features.cols() != p.self1.rows())
    throw ShapeError("simulate_pressure: node features have " +
                     std::to_string(node_features.cols()) + " columns");
  if (f.numel() + p.self2.cols() != p.head1.weight.rows())
    throw ShapeError("simulate_pressure: supply/env vector has " + std::to_string(f.numel()) +
                     " values");
  auto h1 = relu(add_bias(add(matmul(node_features, p.self1), matmul(a, matmul(node_features, p.neigh1))),
                          p.bias1));
  auto h2 = relu(add_bias(add(matmul(h1, p.self2), matmul(a, matmul(h1, p.neigh2))), p.bias2));
  auto z = concat_cols(mean_rows(h2), reshape(f, {1, f.numel()}));
  auto raw = p.head2(relu(p.head1(z)));
  return reshape(mul(softplus(raw), reshape(p.output_scale, {1, 1})), {1});
}

/// Simulator input built from a raw truth matrix: row-normalised, with empty
/// rows replaced by the uniform row that softmax(relu(0)) produces.
inline Tensor simulator_adjacency(const DenseMatrix& raw) {
  auto nt = truth_adjacency_normalized(raw);
  const auto n = raw.n;
  std::vector<double> v(nt.matrix.values().begin(), nt.matrix.values().end());
  for (std::size_t i = 0; i < n; ++i)
    if (!nt.row_mask[i])
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] = 1.0 / static_cast<double>(n);
  return Tensor({n, n}, std::move(v));
}

struct SimExample {
  Tensor adjacency;  // M x M
  Tensor supply;     // 1 x N_f, normalised
  double label = 0.0;
};

struct PretrainConfig {
  double learning_rate = 3e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::size_t patience = 8;
  std::uint64_t seed = 11;
  std::size_t hidden = 32;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
  double best_val_mae = 0.0;
};

struct PretrainResult {
  SimParams params;
  std::vector<PretrainEpoch> curve;
};

inline double sim_mae(const SimParams& p, const Tensor& nodes, const std::vector<SimExample>& xs) {
  double s = 0.0;
  for (const auto& x : xs) s += std::abs(simulate_pressure(p, nodes, x.adjacency, x.supply).item() - x.label);
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

/// MAE regression on (truth adjacency, features) -> label, keeping the
/// parameters with the best validation MAE. Early-stops after `patience`
/// epochs without improvement.
inline PretrainResult pretrain_simulator(const Tensor& nodes, const std::vector<SimExample>& train,
                                         const std::vector<SimExample>& val, std::size_t n_f,
                                         const PretrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("pretrain: empty training set");
  double mean = 0.0;
  for (const auto& x : train) mean += x.label;
  mean /= static_cast<double>(train.size());

  Initializer init(cfg.seed);
  SimParams params = SimParams::make(init, nodes.cols(), n_f, cfg.hidden, mean);
  std::vector<Tensor> leaves;
  params.for_each_param([&](const std::string&, Tensor& t) { leaves.push_back(t); });
  Adam opt(leaves, {cfg.learning_rate});

  const auto& monitor = val.empty() ? train : val;
  PretrainResult result;
  result.params = clone_params(params);
  double best = sim_mae(params, nodes, monitor);
  std::size_t since_best = 0;

  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      TapeScope scope(tape);
      std::vector<Tensor> preds;
      std::vector<double> labels;
      for (auto i = start; i < end; ++i) {
        const auto& x = train[order[i]];
        preds.push_back(simulate_pressure(params, nodes, x.adjacency, x.supply));
        labels.push_back(x.label);
      }
      auto loss = mae(stack_scalars(preds), Tensor({labels.size(), 1}, labels));
      if (!std::isfinite(loss.item())) throw std::runtime_error("pretrain: non-finite loss");
      epoch_loss += loss.item() * static_cast<double>(end - start);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
    const double v = sim_mae(params, nodes, monitor);
    if (v < best) {
      best = v;
      result.params = clone_params(params);
      since_best = 0;
    } else {
      ++since_best;
    }
    result.curve.push_back({epoch, epoch_loss / static_cast<double>(train.size()), v, best});
    if (since_best >= cfg.patience) break;
  }
  set_trainable(result.params, false);
  return result;
}

}  // namespace aca

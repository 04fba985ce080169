#pragma once

// Training loop for L = L_P + lambda * L_graph, evaluation, and the ablation harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset_io.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "simulator.hpp"

namespace aca {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double lambda = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  AblationMask mask;
  bool fine_tune_simulator = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  }

  /// Graph supervision only applies when the adaptive adjacency exists.
  double effective_lambda() const { return mask.use_adaptive_learning ? lambda : 0.0; }
};

/// Normalisation, global context and prepared tensors for all three splits.
struct TrainingData {
  DatasetHeader header;
  FlowGraph global;
  NormalizationStats stats;
  GlobalContext ctx;
  std::vector<PreparedSample> train, val, test;
  std::vector<Sample> raw_test;  // kept for input-byte accounting
};

inline std::vector<PreparedSample> prepare_split(const TrainingData& d, const Dataset& ds,
                                                 std::size_t slots) {
  std::vector<PreparedSample> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(prepare_sample(d.stats, d.ctx, s, d.header.f_aoi, slots));
  return out;
}

/// Statistics come from `train` only.
inline TrainingData prepare_training_data(const Dataset& train, const Dataset& val,
                                          const Dataset& test, const ModelConfig& cfg,
                                          std::optional<NormalizationStats> stats = std::nullopt) {
  TrainingData d;
  d.header = train.header;
  d.global = train.global;
  d.stats = stats ? *stats : fit_normalization(train);
  d.ctx = make_global_context(d.stats, d.global, d.header.f_aoi);
  d.train = prepare_split(d, train, cfg.ongoing_slots);
  d.val = prepare_split(d, val, cfg.ongoing_slots);
  d.test = prepare_split(d, test, cfg.ongoing_slots);
  d.raw_test = test.samples;
  return d;
}

inline std::vector<SimExample> simulator_examples(const std::vector<PreparedSample>& xs) {
  std::vector<SimExample> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back({x.sim_adjacency, x.supply, x.label});
  return out;
}

struct StepLog {
  double total = 0.0;
  double pressure_loss = 0.0;
  double graph_loss = 0.0;
  double lambda = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_pressure_loss = 0.0;
  double train_graph_loss = 0.0;
  double val_mae = 0.0;
  double best_val_mae = 0.0;
};

struct TrainResult {
  AcaNetParams params;  // best validation checkpoint
  SimParams sim;        // identical to the input unless fine-tuning
  std::vector<EpochLog> curve;
  std::vector<StepLog> steps;
  std::size_t best_epoch = 0;
};

struct BatchLoss {
  Tensor total, pressure, graph;
};

/// Builds the loss for samples `idx` on the active tape (if any).
inline BatchLoss batch_loss(const AcaNetParams& p, const SimParams& sim, const TrainingData& d,
                            const std::vector<PreparedSample>& split,
                            std::span<const std::size_t> idx, const TrainConfig& tc,
                            const ModelConfig& mc) {
  auto e_global = encode_global(p, d.ctx, tc.mask);
  std::vector<Tensor> preds, graphs;
  std::vector<double> labels;
  for (auto i : idx) {
    auto r = forward(p, sim, d.ctx, e_global, split[i], tc.mask, mc);
    preds.push_back(r.pressure);
    graphs.push_back(r.graph_loss);
    labels.push_back(split[i].label);
  }
  BatchLoss b;
  b.pressure = mae(stack_scalars(preds), Tensor({labels.size(), 1}, labels));
  b.graph = mean_all(stack_scalars(graphs));
  b.total = add(b.pressure, scale(b.graph, tc.effective_lambda()));
  return b;
}

inline std::vector<double> predict(const AcaNetParams& p, const SimParams& sim, const TrainingData& d,
                                   const std::vector<PreparedSample>& split, const AblationMask& mask,
                                   const ModelConfig& mc) {
  auto e_global = encode_global(p, d.ctx, mask);
  std::vector<double> out;
  out.reserve(split.size());
  for (const auto& s : split) out.push_back(forward(p, sim, d.ctx, e_global, s, mask, mc).pressure.item());
  return out;
}

/// Per-sample masked-row MSE of the learned adjacency against the truth.
inline std::vector<double> graph_losses(const AcaNetParams& p, const SimParams& sim,
                                        const TrainingData& d, const std::vector<PreparedSample>& split,
                                        const AblationMask& mask, const ModelConfig& mc) {
  auto e_global = encode_global(p, d.ctx, mask);
  std::vector<double> out;
  for (const auto& s : split) out.push_back(forward(p, sim, d.ctx, e_global, s, mask, mc).graph_loss.item());
  return out;
}

inline double split_mae(const AcaNetParams& p, const SimParams& sim, const TrainingData& d,
                        const std::vector<PreparedSample>& split, const AblationMask& mask,
                        const ModelConfig& mc) {
  auto pred = predict(p, sim, d, split, mask, mc);
  std::vector<double> y;
  for (const auto& s : split) y.push_back(s.label);
  return accuracy_metrics(y, pred).mae;
}

using EpochCallback = std::function<void(const EpochLog&)>;

inline TrainResult train(const TrainConfig& tc, const ModelConfig& mc, const TrainingData& d,
                         const SimParams& sim_in, const EpochCallback& on_epoch = {}) {
  tc.validate();
  if (d.train.empty()) throw std::invalid_argument("train: empty training split");
  AcaNetParams params =
      AcaNetParams::make(mc, d.header.f_aoi, d.header.n_f, tc.seed, d.stats.label_std);
  SimParams sim = clone_params(sim_in);
  set_trainable(sim, tc.fine_tune_simulator);

  std::vector<Tensor> leaves;
  for (auto& [name, t] : params.active_params(tc.mask)) leaves.push_back(t);
  if (tc.fine_tune_simulator)
    sim.for_each_param([&](const std::string&, Tensor& t) { leaves.push_back(t); });
  // Inactive parameters stay frozen so they never pick up gradients.
  params.for_each_param([&](const std::string&, Tensor& t) {
    t.set_requires_grad(std::any_of(leaves.begin(), leaves.end(),
                                    [&](const Tensor& l) { return same_storage(l, t); }));
  });
  Adam opt(leaves, {tc.learning_rate});

  TrainResult result;
  const auto& monitor = d.val.empty() ? d.train : d.val;
  double best = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(tc.seed ^ 0xacaULL);
  std::vector<std::size_t> order(d.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const auto end = std::min(order.size(), start + tc.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tape tape;
      TapeScope scope(tape);
      auto b = batch_loss(params, sim, d, d.train, idx, tc, mc);
      const double total = b.total.item();
      if (!std::isfinite(total)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch starting " << start
           << ": L_P=" << b.pressure.item() << " L_graph=" << b.graph.item();
        throw NumericError(os.str());
      }
      result.steps.push_back({total, b.pressure.item(), b.graph.item(), tc.effective_lambda()});
      const double w = static_cast<double>(end - start);
      log.train_loss += total * w;
      log.train_pressure_loss += b.pressure.item() * w;
      log.train_graph_loss += b.graph.item() * w;
      tape.backward(b.total);
      opt.step();
      opt.zero_grad();
    }
    const double n = static_cast<double>(order.size());
    log.train_loss /= n;
    log.train_pressure_loss /= n;
    log.train_graph_loss /= n;
    log.val_mae = split_mae(params, sim, d, monitor, tc.mask, mc);
    if (!std::isfinite(log.val_mae)) throw NumericError("non-finite validation MAE at epoch " + std::to_string(epoch));
    if (log.val_mae < best) {
      best = log.val_mae;
      result.params = clone_params(params);
      result.sim = clone_params(sim);
      result.best_epoch = epoch;
    }
    log.best_val_mae = best;
    result.curve.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (tc.epochs == 0) {
    result.params = clone_params(params);
    result.sim = clone_params(sim);
  }
  set_trainable(result.params, false);
  set_trainable(result.sim, false);
  return result;
}

/// Accuracy plus median wall time per batch (at least `min_batches` timed
/// batches, cycling the split if needed) and mean per-sample input bytes.
inline MetricsReport evaluate(const AcaNetParams& p, const SimParams& sim, const TrainingData& d,
                              const std::vector<PreparedSample>& split, const AblationMask& mask,
                              const ModelConfig& mc, std::size_t batch_size = 32,
                              std::size_t min_batches = 20, const std::vector<Sample>* raw = nullptr) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  auto pred = predict(p, sim, d, split, mask, mc);
  std::vector<double> y;
  for (const auto& s : split) y.push_back(s.label);
  MetricsReport r = accuracy_metrics(y, pred);

  std::vector<double> times;
  std::size_t cursor = 0;
  while (times.size() < min_batches) {
    const auto t0 = std::chrono::steady_clock::now();
    auto e_global = encode_global(p, d.ctx, mask);
    for (std::size_t k = 0; k < batch_size; ++k) {
      (void)forward(p, sim, d.ctx, e_global, split[cursor], mask, mc);
      cursor = (cursor + 1) % split.size();
    }
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  r.runtime_per_batch = median(times);

  if (raw && !raw->empty()) {
    double bytes = 0.0;
    for (const auto& s : *raw)
      bytes += static_cast<double>(input_bytes(s, d.global, d.header.f_aoi, Representation::aca()));
    r.input_bytes = static_cast<std::size_t>(std::llround(bytes / static_cast<double>(raw->size())));
  }
  return r;
}

struct AblationRun {
  AblationMask mask;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> per_seed;
  MetricsReport median;  // element-wise medians across seeds
};

using AblationProgress = std::function<void(const AblationMask&, std::uint64_t, const MetricsReport&)>;

/// Trains and tests every row with every seed.
inline std::vector<AblationRun> ablate(const TrainConfig& base, const ModelConfig& mc,
                                       const TrainingData& d, const SimParams& sim,
                                       const std::vector<AblationMask>& rows,
                                       const std::vector<std::uint64_t>& seeds,
                                       const AblationProgress& progress = {}) {
  if (seeds.empty()) throw std::invalid_argument("ablate: no seeds");
  std::vector<AblationRun> out;
  for (const auto& mask : rows) {
    AblationRun run;
    run.mask = mask;
    run.seeds = seeds;
    for (auto seed : seeds) {
      TrainConfig tc = base;
      tc.mask = mask;
      tc.seed = seed;
      auto res = train(tc, mc, d, sim);
      auto m = evaluate(res.params, res.sim, d, d.test, mask, mc, tc.batch_size, 20, &d.raw_test);
      if (progress) progress(mask, seed, m);
      run.per_seed.push_back(m);
    }
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& m : run.per_seed) v.push_back(static_cast<double>(m.*field));
      return median(v);
    };
    run.median.mae = med(&MetricsReport::mae);
    run.median.rmse = med(&MetricsReport::rmse);
    run.median.mape = med(&MetricsReport::mape);
    run.median.runtime_per_batch = med(&MetricsReport::runtime_per_batch);
    run.median.input_bytes = static_cast<std::size_t>(med(&MetricsReport::input_bytes));
    run.median.count = run.per_seed.front().count;
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace aca

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace aca;
using aca::testing::reduced_model;

namespace {

struct Fixture {
  DatasetSplits splits;
  ModelConfig mc = reduced_model();
  TrainingData data;
  SimParams sim;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f;
    f.splits = make_dataset(aca::testing::small_world(17), 420, {0.7, 0.15, 0.15});
    f.data = prepare_training_data(f.splits.train, f.splits.val, f.splits.test, f.mc);
    PretrainConfig pc;
    pc.epochs = 5;
    pc.hidden = 8;
    f.sim = pretrain_simulator(f.data.ctx.node_features, simulator_examples(f.data.train),
                               simulator_examples(f.data.val), f.data.header.n_f, pc)
                .params;
    return f;
  }();
  return f;
}

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  tc.seed = 5;
  return tc;
}

std::vector<double> sim_values(SimParams& s) {
  std::vector<double> v;
  s.for_each_param([&](const std::string&, Tensor& t) { v.insert(v.end(), t.values().begin(), t.values().end()); });
  return v;
}

}  // namespace

TEST(Metrics, Examples) {
  std::vector<double> y = {100, 200, 300};
  auto perfect = accuracy_metrics(y, y);
  EXPECT_EQ(perfect.mae, 0.0);
  EXPECT_EQ(perfect.rmse, 0.0);
  EXPECT_EQ(perfect.mape, 0.0);
  std::vector<double> off = {110, 210, 310};
  auto m = accuracy_metrics(y, off);
  EXPECT_DOUBLE_EQ(m.mae, 10.0);
  EXPECT_DOUBLE_EQ(m.rmse, 10.0);
  EXPECT_THROW(accuracy_metrics({}, {}), std::invalid_argument);
  EXPECT_THROW(accuracy_metrics(y, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(30.0, 2000.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(200), p(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = u(rng);
      p[i] = u(rng);
    }
    auto m = accuracy_metrics(y, p);
    auto o = aca::testing::oracle_metrics(y, p);
    EXPECT_NEAR(m.mae, o.mae, 1e-12 * o.mae);
    EXPECT_NEAR(m.rmse, o.rmse, 1e-12 * o.rmse);
    EXPECT_NEAR(m.mape, o.mape, 1e-12 * o.mape);
    EXPECT_GE(m.rmse, m.mae);
  }
}

TEST(Normalization, ZScoreAndMinMax) {
  const auto& f = fixture();
  const auto& s = f.data.stats;
  std::vector<double> at_mean = s.supply.mean;
  for (double v : s.supply.apply(at_mean)) EXPECT_EQ(v, 0.0);
  double max_count = 0.0;
  for (const auto& e : f.splits.train.global.edges) max_count = std::max(max_count, e.order_count);
  EXPECT_EQ(s.global_count.apply(max_count), 1.0);
  EXPECT_GT(s.global_count.apply(s.global_count.lo), 0.0);
}

TEST(Normalization, ZeroVariancePassesThrough) {
  auto z = ZScore::fit({{1.0, 5.0}, {3.0, 5.0}}, 2);
  auto out = z.apply({2.0, 7.0});
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 7.0);
}

TEST(Normalization, StatsIgnoreTestSplit) {
  const auto& f = fixture();
  auto test = f.splits.test;
  for (auto& s : test.samples) {
    s.label_pressure *= 3.0;
    for (auto& v : s.f.values) v += 100.0;
  }
  auto d = prepare_training_data(f.splits.train, f.splits.val, test, f.mc);
  EXPECT_EQ(d.stats.supply.mean, f.data.stats.supply.mean);
  EXPECT_EQ(d.stats.label_mean, f.data.stats.label_mean);
  EXPECT_EQ(d.stats.ongoing_count.hi, f.data.stats.ongoing_count.hi);
}

TEST(Model, AblationRowsAreTheSixVariants) {
  auto rows = ablation_rows();
  ASSERT_EQ(rows.size(), 6u);
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"features-only", "ongoing", "global", "ongoing+global",
                                              "ongoing+global+CA", "ongoing+global+CA+AGL"}));
}

TEST(Model, FeaturesOnlyIgnoresGraphs) {
  const auto& f = fixture();
  auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
  const AblationMask none{false, false, false, false};
  auto eg = encode_global(p, f.data.ctx, none);
  auto s = f.data.train[3];
  s.ongoing_features = s.ongoing_features.detach();
  s.supply = s.supply.detach();
  const double base = forward(p, f.sim, f.data.ctx, eg, s, none, f.mc).pressure.item();
  for (auto& v : s.ongoing_features.mutable_values()) v += 1.0;
  s.truth = Tensor::zeros(s.truth.shape());
  EXPECT_EQ(forward(p, f.sim, f.data.ctx, eg, s, none, f.mc).pressure.item(), base);
  s.supply.mutable_values()[0] += 1.0;
  EXPECT_NE(forward(p, f.sim, f.data.ctx, eg, s, none, f.mc).pressure.item(), base);
}

TEST(Model, ForwardIsDeterministic) {
  const auto& f = fixture();
  auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
  auto q = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
  const AblationMask full;
  for (std::size_t i = 0; i < 5; ++i) {
    auto a = forward(p, f.sim, f.data.ctx, encode_global(p, f.data.ctx, full), f.data.test[i], full, f.mc);
    auto b = forward(q, f.sim, f.data.ctx, encode_global(q, f.data.ctx, full), f.data.test[i], full, f.mc);
    EXPECT_EQ(a.pressure.item(), b.pressure.item());
    EXPECT_EQ(std::vector<double>(a.adjacency.values().begin(), a.adjacency.values().end()),
              std::vector<double>(b.adjacency.values().begin(), b.adjacency.values().end()));
  }
}

TEST(Model, OngoingQueryDirectionKeepsGlobalRows) {
  const auto& f = fixture();
  auto mc = f.mc;
  mc.direction = InterGraphDirection::ongoing_query;
  auto p = AcaNetParams::make(mc, 8, 12, 3, f.data.stats.label_std);
  const AblationMask full;
  auto r = forward(p, f.sim, f.data.ctx, encode_global(p, f.data.ctx, full), f.data.train[0], full, mc);
  EXPECT_EQ(r.e_out.shape(), (Shape{f.data.ctx.size(), mc.channels}));
}

// Every parameter that takes part under a mask must receive a gradient.
TEST(Model, GradientAuditHasNoDeadBranches) {
  const auto& f = fixture();
  for (const auto& mask : ablation_rows()) {
    auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
    auto active = p.active_params(mask);
    p.for_each_param([](const std::string&, Tensor& t) { t.set_requires_grad(false); });
    for (auto& [name, t] : active) t.set_requires_grad(true);
    TrainConfig tc = quick();
    tc.mask = mask;
    std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(batch_loss(p, f.sim, f.data, f.data.train, idx, tc, f.mc).total);
    }
    for (auto& [name, t] : active) {
      bool nonzero = false;
      for (double g : t.grad()) nonzero = nonzero || g != 0.0;
      EXPECT_TRUE(t.has_grad() && nonzero) << mask.label() << ": " << name;
    }
  }
}

TEST(Model, EndToEndGradcheck) {
  const auto& f = fixture();
  auto p = AcaNetParams::make(f.mc, 8, 12, 7, f.data.stats.label_std);
  TrainConfig tc = quick();
  std::vector<std::size_t> idx = {1, 2};
  auto r = aca::testing::gradcheck(p.active_params(tc.mask), [&] {
    return batch_loss(p, f.sim, f.data, f.data.train, idx, tc, f.mc).total;
  });
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(Train, LambdaZeroRemovesGraphGradient) {
  const auto& f = fixture();
  TrainConfig tc = quick();
  tc.lambda = 0.0;
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  auto grads = [&](bool pressure_only) {
    auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
    Tape tape;
    {
      TapeScope scope(tape);
      auto b = batch_loss(p, f.sim, f.data, f.data.train, idx, tc, f.mc);
      tape.backward(pressure_only ? b.pressure : b.total);
    }
    std::vector<double> g;
    for (auto& [name, t] : named_params(p))
      if (t.has_grad()) g.insert(g.end(), t.grad().begin(), t.grad().end());
    return g;
  };
  EXPECT_EQ(grads(false), grads(true));

  // and the graph term alone contributes exactly nothing
  auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
  Tape tape;
  {
    TapeScope scope(tape);
    auto b = batch_loss(p, f.sim, f.data, f.data.train, idx, tc, f.mc);
    tape.backward(scale(b.graph, tc.lambda));
  }
  for (auto& [name, t] : named_params(p))
    for (double g : t.grad()) EXPECT_EQ(g, 0.0) << name;
}

TEST(Train, LossIsAdditive) {
  const auto& f = fixture();
  auto r = train(quick(), f.mc, f.data, f.sim);
  ASSERT_FALSE(r.steps.empty());
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.total, s.pressure_loss + s.lambda * s.graph_loss, 1e-12);
    EXPECT_EQ(s.lambda, 0.1);
  }
}

TEST(Train, SeededRunsAreIdentical) {
  const auto& f = fixture();
  auto a = train(quick(), f.mc, f.data, f.sim);
  auto b = train(quick(), f.mc, f.data, f.sim);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].total, b.steps[i].total);
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].val_mae, b.curve[i].val_mae);
}

TEST(Train, SimulatorStaysFrozen) {
  const auto& f = fixture();
  SimParams before = clone_params(f.sim);
  auto r = train(quick(), f.mc, f.data, f.sim);
  EXPECT_EQ(sim_values(r.sim), sim_values(before));
  auto tc = quick(1);
  tc.fine_tune_simulator = true;
  auto tuned = train(tc, f.mc, f.data, f.sim);
  EXPECT_NE(sim_values(tuned.sim), sim_values(before));
  EXPECT_EQ(sim_values(before), sim_values(const_cast<SimParams&>(f.sim)));
}

TEST(Train, BestValidationCheckpointIsReturned) {
  const auto& f = fixture();
  auto r = train(quick(3), f.mc, f.data, f.sim);
  double best = 1e300;
  for (const auto& e : r.curve) best = std::min(best, e.val_mae);
  EXPECT_EQ(r.curve.back().best_val_mae, best);
  EXPECT_NEAR(split_mae(r.params, r.sim, f.data, f.data.val, AblationMask{}, f.mc), best, 1e-9);
}

TEST(Train, TestSplitDoesNotInfluenceTraining) {
  const auto& f = fixture();
  auto test = f.splits.test;
  for (auto& s : test.samples) s.label_pressure += 500.0;
  auto d = prepare_training_data(f.splits.train, f.splits.val, test, f.mc);
  auto a = train(quick(), f.mc, f.data, f.sim);
  auto b = train(quick(), f.mc, d, f.sim);
  EXPECT_EQ(a.curve.back().best_val_mae, b.curve.back().best_val_mae);
}

TEST(Train, OneSampleOverfits) {
  const auto& f = fixture();
  Dataset one = f.splits.train;
  one.samples.resize(1);
  auto d = prepare_training_data(one, one, one, f.mc, f.data.stats);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.seed = 3;
  auto r = train(tc, f.mc, d, f.sim);
  EXPECT_LT(r.curve.back().best_val_mae, 1.0);
}

TEST(Train, NonFiniteLossAborts) {
  const auto& f = fixture();
  SimParams broken = clone_params(f.sim);
  broken.output_scale = Tensor({1}, {std::nan("")});
  EXPECT_THROW(train(quick(1), f.mc, f.data, broken), NumericError);
}

TEST(Train, EmptyTrainingSplitRejected) {
  const auto& f = fixture();
  TrainingData d = f.data;
  d.train.clear();
  EXPECT_THROW(train(quick(), f.mc, d, f.sim), std::invalid_argument);
}

TEST(Evaluate, ReportIsConsistent) {
  const auto& f = fixture();
  auto p = AcaNetParams::make(f.mc, 8, 12, 3, f.data.stats.label_std);
  auto m = evaluate(p, f.sim, f.data, f.data.test, AblationMask{}, f.mc, 8, 20, &f.data.raw_test);
  auto pred = predict(p, f.sim, f.data, f.data.test, AblationMask{}, f.mc);
  std::vector<double> y;
  for (const auto& s : f.data.test) y.push_back(s.label);
  auto o = aca::testing::oracle_metrics(y, pred);
  EXPECT_NEAR(m.mae, o.mae, 1e-12 * o.mae);
  EXPECT_NEAR(m.rmse, o.rmse, 1e-12 * o.rmse);
  EXPECT_GE(m.rmse, m.mae);
  EXPECT_GT(m.runtime_per_batch, 0.0);
  EXPECT_GT(m.input_bytes, 0u);
  EXPECT_EQ(m.count, f.data.test.size());
  EXPECT_THROW(evaluate(p, f.sim, f.data, {}, AblationMask{}, f.mc), std::invalid_argument);
}

TEST(Ablate, RunsEveryRowWithSharedSeeds) {
  const auto& f = fixture();
  auto rows = ablation_rows();
  rows.resize(2);
  std::size_t calls = 0;
  auto out = ablate(quick(1), f.mc, f.data, f.sim, rows, {1, 2},
                    [&](const AblationMask&, std::uint64_t, const MetricsReport&) { ++calls; });
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(calls, 4u);
  for (const auto& run : out) {
    EXPECT_EQ(run.seeds, (std::vector<std::uint64_t>{1, 2}));
    EXPECT_DOUBLE_EQ(run.median.mae, 0.5 * (run.per_seed[0].mae + run.per_seed[1].mae));
  }
}

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace aca;
using aca::testing::small_world;

namespace {

WorldConfig constant_world(double rate) {
  auto c = default_world_config();
  c.arrival_rate_profile.assign(1, rate);
  c.rider_count_profile.assign(1, 40.0);
  c.congestion_profile.assign(1, 1.0);
  return c;
}

History one_order_history(double delivery) {
  History h;
  h.total_minutes = 10;
  h.sites.resize(4);
  h.events = {{3, 1, 2, delivery}};
  h.minute_offsets.assign(11, 0);
  for (std::size_t t = 4; t <= 10; ++t) h.minute_offsets[t] = 1;
  return h;
}

}  // namespace

TEST(World, ConfigValidation) {
  auto c = default_world_config();
  EXPECT_NO_THROW(c.validate());
  c.n_aoi = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = default_world_config();
  c.arrival_rate_profile[5] = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = default_world_config();
  c.horizon_minutes = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(generate_history(default_world_config(), 5), std::invalid_argument);
}

TEST(World, SameSeedSameEvents) {
  auto a = generate_history(small_world(9), 400);
  auto b = generate_history(small_world(9), 400);
  EXPECT_EQ(a.events, b.events);
  auto c = generate_history(small_world(10), 400);
  EXPECT_NE(a.events, c.events);
}

TEST(World, ClosedFormDeliveryTime) {
  auto c = default_world_config();
  c.noise_sigma = 0.0;
  c.queue_coeff = 0.0;
  c.rain_probability = 0.0;
  c.congestion_profile.assign(1, 1.0);
  auto h = generate_history(c, 300);
  ASSERT_FALSE(h.events.empty());
  for (const auto& e : h.events) {
    const auto& s = h.sites[e.src_aoi];
    const auto& d = h.sites[e.dst_aoi];
    const double dist = std::max(std::hypot(s.x - d.x, s.y - d.y), 200.0) * (1.0 + d.difficulty);
    EXPECT_NEAR(e.delivery_time, std::max(60.0, s.prep_time + dist / c.rider_speed), 1e-9);
  }
}

TEST(World, DeliveryTimesPositiveAndFloored) {
  auto h = generate_history(small_world(4), 800);
  for (const auto& e : h.events) EXPECT_GE(e.delivery_time, 60.0);
}

TEST(World, ArrivalRateMatchesProfile) {
  const double rate = 3.7;
  const std::int64_t minutes = 10000;
  auto h = generate_history(constant_world(rate), minutes);
  const double mean = static_cast<double>(h.events.size()) / static_cast<double>(minutes);
  const double se = std::sqrt(rate / static_cast<double>(minutes));
  EXPECT_LT(std::abs(mean - rate), 3.0 * se) << "mean " << mean;
}

TEST(World, QueueDelayMonotoneInLoad) {
  auto c = default_world_config();
  c.noise_sigma = 0.0;
  auto h = generate_history(c, 1500);
  // Same route at different loads: the extra time is queue_coeff * load_ratio.
  for (const auto& e : h.events) {
    const auto& st = h.minutes[static_cast<std::size_t>(e.create_minute)];
    const double base = h.sites[e.src_aoi].prep_time +
                        route_distance(h.sites, e.src_aoi, e.dst_aoi) / c.rider_speed * st.congestion;
    EXPECT_NEAR(e.delivery_time, std::max(60.0, base + c.queue_coeff * st.load_ratio), 1e-9);
  }
}

TEST(GlobalGraph, SingleOrder) {
  auto h = one_order_history(321.0);
  auto g = build_global_graph(h, 8);
  ASSERT_EQ(g.node_count(), 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  const double days = 10.0 / 1440.0;
  EXPECT_DOUBLE_EQ(g.edges[0].order_count, 1.0 / days);
  EXPECT_EQ(g.edges[0].avg_delivery_time, 321.0);
  EXPECT_THROW(build_global_graph(History{}, 8), std::invalid_argument);
}

TEST(GlobalGraph, OrderInvariant) {
  auto h = generate_history(small_world(), 600);
  auto g = build_global_graph(h, 8);
  auto shuffled = h;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.events.begin(), shuffled.events.end(), rng);
  auto b = build_global_graph(shuffled, 8);
  ASSERT_EQ(b.nodes, g.nodes);
  ASSERT_EQ(b.edges.size(), g.edges.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    EXPECT_EQ(b.edges[i].src, g.edges[i].src);
    EXPECT_EQ(b.edges[i].dst, g.edges[i].dst);
    EXPECT_EQ(b.edges[i].order_count, g.edges[i].order_count);
    // summation order only moves the last bits
    EXPECT_NEAR(b.edges[i].avg_delivery_time, g.edges[i].avg_delivery_time, 1e-12 * g.edges[i].avg_delivery_time);
  }
}

TEST(GlobalGraph, EdgeMeansMatchStreamingRecount) {
  auto h = generate_history(small_world(), 900);
  auto g = build_global_graph(h, 8);
  const double days = 900.0 / 1440.0;
  for (const auto& e : g.edges) {
    double mean = 0.0;
    std::size_t n = 0;
    for (const auto& ev : h.events)
      if (ev.src_aoi == e.src && ev.dst_aoi == e.dst) {
        ++n;
        mean += (ev.delivery_time - mean) / static_cast<double>(n);
      }
    EXPECT_NEAR(e.order_count, static_cast<double>(n) / days, 1e-9);
    EXPECT_NEAR(e.avg_delivery_time, mean, 1e-9 * mean);
  }
}

TEST(OngoingGraph, BeforeFirstOrderIsEmpty) {
  auto h = one_order_history(321.0);
  auto g = build_global_graph(h, 8);
  EXPECT_TRUE(build_ongoing_graph(h, 2, g).empty());
  EXPECT_TRUE(build_ongoing_graph(h, 3, g).empty());
}

TEST(OngoingGraph, SingleOpenOrder) {
  auto h = one_order_history(321.0);
  auto g = build_global_graph(h, 8);
  auto on = build_ongoing_graph(h, 5, g);
  ASSERT_EQ(on.edges.size(), 1u);
  EXPECT_EQ(on.edges[0].order_count, 1.0);
  EXPECT_EQ(on.edges[0].avg_delivery_time, 120.0);  // elapsed seconds
  EXPECT_EQ(on.node_count(), 2u);
  // delivered at 3*60 + 321 = 501 s, so gone by minute 9
  EXPECT_TRUE(build_ongoing_graph(h, 9, g).empty());
}

TEST(OngoingGraph, ContainedInGlobalAtRandomMinutes) {
  auto h = generate_history(small_world(12), 1200);
  auto g = build_global_graph(h, 8);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::int64_t> pick(0, 1199);
  const auto ix = g.index();
  for (int i = 0; i < 100; ++i) {
    auto on = build_ongoing_graph(h, pick(rng), g);
    for (const auto& n : on.nodes) EXPECT_TRUE(ix.count(n.id));
    for (const auto& e : on.edges) EXPECT_GT(e.order_count, 0.0);
  }
}

TEST(Labels, ArithmeticMean) {
  History h;
  h.total_minutes = 10;
  h.sites.resize(2);
  h.events = {{2, 0, 1, 100.0}, {3, 0, 1, 200.0}, {4, 1, 0, 300.0}, {7, 1, 0, 5000.0}};
  h.minute_offsets = {0, 0, 0, 1, 2, 3, 3, 3, 4, 4, 4};
  auto g = build_global_graph(h, 8);
  auto lt = label_and_truth(h, 2, g, 5);
  ASSERT_TRUE(lt);
  EXPECT_DOUBLE_EQ(lt->pressure, 200.0);
  EXPECT_EQ(lt->a_truth(0, 1), 300.0);  // 2 orders x 150 s
  EXPECT_EQ(lt->a_truth(1, 0), 300.0);
  EXPECT_EQ(lt->a_truth(0, 0), 0.0);
  EXPECT_FALSE(label_and_truth(h, 8, g, 1));
}

TEST(Labels, MatchBruteForceScan) {
  auto c = small_world(21);
  auto h = generate_history(c, 700);
  auto g = build_global_graph(h, 8);
  for (std::int64_t t = 30; t < 690; t += 3) {
    auto lt = label_and_truth(h, t, g, c.horizon_minutes);
    auto o = aca::testing::oracle_label(h, t, c.horizon_minutes);
    ASSERT_EQ(static_cast<bool>(lt), o.count > 0);
    if (!lt) continue;
    EXPECT_EQ(lt->order_count, o.count);
    EXPECT_EQ(lt->pressure, o.pressure);
    EXPECT_EQ(lt->a_truth.values, aca::testing::oracle_truth(o, g));
  }
}

TEST(Dataset, SplitCounts) {
  auto c = small_world(5);
  // find a minute count with exactly 1000 labelled minutes
  std::int64_t minutes = 1000 + c.ongoing_window + c.horizon_minutes - 1;
  DatasetSplits s;
  for (int tries = 0; tries < 200; ++tries, ++minutes) {
    s = make_dataset(c, minutes, {0.8, 0.1, 0.1});
    if (s.train.size() + s.val.size() + s.test.size() >= 1000) break;
  }
  ASSERT_EQ(s.train.size() + s.val.size() + s.test.size(), 1000u);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
}

TEST(Dataset, Chronological) {
  auto s = make_dataset(small_world(6), 900, {0.7, 0.15, 0.15});
  auto minmax = [](const Dataset& d) {
    auto [lo, hi] = std::minmax_element(d.samples.begin(), d.samples.end(),
                                        [](const auto& a, const auto& b) { return a.minute_index < b.minute_index; });
    return std::pair{lo->minute_index, hi->minute_index};
  };
  EXPECT_LT(minmax(s.train).second, minmax(s.val).first);
  EXPECT_LT(minmax(s.val).second, minmax(s.test).first);
}

TEST(Dataset, InvalidSplitRejected) {
  EXPECT_THROW(make_dataset(small_world(), 300, {0.5, 0.1, 0.1}), std::invalid_argument);
  EXPECT_THROW(make_dataset(small_world(), 300, {1.2, -0.1, -0.1}), std::invalid_argument);
}

TEST(Dataset, DefaultWorldHasFewEmptyMinutes) {
  auto c = default_world_config();
  auto s = make_dataset(c, 3000, {0.7, 0.13, 0.17});
  const double kept = static_cast<double>(s.train.size() + s.val.size() + s.test.size());
  EXPECT_GE(kept / static_cast<double>(s.candidate_minutes), 0.95);
}

TEST(Dataset, Deterministic) {
  auto a = make_dataset(small_world(14), 500, {0.8, 0.1, 0.1});
  auto b = make_dataset(small_world(14), 500, {0.8, 0.1, 0.1});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Scenario, AnnularAndAstroidDifferInPressure) {
  auto mean_label = [](OrderPattern p) {
    auto s = make_dataset(small_world(7, p), 3000, {1.0, 0.0, 0.0});
    double sum = 0.0;
    for (const auto& x : s.train.samples) sum += x.label_pressure;
    return std::pair{sum / static_cast<double>(s.train.size()), s.history.events.size()};
  };
  auto [annular, n_a] = mean_label(OrderPattern::annular);
  auto [astroid, n_b] = mean_label(OrderPattern::astroid);
  EXPECT_EQ(n_a, n_b);  // identical arrival stream
  EXPECT_GT(std::abs(annular - astroid) / std::min(annular, astroid), 0.05);
}

TEST(SupplyFeatures, LengthAndContent) {
  auto c = small_world();
  auto h = generate_history(c, 200);
  auto f = supply_env_features(c, h, 100);
  ASSERT_EQ(f.values.size(), c.n_f);
  EXPECT_EQ(f.values[0], h.minutes[100].riders);
  EXPECT_EQ(f.values[7], static_cast<double>(h.created_in(95, 100).size()));
}

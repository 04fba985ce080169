#pragma once

// Synthetic on-demand delivery district. Orders arrive as a per-minute
// Poisson process, pick (src,dst) AOIs from a spatial pattern, and get a
// delivery time
//
//   prep(src) + distance(src,dst) / speed * congestion(t) + queue(load) + noise
//
// floored at 60 s. Labels and truth adjacencies are exact functions of the
// generated event list.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "graph.hpp"

namespace aca {

enum class OrderPattern { annular, astroid, uniform, mixed };

inline const char* to_string(OrderPattern p) {
  switch (p) {
    case OrderPattern::annular: return "annular";
    case OrderPattern::astroid: return "astroid";
    case OrderPattern::uniform: return "uniform";
    case OrderPattern::mixed: return "mixed";
  }
  return "?";
}

inline OrderPattern parse_pattern(const std::string& s) {
  if (s == "annular") return OrderPattern::annular;
  if (s == "astroid") return OrderPattern::astroid;
  if (s == "uniform") return OrderPattern::uniform;
  if (s == "mixed") return OrderPattern::mixed;
  throw std::invalid_argument("unknown order pattern '" + s + "'");
}

inline constexpr std::size_t kMinutesPerDay = 1440;

/// Profiles are indexed by minute of day and repeat daily.
struct WorldConfig {
  std::uint32_t n_aoi = 20;
  OrderPattern pattern = OrderPattern::mixed;
  std::vector<double> arrival_rate_profile;
  std::vector<double> rider_count_profile;
  std::vector<double> congestion_profile;
  double rider_speed = 4.5;
  double noise_sigma = 60.0;
  std::uint64_t seed = 7;
  std::uint32_t horizon_minutes = 5;

  std::uint32_t ongoing_window = 30;
  double district_radius = 3000.0;
  double queue_coeff = 60.0;        // seconds per open order per rider
  double regime_dwell = 45.0;       // mean minutes between pattern switches (mixed)
  double supply_volatility = 0.04;  // per-minute log-step of the rider supply factor
  double rain_probability = 0.004;  // per-minute chance a dry spell turns to rain
  double rain_congestion = 0.35;    // congestion multiplier added at full rain
  std::uint32_t f_aoi = 8;
  std::uint32_t n_f = 12;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("world config: " + m); };
    if (n_aoi < 2) fail("n_aoi must be at least 2");
    if (horizon_minutes < 1) fail("horizon_minutes must be at least 1");
    if (ongoing_window < 1) fail("ongoing_window must be at least 1");
    for (const auto* prof : {&arrival_rate_profile, &rider_count_profile, &congestion_profile}) {
      if (prof->empty()) fail("profiles must be non-empty");
      for (double v : *prof)
        if (!(v > 0.0) || !std::isfinite(v)) fail("profiles must be strictly positive");
    }
    for (double v : congestion_profile)
      if (v < 1.0) fail("congestion profile must be >= 1");
    if (!(rider_speed > 0.0)) fail("rider_speed must be positive");
    if (noise_sigma < 0.0 || queue_coeff < 0.0 || supply_volatility < 0.0 || rain_congestion < 0.0)
      fail("noise_sigma, queue_coeff, supply_volatility and rain_congestion must be >= 0");
    if (rain_probability < 0.0 || rain_probability > 1.0) fail("rain_probability must be in [0,1]");
    if (!(regime_dwell >= 1.0)) fail("regime_dwell must be >= 1");
    if (!(district_radius > 0.0)) fail("district_radius must be positive");
    if (f_aoi < 1 || n_f < 1) fail("f_aoi and n_f must be positive");
  }

  template <class V>
  static double cyclic(const V& prof, std::int64_t minute) {
    const auto n = static_cast<std::int64_t>(prof.size());
    return prof[static_cast<std::size_t>(((minute % n) + n) % n)];
  }
  double rate_at(std::int64_t m) const { return cyclic(arrival_rate_profile, m); }
  double riders_at(std::int64_t m) const { return cyclic(rider_count_profile, m); }
  double congestion_at(std::int64_t m) const { return cyclic(congestion_profile, m); }
};

/// Lunch and dinner peaks over a low base, riders proportional to demand.
inline WorldConfig default_world_config() {
  WorldConfig c;
  c.arrival_rate_profile.resize(kMinutesPerDay);
  c.rider_count_profile.resize(kMinutesPerDay);
  c.congestion_profile.resize(kMinutesPerDay);
  for (std::size_t m = 0; m < kMinutesPerDay; ++m) {
    const double t = static_cast<double>(m);
    auto bump = [t](double center, double width) {
      const double z = (t - center) / width;
      return std::exp(-z * z);
    };
    const double rate = 2.5 + 7.0 * bump(720, 60) + 8.0 * bump(1110, 70) + 1.5 * bump(900, 120);
    c.arrival_rate_profile[m] = rate;
    c.rider_count_profile[m] = std::round(rate * 8.0);
    c.congestion_profile[m] = 1.0 + 0.25 * bump(480, 60) + 0.3 * bump(1080, 80);
  }
  return c;
}

struct OrderEvent {
  std::int64_t create_minute = 0;
  std::uint32_t src_aoi = 0;
  std::uint32_t dst_aoi = 0;
  double delivery_time = 0.0;

  double finish_second() const { return static_cast<double>(create_minute) * 60.0 + delivery_time; }
  bool operator==(const OrderEvent&) const = default;
};

struct AoiSite {
  double x = 0.0, y = 0.0;
  double prep_time = 0.0;
  double difficulty = 0.0;
  bool central = false;

  double radius() const { return std::hypot(x, y); }
};

/// World state observed at the start of a minute (before its arrivals).
struct MinuteState {
  double riders = 0.0;
  double open_orders = 0.0;
  double congestion = 1.0;
  double rain = 0.0;
  double load_ratio = 0.0;
  double mean_open_elapsed = 0.0;
  OrderPattern regime = OrderPattern::uniform;
};

struct History {
  std::vector<AoiSite> sites;
  std::vector<OrderEvent> events;  // sorted by create_minute
  std::vector<MinuteState> minutes;
  std::vector<std::size_t> minute_offsets;  // events of minute t: [off[t], off[t+1])
  std::int64_t total_minutes = 0;

  std::span<const OrderEvent> created_in(std::int64_t begin, std::int64_t end) const {
    begin = std::clamp<std::int64_t>(begin, 0, total_minutes);
    end = std::clamp<std::int64_t>(end, begin, total_minutes);
    return std::span<const OrderEvent>(events).subspan(
        minute_offsets[static_cast<std::size_t>(begin)],
        minute_offsets[static_cast<std::size_t>(end)] - minute_offsets[static_cast<std::size_t>(begin)]);
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator per concern so that, e.g., arrival counts are
// identical across spatial patterns for the same seed.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  return std::mt19937_64(splitmix64(seed * 0x100000001b3ULL + tag));
}

inline double site_distance(const AoiSite& a, const AoiSite& b) {
  const double d = std::hypot(a.x - b.x, a.y - b.y);
  return std::max(d, 200.0);
}

}  // namespace detail

/// Deterministic AOI layout: a quarter of the sites form a central cluster,
/// the rest sit on an outer ring.
inline std::vector<AoiSite> layout_sites(const WorldConfig& cfg) {
  auto rng = detail::stream(cfg.seed, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = cfg.n_aoi;
  const std::size_t n_central = std::max<std::size_t>(1, n / 4);
  const double R = cfg.district_radius;
  std::vector<AoiSite> sites(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = sites[i];
    s.central = i < n_central;
    double r, theta;
    if (s.central) {
      r = R * 0.3 * std::sqrt(u(rng));
      theta = 2.0 * std::numbers::pi * u(rng);
      s.prep_time = 180.0 + 220.0 * u(rng);
    } else {
      const double k = static_cast<double>(i - n_central);
      const double ring = static_cast<double>(n - n_central);
      r = R * (0.65 + 0.35 * u(rng));
      theta = 2.0 * std::numbers::pi * (k + 0.3 * u(rng)) / ring;
      s.prep_time = 360.0 + 420.0 * u(rng);
    }
    s.x = r * std::cos(theta);
    s.y = r * std::sin(theta);
    s.difficulty = 0.5 * u(rng);
  }
  return sites;
}

/// Routed distance: straight line (at least 200 m) stretched by the
/// destination's last-mile difficulty.
inline double route_distance(const std::vector<AoiSite>& sites, std::uint32_t src, std::uint32_t dst) {
  return detail::site_distance(sites[src], sites[dst]) * (1.0 + sites[dst].difficulty);
}

/// Cumulative (src,dst) pair weights for one fixed pattern.
inline std::vector<double> pattern_weights(const std::vector<AoiSite>& sites, OrderPattern p) {
  const std::size_t n = sites.size();
  double ring_sites = 0.0;
  for (const auto& s : sites) ring_sites += s.central ? 0.0 : 1.0;
  const std::size_t n_central = n - static_cast<std::size_t>(ring_sites);
  ring_sites = std::max(ring_sites, 1.0);
  auto ring_hub = [&](std::size_t i) { return i >= n_central && (i - n_central) % 3 == 0; };
  std::vector<double> w(n * n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t d = 0; d < n; ++d) {
      if (s == d) continue;
      const auto& a = sites[s];
      const auto& b = sites[d];
      double v = 0.0;
      switch (p) {
        case OrderPattern::annular:
          // Ring sites ship along the ring to the nearest ring hub (every third ring site).
          if (!a.central && !b.central && !ring_hub(s) && ring_hub(d)) {
            const double step = 2.0 * std::numbers::pi / ring_sites;
            double sep = std::abs(std::atan2(a.y, a.x) - std::atan2(b.y, b.x));
            if (sep > std::numbers::pi) sep = 2.0 * std::numbers::pi - sep;
            const double z = sep / (0.6 * step);
            v = std::exp(-z * z);
          }
          break;
        case OrderPattern::astroid:
          // Ring sites send to the central hub of their own sector.
          if (!a.central && b.central) {
            double sep = std::abs(std::atan2(a.y, a.x) - std::atan2(b.y, b.x));
            if (sep > std::numbers::pi) sep = 2.0 * std::numbers::pi - sep;
            const double z = sep / 0.35;
            v = std::exp(-z * z);
          }
          break;
        case OrderPattern::uniform:
        case OrderPattern::mixed:
          v = 1.0;
          break;
      }
      w[s * n + d] = v;
    }
  // Every active source gets the same share of orders.
  for (std::size_t s = 0; s < n; ++s) {
    double row = 0.0;
    for (std::size_t d = 0; d < n; ++d) row += w[s * n + d];
    if (row > 0.0)
      for (std::size_t d = 0; d < n; ++d) w[s * n + d] /= row;
  }
  // Degenerate layouts (e.g. n=2 with one ring site) fall back to uniform.
  double total = 0.0;
  for (double v : w) total += v;
  if (total <= 0.0)
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t d = 0; d < n; ++d) w[s * n + d] = s == d ? 0.0 : 1.0;
  for (std::size_t i = 1; i < w.size(); ++i) w[i] += w[i - 1];
  return w;
}

inline History generate_history(const WorldConfig& cfg, std::int64_t total_minutes) {
  cfg.validate();
  if (total_minutes <= static_cast<std::int64_t>(cfg.horizon_minutes))
    throw std::invalid_argument("total_minutes must exceed the label horizon");

  History h;
  h.total_minutes = total_minutes;
  h.sites = layout_sites(cfg);
  const std::size_t n = cfg.n_aoi;

  const std::array<OrderPattern, 3> regimes = {OrderPattern::annular, OrderPattern::astroid,
                                               OrderPattern::uniform};
  std::array<std::vector<double>, 3> cum;
  for (std::size_t r = 0; r < 3; ++r) cum[r] = pattern_weights(h.sites, regimes[r]);

  auto arrivals = detail::stream(cfg.seed, 2);
  auto spatial = detail::stream(cfg.seed, 3);
  auto noise = detail::stream(cfg.seed, 4);
  auto regime_rng = detail::stream(cfg.seed, 5);
  auto env_rng = detail::stream(cfg.seed, 6);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::size_t regime = 0;
  switch (cfg.pattern) {
    case OrderPattern::annular: regime = 0; break;
    case OrderPattern::astroid: regime = 1; break;
    case OrderPattern::uniform: regime = 2; break;
    case OrderPattern::mixed: regime = static_cast<std::size_t>(regime_rng() % 2); break;
  }

  double supply_log = 0.0;
  double rain = 0.0;
  // Open orders keyed by finish second, plus their create minutes for elapsed time.
  std::vector<OrderEvent> open;

  h.minutes.reserve(static_cast<std::size_t>(total_minutes));
  h.minute_offsets.reserve(static_cast<std::size_t>(total_minutes) + 1);
  for (std::int64_t t = 0; t < total_minutes; ++t) {
    if (cfg.pattern == OrderPattern::mixed && u01(regime_rng) < 1.0 / cfg.regime_dwell)
      regime = 1 - regime;  // mixed alternates annular and astroid

    if (cfg.supply_volatility > 0.0) {
      supply_log += cfg.supply_volatility * gauss(env_rng) - 0.02 * supply_log;
      supply_log = std::clamp(supply_log, -0.5, 0.3);
    }
    if (cfg.rain_probability > 0.0) {
      if (rain <= 0.0) {
        if (u01(env_rng) < cfg.rain_probability) rain = 0.3 + 0.7 * u01(env_rng);
      } else if (u01(env_rng) < 0.02) {
        rain = 0.0;
      }
    }

    const double now = static_cast<double>(t) * 60.0;
    std::erase_if(open, [now](const OrderEvent& e) { return e.finish_second() <= now; });

    MinuteState st;
    st.riders = std::max(1.0, std::round(cfg.riders_at(t) * std::exp(supply_log)));
    st.open_orders = static_cast<double>(open.size());
    st.congestion = cfg.congestion_at(t) * (1.0 + cfg.rain_congestion * rain);
    st.rain = rain;
    st.load_ratio = st.open_orders / st.riders;
    double elapsed = 0.0;
    for (const auto& e : open) elapsed += now - static_cast<double>(e.create_minute) * 60.0;
    st.mean_open_elapsed = open.empty() ? 0.0 : elapsed / static_cast<double>(open.size());
    st.regime = regimes[regime];
    h.minutes.push_back(st);
    h.minute_offsets.push_back(h.events.size());

    std::poisson_distribution<int> pois(cfg.rate_at(t));
    const int count = pois(arrivals);
    const auto& cw = cum[regime];
    for (int k = 0; k < count; ++k) {
      const double pick = u01(spatial) * cw.back();
      const auto pos = static_cast<std::size_t>(std::upper_bound(cw.begin(), cw.end(), pick) - cw.begin());
      const auto idx = std::min(pos, cw.size() - 1);
      OrderEvent ev;
      ev.create_minute = t;
      ev.src_aoi = static_cast<std::uint32_t>(idx / n);
      ev.dst_aoi = static_cast<std::uint32_t>(idx % n);
      const double travel = route_distance(h.sites, ev.src_aoi, ev.dst_aoi) / cfg.rider_speed;
      double dt = h.sites[ev.src_aoi].prep_time + travel * st.congestion +
                  cfg.queue_coeff * st.load_ratio;
      if (cfg.noise_sigma > 0.0) dt += cfg.noise_sigma * gauss(noise);
      ev.delivery_time = std::max(dt, 60.0);
      h.events.push_back(ev);
      open.push_back(ev);
    }
  }
  h.minute_offsets.push_back(h.events.size());
  return h;
}

/// Static per-AOI features padded (or cut) to `f_aoi`:
/// prep time, difficulty, daily out/in volume, x, y, radius, central flag.
inline std::vector<double> site_features(const AoiSite& s, double out_per_day, double in_per_day,
                                         std::size_t f_aoi) {
  std::vector<double> f = {s.prep_time, s.difficulty, out_per_day, in_per_day, s.x, s.y,
                           s.radius(), s.central ? 1.0 : 0.0};
  f.resize(f_aoi, 0.0);
  return f;
}

/// Whole-history statistics: mean daily order volume and mean delivery time per edge.
inline FlowGraph build_global_graph(const History& h, std::size_t f_aoi) {
  if (h.events.empty()) throw std::invalid_argument("cannot build a global graph from an empty history");
  const double days = static_cast<double>(h.total_minutes) / static_cast<double>(kMinutesPerDay);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> acc;
  std::map<std::uint32_t, std::pair<double, double>> volume;  // out, in
  for (const auto& e : h.events) {
    auto& [cnt, sum] = acc[{e.src_aoi, e.dst_aoi}];
    cnt += 1.0;
    sum += e.delivery_time;
    volume[e.src_aoi].first += 1.0;
    volume[e.dst_aoi].second += 1.0;
  }
  FlowGraph g;
  g.kind = GraphKind::global;
  for (const auto& [id, vol] : volume)
    g.nodes.push_back({id, site_features(h.sites[id], vol.first / days, vol.second / days, f_aoi)});
  for (const auto& [key, cs] : acc)
    g.edges.push_back({key.first, key.second, cs.first / days, cs.second / cs.first});
  return g;
}

/// Orders created in [minute - window, minute) and still open at `minute`.
/// Edge time attribute is the mean elapsed seconds since creation.
inline FlowGraph build_ongoing_graph(const History& h, std::int64_t minute, const FlowGraph& global,
                                     std::uint32_t window = 30) {
  FlowGraph g;
  g.kind = GraphKind::ongoing;
  const double now = static_cast<double>(minute) * 60.0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> acc;
  for (const auto& e : h.created_in(minute - window, minute)) {
    if (e.finish_second() <= now) continue;
    auto& [cnt, sum] = acc[{e.src_aoi, e.dst_aoi}];
    cnt += 1.0;
    sum += now - static_cast<double>(e.create_minute) * 60.0;
  }
  std::set<std::uint32_t> ids;
  for (const auto& [key, cs] : acc) {
    ids.insert(key.first);
    ids.insert(key.second);
    g.edges.push_back({key.first, key.second, cs.first, cs.second / cs.first});
  }
  const auto gix = global.index();
  for (auto id : ids) g.nodes.push_back({id, global.nodes.at(gix.at(id)).features});
  return g;
}

struct LabelAndTruth {
  double pressure = 0.0;
  std::size_t order_count = 0;
  DenseMatrix a_truth;
};

/// Mean delivery time of orders created in [minute, minute + horizon) and the
/// per-edge (count x mean time) matrix over global node order. Empty when the
/// window has no orders.
inline std::optional<LabelAndTruth> label_and_truth(const History& h, std::int64_t minute,
                                                    const FlowGraph& global,
                                                    std::uint32_t horizon = 5) {
  auto window = h.created_in(minute, minute + horizon);
  if (window.empty()) return std::nullopt;
  LabelAndTruth out;
  out.a_truth = DenseMatrix(global.node_count());
  const auto gix = global.index();
  double sum = 0.0;
  for (const auto& e : window) {
    sum += e.delivery_time;
    out.a_truth(gix.at(e.src_aoi), gix.at(e.dst_aoi)) += e.delivery_time;
  }
  out.order_count = window.size();
  out.pressure = sum / static_cast<double>(window.size());
  return out;
}

/// Supply/environment vector at the start of `minute`, padded or cut to n_f:
/// riders, idle riders, congestion, rain, time-of-day (sin, cos), open orders,
/// orders in the last 5 and 15 minutes, load ratio, mean open elapsed seconds,
/// scheduled arrival intensity.
inline SupplyEnvVector supply_env_features(const WorldConfig& cfg, const History& h,
                                           std::int64_t minute) {
  const auto& st = h.minutes.at(static_cast<std::size_t>(minute));
  const double tod = static_cast<double>(minute % static_cast<std::int64_t>(kMinutesPerDay));
  const double phase = 2.0 * std::numbers::pi * tod / static_cast<double>(kMinutesPerDay);
  SupplyEnvVector f;
  f.values = {st.riders,
              std::max(0.0, st.riders - st.open_orders),
              st.congestion,
              st.rain,
              std::sin(phase),
              std::cos(phase),
              st.open_orders,
              static_cast<double>(h.created_in(minute - 5, minute).size()),
              static_cast<double>(h.created_in(minute - 15, minute).size()),
              st.load_ratio,
              st.mean_open_elapsed,
              cfg.rate_at(minute)};
  f.values.resize(cfg.n_f, 0.0);
  return f;
}

/// Past order-flow graphs over the full global node set, newest first:
/// slice s covers [minute - (s+1)*width, minute - s*width).
inline std::vector<FlowGraph> history_slices(const History& h, std::int64_t minute,
                                             const FlowGraph& global, std::size_t k,
                                             std::uint32_t width = 5) {
  std::vector<FlowGraph> out;
  out.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    const auto end = minute - static_cast<std::int64_t>(s * width);
    FlowGraph g;
    g.kind = GraphKind::global;
    g.nodes = global.nodes;
    std::vector<FlowEdge> raw;
    for (const auto& e : h.created_in(end - width, end))
      raw.push_back({e.src_aoi, e.dst_aoi, 1.0, e.delivery_time});
    g.edges = aggregate_edges(raw);
    out.push_back(std::move(g));
  }
  return out;
}

struct SplitFractions {
  double train = 0.7, val = 0.13, test = 0.17;

  void validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
};

struct DatasetSplits {
  Dataset train, val, test;
  History history;
  std::size_t candidate_minutes = 0;  // minutes considered before dropping empty windows
};

/// Generates a world and turns every minute with a full ongoing window and a
/// non-empty label window into a sample; splits chronologically.
inline DatasetSplits make_dataset(const WorldConfig& cfg, std::int64_t total_minutes,
                                  SplitFractions split) {
  split.validate();
  DatasetSplits out;
  out.history = generate_history(cfg, total_minutes);
  const auto& h = out.history;
  const FlowGraph global = build_global_graph(h, cfg.f_aoi);
  DatasetHeader header{1, cfg.f_aoi, cfg.n_f};

  std::vector<Sample> samples;
  const auto first = static_cast<std::int64_t>(cfg.ongoing_window);
  const auto last = total_minutes - static_cast<std::int64_t>(cfg.horizon_minutes);
  for (std::int64_t t = first; t <= last; ++t) {
    ++out.candidate_minutes;
    auto lt = label_and_truth(h, t, global, cfg.horizon_minutes);
    if (!lt) continue;
    Sample s;
    s.district_id = 0;
    s.minute_index = t;
    s.ongoing = build_ongoing_graph(h, t, global, cfg.ongoing_window);
    s.global_ref = 0;
    s.f = supply_env_features(cfg, h, t);
    s.label_pressure = lt->pressure;
    s.a_truth = std::move(lt->a_truth);
    samples.push_back(std::move(s));
  }

  const auto n = samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(split.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(split.val * static_cast<double>(n))));
  for (auto* ds : {&out.train, &out.val, &out.test}) {
    ds->header = header;
    ds->global = global;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.samples.push_back(std::move(samples[i]));
  }
  return out;
}

}  // namespace aca

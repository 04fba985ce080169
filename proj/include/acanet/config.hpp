#pragma once

// Run configuration: world, model, pretraining and training settings plus
// paths, stored as JSON. Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "simulator.hpp"
#include "train.hpp"
#include "world.hpp"

namespace aca {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t minutes = 3000;
  SplitFractions split;
  WorldConfig world = default_world_config();
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  std::size_t ablation_seeds = 3;
  std::string data_dir = "data";
  std::string out_dir = "out";

  /// Every random stream is derived from `seed`.
  void derive_seeds() {
    world.seed = seed;
    pretrain.seed = detail::splitmix64(seed ^ 0x51ULL);
    train.seed = detail::splitmix64(seed ^ 0x7aULL);
  }

  std::vector<std::uint64_t> model_seeds() const {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < ablation_seeds; ++i) s.push_back(train.seed + i);
    return s;
  }

  void validate() const {
    try {
      world.validate();
      split.validate();
      train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (minutes <= world.ongoing_window + world.horizon_minutes)
      throw ConfigError("minutes must exceed ongoing_window + horizon_minutes");
    if (model.channels == 0 || model.heads == 0 || model.channels % model.heads != 0)
      throw ConfigError("model.channels must be a positive multiple of model.heads");
    if (model.channels < 2) throw ConfigError("model.channels must be at least 2");
    if (model.gnn_hidden == 0 || model.mlp_ratio == 0 || model.ongoing_slots == 0 || model.readout_hidden == 0)
      throw ConfigError("model sizes must be positive");
    if (!(pretrain.learning_rate > 0.0) || pretrain.batch_size == 0 || pretrain.hidden == 0)
      throw ConfigError("pretrain learning_rate, batch_size and hidden must be positive");
    if (ablation_seeds == 0) throw ConfigError("ablation_seeds must be positive");
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& w = c.world;
  const auto& m = c.model;
  const auto& p = c.pretrain;
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"minutes", c.minutes},
      {"split", {c.split.train, c.split.val, c.split.test}},
      {"world",
       {{"n_aoi", w.n_aoi},
        {"pattern", to_string(w.pattern)},
        {"rider_speed", w.rider_speed},
        {"noise_sigma", w.noise_sigma},
        {"horizon_minutes", w.horizon_minutes},
        {"ongoing_window", w.ongoing_window},
        {"district_radius", w.district_radius},
        {"queue_coeff", w.queue_coeff},
        {"regime_dwell", w.regime_dwell},
        {"supply_volatility", w.supply_volatility},
        {"rain_probability", w.rain_probability},
        {"rain_congestion", w.rain_congestion},
        {"f_aoi", w.f_aoi},
        {"n_f", w.n_f},
        {"arrival_rate_profile", w.arrival_rate_profile},
        {"rider_count_profile", w.rider_count_profile},
        {"congestion_profile", w.congestion_profile}}},
      {"model",
       {{"channels", m.channels},
        {"gnn_hidden", m.gnn_hidden},
        {"heads", m.heads},
        {"mlp_ratio", m.mlp_ratio},
        {"ongoing_slots", m.ongoing_slots},
        {"readout_hidden", m.readout_hidden},
        {"direction", m.direction == InterGraphDirection::global_query ? "global_query" : "ongoing_query"}}},
      {"pretrain",
       {{"learning_rate", p.learning_rate},
        {"epochs", p.epochs},
        {"batch_size", p.batch_size},
        {"patience", p.patience},
        {"hidden", p.hidden}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"lambda", t.lambda},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"fine_tune_simulator", t.fine_tune_simulator},
        {"ablation_mask",
         {{"use_ongoing", t.mask.use_ongoing},
          {"use_global", t.mask.use_global},
          {"use_cross_attention", t.mask.use_cross_attention},
          {"use_adaptive_learning", t.mask.use_adaptive_learning}}}}},
      {"ablation_seeds", c.ablation_seeds},
      {"paths", {{"data_dir", c.data_dir}, {"out_dir", c.out_dir}}},
  };
}

/// Missing keys keep their defaults; unknown keys throw ConfigError.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  using detail::reject_unknown;
  RunConfig c;
  reject_unknown(j, {"seed", "minutes", "split", "world", "model", "pretrain", "train", "ablation_seeds", "paths"}, "");
  read_opt(j, "seed", c.seed, "");
  read_opt(j, "minutes", c.minutes, "");
  read_opt(j, "ablation_seeds", c.ablation_seeds, "");
  if (j.contains("split")) {
    std::vector<double> s;
    read_opt(j, "split", s, "");
    if (s.size() != 3) throw ConfigError("split must have three entries");
    c.split = {s[0], s[1], s[2]};
  }
  if (j.contains("world")) {
    const auto& w = j.at("world");
    reject_unknown(w, {"n_aoi", "pattern", "rider_speed", "noise_sigma", "horizon_minutes", "ongoing_window",
                       "district_radius", "queue_coeff", "regime_dwell", "supply_volatility", "rain_probability",
                       "rain_congestion", "f_aoi", "n_f", "arrival_rate_profile", "rider_count_profile",
                       "congestion_profile"},
                   "world");
    auto& o = c.world;
    read_opt(w, "n_aoi", o.n_aoi, "world");
    if (w.contains("pattern")) {
      std::string s;
      read_opt(w, "pattern", s, "world");
      try {
        o.pattern = parse_pattern(s);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    read_opt(w, "rider_speed", o.rider_speed, "world");
    read_opt(w, "noise_sigma", o.noise_sigma, "world");
    read_opt(w, "horizon_minutes", o.horizon_minutes, "world");
    read_opt(w, "ongoing_window", o.ongoing_window, "world");
    read_opt(w, "district_radius", o.district_radius, "world");
    read_opt(w, "queue_coeff", o.queue_coeff, "world");
    read_opt(w, "regime_dwell", o.regime_dwell, "world");
    read_opt(w, "supply_volatility", o.supply_volatility, "world");
    read_opt(w, "rain_probability", o.rain_probability, "world");
    read_opt(w, "rain_congestion", o.rain_congestion, "world");
    read_opt(w, "f_aoi", o.f_aoi, "world");
    read_opt(w, "n_f", o.n_f, "world");
    read_opt(w, "arrival_rate_profile", o.arrival_rate_profile, "world");
    read_opt(w, "rider_count_profile", o.rider_count_profile, "world");
    read_opt(w, "congestion_profile", o.congestion_profile, "world");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"channels", "gnn_hidden", "heads", "mlp_ratio", "ongoing_slots", "readout_hidden", "direction"},
                   "model");
    read_opt(m, "channels", c.model.channels, "model");
    read_opt(m, "gnn_hidden", c.model.gnn_hidden, "model");
    read_opt(m, "heads", c.model.heads, "model");
    read_opt(m, "mlp_ratio", c.model.mlp_ratio, "model");
    read_opt(m, "ongoing_slots", c.model.ongoing_slots, "model");
    read_opt(m, "readout_hidden", c.model.readout_hidden, "model");
    if (m.contains("direction")) {
      std::string s;
      read_opt(m, "direction", s, "model");
      if (s == "global_query") c.model.direction = InterGraphDirection::global_query;
      else if (s == "ongoing_query") c.model.direction = InterGraphDirection::ongoing_query;
      else throw ConfigError("model.direction must be global_query or ongoing_query");
    }
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown(p, {"learning_rate", "epochs", "batch_size", "patience", "hidden"}, "pretrain");
    read_opt(p, "learning_rate", c.pretrain.learning_rate, "pretrain");
    read_opt(p, "epochs", c.pretrain.epochs, "pretrain");
    read_opt(p, "batch_size", c.pretrain.batch_size, "pretrain");
    read_opt(p, "patience", c.pretrain.patience, "pretrain");
    read_opt(p, "hidden", c.pretrain.hidden, "pretrain");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"learning_rate", "lambda", "epochs", "batch_size", "fine_tune_simulator", "ablation_mask"},
                   "train");
    read_opt(t, "learning_rate", c.train.learning_rate, "train");
    read_opt(t, "lambda", c.train.lambda, "train");
    read_opt(t, "epochs", c.train.epochs, "train");
    read_opt(t, "batch_size", c.train.batch_size, "train");
    read_opt(t, "fine_tune_simulator", c.train.fine_tune_simulator, "train");
    if (t.contains("ablation_mask")) {
      const auto& a = t.at("ablation_mask");
      reject_unknown(a, {"use_ongoing", "use_global", "use_cross_attention", "use_adaptive_learning"},
                     "train.ablation_mask");
      read_opt(a, "use_ongoing", c.train.mask.use_ongoing, "train.ablation_mask");
      read_opt(a, "use_global", c.train.mask.use_global, "train.ablation_mask");
      read_opt(a, "use_cross_attention", c.train.mask.use_cross_attention, "train.ablation_mask");
      read_opt(a, "use_adaptive_learning", c.train.mask.use_adaptive_learning, "train.ablation_mask");
    }
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown(p, {"data_dir", "out_dir"}, "paths");
    read_opt(p, "data_dir", c.data_dir, "paths");
    read_opt(p, "out_dir", c.out_dir, "paths");
  }
  c.derive_seeds();
  c.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.derive_seeds();
  return c;
}

}  // namespace aca

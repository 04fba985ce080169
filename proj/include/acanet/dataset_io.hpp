#pragma once

// Dataset files (JSON lines) and the canonical binary model-input encoding
// used for payload-size accounting.
//
// File layout:
//   line 1  {"magic":"ACADATA","version":1,"f_aoi":F,"n_f":N,"n_records":R}
//   line 2  global graph
//   line 3+ one sample per line

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graph.hpp"

namespace aca {

inline constexpr const char* kDatasetMagic = "ACADATA";
inline constexpr std::uint32_t kDatasetVersion = 1;

enum class DatasetErrorKind { bad_magic, version_mismatch, truncated, schema, io };

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

 private:
  DatasetErrorKind kind_;
};

namespace detail {

using nlohmann::json;

inline json graph_to_json(const FlowGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"features", n.features}});
  json edges = json::array();
  for (const auto& e : g.edges)
    edges.push_back(json::array({e.src, e.dst, e.order_count, e.avg_delivery_time}));
  return {{"kind", to_string(g.kind)}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline GraphKind parse_kind(const std::string& s) {
  if (s == "global") return GraphKind::global;
  if (s == "ongoing") return GraphKind::ongoing;
  if (s == "truth_future") return GraphKind::truth_future;
  throw DatasetError(DatasetErrorKind::schema, "unknown graph kind '" + s + "'");
}

inline FlowGraph graph_from_json(const json& j) {
  FlowGraph g;
  g.kind = parse_kind(j.at("kind").get<std::string>());
  for (const auto& n : j.at("nodes"))
    g.nodes.push_back({n.at("id").get<std::uint32_t>(), n.at("features").get<std::vector<double>>()});
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 4)
      throw DatasetError(DatasetErrorKind::schema, "edge must be [src,dst,count,time]");
    g.edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>(), e[2].get<double>(),
                       e[3].get<double>()});
  }
  return g;
}

inline json sample_to_json(const Sample& s) {
  return {{"district", s.district_id},
          {"minute", s.minute_index},
          {"global_ref", s.global_ref},
          {"f", s.f.values},
          {"label", s.label_pressure},
          {"ongoing", graph_to_json(s.ongoing)},
          {"a_truth", {{"n", s.a_truth.n}, {"values", s.a_truth.values}}}};
}

inline Sample sample_from_json(const json& j) {
  Sample s;
  s.district_id = j.at("district").get<std::uint32_t>();
  s.minute_index = j.at("minute").get<std::int64_t>();
  s.global_ref = j.at("global_ref").get<std::uint32_t>();
  s.f.values = j.at("f").get<std::vector<double>>();
  s.label_pressure = j.at("label").get<double>();
  s.ongoing = graph_from_json(j.at("ongoing"));
  const auto& at = j.at("a_truth");
  s.a_truth.n = at.at("n").get<std::size_t>();
  s.a_truth.values = at.at("values").get<std::vector<double>>();
  if (s.a_truth.values.size() != s.a_truth.n * s.a_truth.n)
    throw DatasetError(DatasetErrorKind::schema, "a_truth value count does not match n*n");
  return s;
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  nlohmann::json header = {{"magic", kDatasetMagic},
                           {"version", ds.header.version},
                           {"f_aoi", ds.header.f_aoi},
                           {"n_f", ds.header.n_f},
                           {"n_records", ds.samples.size()}};
  os << header.dump() << '\n';
  // An empty dataset is the header line alone.
  if (ds.samples.empty() && ds.global.empty() && ds.global.edges.empty()) return;
  os << detail::graph_to_json(ds.global).dump() << '\n';
  for (const auto& s : ds.samples) os << detail::sample_to_json(s).dump() << '\n';
}

inline Dataset read_dataset(std::istream& is) {
  using nlohmann::json;
  std::vector<std::string> lines;
  std::string line;
  bool last_terminated = true;
  while (std::getline(is, line)) {
    last_terminated = !is.eof();
    lines.push_back(std::move(line));
  }
  if (lines.empty()) throw DatasetError(DatasetErrorKind::truncated, "empty dataset file");

  auto parse_line = [&](std::size_t i) -> json {
    try {
      return json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      if (i + 1 == lines.size() && !last_terminated)
        throw DatasetError(DatasetErrorKind::truncated,
                           "line " + std::to_string(i + 1) + " is cut short");
      throw DatasetError(DatasetErrorKind::schema,
                         "line " + std::to_string(i + 1) + ": " + e.what());
    }
  };

  Dataset ds;
  std::size_t declared = 0;
  {
    json h = parse_line(0);
    if (!h.is_object() || !h.contains("magic") || h["magic"] != kDatasetMagic)
      throw DatasetError(DatasetErrorKind::bad_magic, "bad magic: not an ACADATA file");
    try {
      ds.header.version = h.at("version").get<std::uint32_t>();
      if (ds.header.version != kDatasetVersion)
        throw DatasetError(DatasetErrorKind::version_mismatch,
                           "dataset version " + std::to_string(ds.header.version) +
                               " is not supported (expected " + std::to_string(kDatasetVersion) + ")");
      ds.header.f_aoi = h.at("f_aoi").get<std::uint32_t>();
      ds.header.n_f = h.at("n_f").get<std::uint32_t>();
      declared = h.at("n_records").get<std::size_t>();
    } catch (const json::exception& e) {
      throw DatasetError(DatasetErrorKind::schema, std::string("header: ") + e.what());
    }
  }
  if (lines.size() == 1 && declared == 0) return ds;
  if (lines.size() < 2) throw DatasetError(DatasetErrorKind::truncated, "missing global graph line");
  if (lines.size() - 2 < declared)
    throw DatasetError(DatasetErrorKind::truncated,
                       "header declares " + std::to_string(declared) + " records, found " +
                           std::to_string(lines.size() - 2));
  if (lines.size() - 2 > declared)
    throw DatasetError(DatasetErrorKind::schema, "more records than the header declares");
  try {
    ds.global = detail::graph_from_json(parse_line(1));
    ds.samples.reserve(declared);
    for (std::size_t i = 2; i < lines.size(); ++i)
      ds.samples.push_back(detail::sample_from_json(parse_line(i)));
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::schema, e.what());
  }
  if (ds.global.kind != GraphKind::global)
    throw DatasetError(DatasetErrorKind::schema, "line 2 must hold the global graph");
  if (auto v = validate_graph(ds.global, ds.header); !v.empty())
    throw DatasetError(DatasetErrorKind::schema, "global graph: " + v.front());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (auto v = validate(ds.samples[i], ds.global, ds.header); !v.empty())
      throw DatasetError(DatasetErrorKind::schema,
                         "record " + std::to_string(i) + ": " + v.front());
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError(DatasetErrorKind::io, "cannot open " + path + " for writing");
  write_dataset(os, ds);
  if (!os) throw DatasetError(DatasetErrorKind::io, "write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError(DatasetErrorKind::io, "cannot open " + path);
  return read_dataset(is);
}

// ---------------------------------------------------------------------------
// Canonical binary encoding: little-endian, u32 counts/ids, f64 reals,
// fields in declaration order, no padding.
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little, "encoder assumes a little-endian host");

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(&v, sizeof v); }
  void u64(std::uint64_t v) { put(&v, sizeof v); }
  void f64(double v) { put(&v, sizeof v); }
  void bytes(std::string_view s) { put(s.data(), s.size()); }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

inline void encode_graph(ByteWriter& w, const FlowGraph& g) {
  w.u32(static_cast<std::uint32_t>(g.nodes.size()));
  for (const auto& n : g.nodes) {
    w.u32(n.id);
    for (double v : n.features) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(g.edges.size()));
  for (const auto& e : g.edges) {
    w.u32(e.src);
    w.u32(e.dst);
    w.f64(e.order_count);
    w.f64(e.avg_delivery_time);
  }
}

/// Feature-vector block preceding every graph payload.
inline void encode_input_header(ByteWriter& w, const Sample& s, std::uint32_t f_aoi) {
  w.u32(f_aoi);
  w.u32(static_cast<std::uint32_t>(s.f.values.size()));
  for (double v : s.f.values) w.f64(v);
}

struct Representation {
  enum class Kind { aca_two_graph, sequence_slices };
  Kind kind = Kind::aca_two_graph;
  std::size_t slices = 0;

  static Representation aca() { return {Kind::aca_two_graph, 0}; }
  static Representation sequence(std::size_t k) { return {Kind::sequence_slices, k}; }

  /// "aca_two_graph" or "sequence_<k>_slices".
  static Representation parse(const std::string& tag) {
    if (tag == "aca_two_graph") return aca();
    const std::string pre = "sequence_", post = "_slices";
    if (tag.size() > pre.size() + post.size() && tag.starts_with(pre) && tag.ends_with(post)) {
      auto mid = tag.substr(pre.size(), tag.size() - pre.size() - post.size());
      if (!mid.empty() && mid.find_first_not_of("0123456789") == std::string::npos) {
        auto k = std::stoul(mid);
        if (k > 0) return sequence(k);
      }
    }
    throw std::invalid_argument("unknown representation tag '" + tag + "'");
  }

  std::string tag() const {
    return kind == Kind::aca_two_graph ? "aca_two_graph"
                                       : "sequence_" + std::to_string(slices) + "_slices";
  }
};

/// Model-input payload. The sequence form needs the past slice graphs.
inline std::vector<std::uint8_t> encode_model_input(const Sample& s, const FlowGraph& global,
                                                    std::uint32_t f_aoi, Representation rep,
                                                    std::span<const FlowGraph> slices = {}) {
  ByteWriter w;
  if (rep.kind == Representation::Kind::aca_two_graph) {
    encode_input_header(w, s, f_aoi);
    encode_graph(w, s.ongoing);
    encode_graph(w, global);
  } else {
    if (slices.size() != rep.slices)
      throw std::invalid_argument("sequence representation needs " + std::to_string(rep.slices) +
                                  " slices, got " + std::to_string(slices.size()));
    for (const auto& g : slices) {
      encode_input_header(w, s, f_aoi);
      encode_graph(w, g);
    }
  }
  return w.take();
}

inline std::size_t input_bytes(const Sample& s, const FlowGraph& global, std::uint32_t f_aoi,
                               Representation rep, std::span<const FlowGraph> slices = {}) {
  return encode_model_input(s, global, f_aoi, rep, slices).size();
}

}  // namespace aca

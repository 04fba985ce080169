#pragma once

// Binary checkpoints.
//
//   "ACANET1" | u32 version | u32 block count
//   per block: u32 name length, name, u32 rank, u32 dims..., f64 values
//   u32 config length, config JSON
//   u64 FNV-1a of every preceding byte
//
// All integers and reals are little-endian.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset_io.hpp"
#include "model.hpp"
#include "normalization.hpp"
#include "params.hpp"
#include "simulator.hpp"

namespace aca {

inline constexpr char kCheckpointMagic[] = "ACANET1";
inline constexpr std::size_t kCheckpointMagicLen = 7;
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { io, bad_magic, version_mismatch, truncated, checksum, missing_block, shape };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct TensorBlock {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;
  bool operator==(const TensorBlock&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<TensorBlock> blocks;
  std::string config;  // JSON snapshot of the run configuration

  const TensorBlock* find(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.name == name) return &b;
    return nullptr;
  }

  const TensorBlock& at(const std::string& name) const {
    if (const auto* b = find(name)) return *b;
    throw CheckpointError(CheckpointErrorKind::missing_block, "checkpoint has no block '" + name + "'");
  }

  void put(std::string name, std::vector<std::uint32_t> shape, std::vector<double> values) {
    blocks.push_back({std::move(name), std::move(shape), std::move(values)});
  }

  void put_tensor(const std::string& name, const Tensor& t) {
    std::vector<std::uint32_t> shape(t.shape().begin(), t.shape().end());
    put(name, std::move(shape), {t.values().begin(), t.values().end()});
  }

  bool operator==(const Checkpoint&) const = default;
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes({kCheckpointMagic, kCheckpointMagicLen});
  w.u32(c.version);
  w.u32(static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& b : c.blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    std::size_t n = 1;
    for (auto d : b.shape) {
      w.u32(d);
      n *= d;
    }
    if (n != b.values.size())
      throw CheckpointError(CheckpointErrorKind::shape, "block '" + b.name + "' value count does not match its shape");
    for (double v : b.values) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(c.config.size()));
  w.bytes(c.config);
  auto bytes = w.take();
  const auto sum = fnv1a64(bytes);
  ByteWriter tail;
  tail.u64(sum);
  bytes.insert(bytes.end(), tail.buffer().begin(), tail.buffer().end());
  return bytes;
}

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  template <class T>
  T read() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint is truncated");
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagicLen ||
      std::memcmp(bytes.data(), kCheckpointMagic, kCheckpointMagicLen) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not an ACANET1 checkpoint");
  if (bytes.size() < kCheckpointMagicLen + 8)
    throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint is truncated");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored)
    throw CheckpointError(CheckpointErrorKind::checksum, "checkpoint checksum mismatch");

  detail::ByteReader r(body.subspan(kCheckpointMagicLen));
  Checkpoint c;
  c.version = r.read<std::uint32_t>();
  if (c.version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint version " + std::to_string(c.version) + " is not supported");
  const auto count = r.read<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlock b;
    b.name = r.str(r.read<std::uint32_t>());
    const auto rank = r.read<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      b.shape.push_back(r.read<std::uint32_t>());
      n *= b.shape.back();
    }
    if (n * sizeof(double) > r.remaining())
      throw CheckpointError(CheckpointErrorKind::truncated, "block '" + b.name + "' runs past the end");
    b.values.resize(n);
    for (auto& v : b.values) v = r.read<double>();
    c.blocks.push_back(std::move(b));
  }
  c.config = r.str(r.read<std::uint32_t>());
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::truncated, "trailing bytes in checkpoint");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError(CheckpointErrorKind::io, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <class Owner>
void store_params(Checkpoint& c, Owner& owner) {
  owner.for_each_param([&](const std::string& name, Tensor& t) { c.put_tensor(name, t); });
}

/// Copies stored values into an already-shaped owner; every parameter must be present.
template <class Owner>
void restore_params(const Checkpoint& c, Owner& owner) {
  owner.for_each_param([&](const std::string& name, Tensor& t) {
    const auto& b = c.at(name);
    std::vector<std::size_t> shape(b.shape.begin(), b.shape.end());
    if (shape != t.shape())
      throw CheckpointError(CheckpointErrorKind::shape, "block '" + name + "' has shape " + shape_str(shape) +
                                                            ", expected " + shape_str(t.shape()));
    std::copy(b.values.begin(), b.values.end(), t.mutable_values().begin());
  });
}

inline void store_sim(Checkpoint& c, SimParams& sim) {
  store_params(c, sim);
  c.put_tensor("sim.output_scale", sim.output_scale);
}

inline void restore_sim(const Checkpoint& c, SimParams& sim) {
  restore_params(c, sim);
  sim.output_scale = Tensor({1}, {c.at("sim.output_scale").values.at(0)});
}

inline void store_stats(Checkpoint& c, const NormalizationStats& s) {
  auto u32 = [](std::size_t n) { return static_cast<std::uint32_t>(n); };
  auto zs = [&](const std::string& name, const ZScore& z) {
    c.put(name + ".mean", {u32(z.mean.size())}, z.mean);
    c.put(name + ".std", {u32(z.stddev.size())}, z.stddev);
  };
  auto mm = [&](const std::string& name, const MinMax& m) { c.put(name, {2}, {m.lo, m.hi}); };
  zs("norm.node", s.node);
  zs("norm.supply", s.supply);
  mm("norm.global_count", s.global_count);
  mm("norm.global_time", s.global_time);
  mm("norm.ongoing_count", s.ongoing_count);
  mm("norm.ongoing_time", s.ongoing_time);
  c.put("norm.label", {2}, {s.label_mean, s.label_std});
}

inline NormalizationStats restore_stats(const Checkpoint& c) {
  NormalizationStats s;
  auto zs = [&](const std::string& name, ZScore& z) {
    z.mean = c.at(name + ".mean").values;
    z.stddev = c.at(name + ".std").values;
  };
  auto mm = [&](const std::string& name, MinMax& m) {
    const auto& v = c.at(name).values;
    if (v.size() != 2) throw CheckpointError(CheckpointErrorKind::shape, name + " must hold two values");
    m.lo = v[0];
    m.hi = v[1];
  };
  zs("norm.node", s.node);
  zs("norm.supply", s.supply);
  mm("norm.global_count", s.global_count);
  mm("norm.global_time", s.global_time);
  mm("norm.ongoing_count", s.ongoing_count);
  mm("norm.ongoing_time", s.ongoing_time);
  const auto& l = c.at("norm.label").values;
  if (l.size() != 2) throw CheckpointError(CheckpointErrorKind::shape, "norm.label must hold two values");
  s.label_mean = l[0];
  s.label_std = l[1];
  return s;
}

inline void store_model(Checkpoint& c, AcaNetParams& p) {
  store_params(c, p);
  c.put("model.label_scale", {1}, {p.label_scale});
}

inline void restore_model(const Checkpoint& c, AcaNetParams& p) {
  restore_params(c, p);
  p.label_scale = c.at("model.label_scale").values.at(0);
}

}  // namespace aca

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/network.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/run_config.hpp"

namespace mscmt {

// Checkpoint file layout (little-endian, FNV-1a64 checksum of everything
// before it as the trailer):
//   "MSCMTCKP" | u32 version | u64 config fingerprint | u32 epoch
//   | u32 len + config text | u32 len + RNG state text
//   | u32 param count | per param: u32 len + name, u32 n, f32 values[n],
//     f32 momentum[n]
//   | u64 checksum

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointParam {
  std::string name;
  std::vector<float> values;
  std::vector<float> momentum;
};

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t fingerprint = 0;
  uint32_t epoch = 0;
  std::string config_text;
  std::string rng_state;
  std::vector<CheckpointParam> params;
};

namespace detail {

inline void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

struct ByteReader {
  const std::string& data;
  size_t pos = 0;
  const std::string context;

  void need(size_t n) const {
    if (pos + n > data.size())
      throw DataError("corrupt checkpoint " + context + ": truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string b = "MSCMTCKP";
  detail::put_u32(b, ckpt.version);
  detail::put_u64(b, ckpt.fingerprint);
  detail::put_u32(b, ckpt.epoch);
  detail::put_u32(b, static_cast<uint32_t>(ckpt.config_text.size()));
  b += ckpt.config_text;
  detail::put_u32(b, static_cast<uint32_t>(ckpt.rng_state.size()));
  b += ckpt.rng_state;
  detail::put_u32(b, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    detail::put_u32(b, static_cast<uint32_t>(p.name.size()));
    b += p.name;
    detail::put_u32(b, static_cast<uint32_t>(p.values.size()));
    for (float v : p.values) detail::put_f32(b, v);
    for (float v : p.momentum) detail::put_f32(b, v);
  }
  detail::put_u64(b, fnv1a64(b));
  return b;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string ctx = path.filename().string();
  if (data.size() < 16 || data.compare(0, 8, "MSCMTCKP") != 0)
    throw DataError(ctx + " is not a checkpoint file");
  const std::string body = data.substr(0, data.size() - 8);
  detail::ByteReader tail{data, data.size() - 8, ctx};
  if (tail.u64() != fnv1a64(body))
    throw DataError("corrupt checkpoint " + ctx + ": checksum mismatch");

  detail::ByteReader r{body, 8, ctx};
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version) +
                    " in " + ctx + " (expected " + std::to_string(kCheckpointVersion) + ")");
  ckpt.fingerprint = r.u64();
  ckpt.epoch = r.u32();
  ckpt.config_text = r.bytes(r.u32());
  ckpt.rng_state = r.bytes(r.u32());
  const uint32_t count = r.u32();
  ckpt.params.resize(count);
  for (auto& p : ckpt.params) {
    p.name = r.bytes(r.u32());
    const uint32_t n = r.u32();
    p.values.resize(n);
    for (auto& v : p.values) v = r.f32();
    p.momentum.resize(n);
    for (auto& v : p.momentum) v = r.f32();
  }
  if (r.pos != body.size())
    throw DataError("corrupt checkpoint " + ctx + ": trailing bytes");
  return ckpt;
}

inline Checkpoint make_checkpoint(const Network<float>& net, const RunConfig& cfg,
                                  int epoch, const Rng& rng) {
  Checkpoint ckpt;
  ckpt.fingerprint = fingerprint(cfg);
  ckpt.epoch = static_cast<uint32_t>(epoch);
  ckpt.config_text = serialize(cfg);
  ckpt.rng_state = rng.serialize();
  for (const auto& p : net.params.all())
    ckpt.params.push_back({p->name, p->values(), p->momentum});
  return ckpt;
}

// Refuses fingerprint mismatches; the network must have been built from the
// same architecture config.
inline Rng restore_network(const Checkpoint& ckpt, const RunConfig& cfg,
                           Network<float>& net) {
  if (ckpt.fingerprint != fingerprint(cfg))
    throw UsageError("checkpoint fingerprint " + std::to_string(ckpt.fingerprint) +
                     " does not match this run's config (" +
                     std::to_string(fingerprint(cfg)) + ")");
  if (ckpt.params.size() != net.params.size())
    throw DataError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                    " parameters, network has " + std::to_string(net.params.size()));
  for (const auto& cp : ckpt.params) {
    auto p = net.params.at(cp.name);
    if (cp.values.size() != p->values().size())
      throw DataError("checkpoint parameter " + cp.name + " has " +
                      std::to_string(cp.values.size()) + " values, network expects " +
                      std::to_string(p->values().size()));
    p->values() = cp.values;
    p->momentum = cp.momentum;
  }
  Rng rng(0);
  rng.deserialize(ckpt.rng_state);
  return rng;
}

}  // namespace mscmt

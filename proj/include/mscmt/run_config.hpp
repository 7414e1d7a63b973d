#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/losses.hpp"
#include "mscmt/net_config.hpp"
#include "mscmt/preprocess.hpp"

namespace mscmt {

// All stage parameters of a pipeline run, serialized as flat key=value text.
struct RunConfig {
  int epochs = 150;
  double lr = 0.001;
  double momentum = 0.9;
  int batch_size = 4;
  uint64_t seed = 1;
  int fold = 0;
  NetworkConfig net;
  LossWeights loss;
  WeightGrowth weight_mode = WeightGrowth::decay;
  PreprocessParams pre;
  int crop_half = 32;
  bool crop_clamp = true;       // clamp the crop window inside the image vs drop
  bool fallback_center = true;  // empty region prediction: center crop vs drop
};

inline void validate(const RunConfig& cfg) {
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(cfg.lr > 0)) throw UsageError("lr must be positive");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw UsageError("momentum must be in [0,1)");
  if (cfg.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (cfg.fold < 0) throw UsageError("fold must be >= 0");
  if (cfg.crop_half < 8) throw UsageError("crop_half must be >= 8");
  if (cfg.crop_half % 8 != 0)
    throw UsageError("crop_half must be a multiple of 8 so crops divide by 16");
  validate(cfg.net);
  validate(cfg.loss);
  if (cfg.pre.median_window < 1 || cfg.pre.median_window % 2 == 0)
    throw UsageError("median_window must be odd and positive");
  if (cfg.pre.tile_rows < 1 || cfg.pre.tile_cols < 1)
    throw UsageError("tile counts must be positive");
  if (cfg.pre.bins < 2) throw UsageError("bins must be >= 2");
  if (!(cfg.pre.clip_limit >= 1.0)) throw UsageError("clip_limit must be >= 1");
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing text");
    return d;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": bad number '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing text");
    return i;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": bad integer '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "0" || v == "false") return false;
  if (v == "1" || v == "true") return true;
  throw UsageError("config key " + key + ": bad flag '" + v + "' (use 0/1)");
}

}  // namespace detail

// Canonical text form: sorted key=value lines. Parsing this text back yields
// an identical config, and the fingerprint is the FNV-1a64 hash of this text
// with the epochs line removed, so resumed runs that only extend the epoch
// budget still match their checkpoints.
inline std::string serialize(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["lr"] = detail::fmt_double(cfg.lr);
  kv["momentum"] = detail::fmt_double(cfg.momentum);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["seed"] = std::to_string(cfg.seed);
  kv["fold"] = std::to_string(cfg.fold);
  kv["input_size"] = std::to_string(cfg.net.input_size);
  kv["base_channels"] = std::to_string(cfg.net.base_channels[0]) + "," +
                        std::to_string(cfg.net.base_channels[1]) + "," +
                        std::to_string(cfg.net.base_channels[2]) + "," +
                        std::to_string(cfg.net.base_channels[3]);
  kv["multiscale"] = cfg.net.multiscale ? "1" : "0";
  kv["cascade"] = to_string(cfg.net.cascade);
  kv["multitask"] = cfg.net.multitask ? "1" : "0";
  kv["aggregation"] = cfg.net.aggregation ? "1" : "0";
  kv["fc_hidden"] = std::to_string(cfg.net.fc_hidden);
  kv["num_classes"] = std::to_string(cfg.net.num_classes);
  kv["alpha_seg"] = detail::fmt_double(cfg.loss.alpha_seg);
  kv["alpha_cls"] = detail::fmt_double(cfg.loss.alpha_cls);
  kv["omega0"] = detail::fmt_double(cfg.loss.omega0);
  kv["sigma"] = detail::fmt_double(cfg.loss.sigma);
  kv["weight_mode"] = cfg.weight_mode == WeightGrowth::decay ? "decay" : "growth";
  kv["median_window"] = std::to_string(cfg.pre.median_window);
  kv["tile_rows"] = std::to_string(cfg.pre.tile_rows);
  kv["tile_cols"] = std::to_string(cfg.pre.tile_cols);
  kv["clip_limit"] = detail::fmt_double(cfg.pre.clip_limit);
  kv["bins"] = std::to_string(cfg.pre.bins);
  kv["crop_half"] = std::to_string(cfg.crop_half);
  kv["crop_mode"] = cfg.crop_clamp ? "clamp" : "drop";
  kv["empty_fallback"] = cfg.fallback_center ? "center" : "drop";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "momentum") cfg.momentum = parse_double(key, value);
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "fold") cfg.fold = static_cast<int>(parse_int(key, value));
  else if (key == "input_size") cfg.net.input_size = static_cast<int>(parse_int(key, value));
  else if (key == "base_channels") {
    std::istringstream ss(value);
    std::string part;
    std::vector<int> ch;
    while (std::getline(ss, part, ',')) ch.push_back(static_cast<int>(parse_int(key, part)));
    if (ch.size() != 4) throw UsageError("base_channels needs 4 comma-separated values");
    for (int i = 0; i < 4; ++i) cfg.net.base_channels[i] = ch[i];
  } else if (key == "multiscale") cfg.net.multiscale = parse_bool(key, value);
  else if (key == "cascade") cfg.net.cascade = cascade_from_string(value);
  else if (key == "multitask") cfg.net.multitask = parse_bool(key, value);
  else if (key == "aggregation") cfg.net.aggregation = parse_bool(key, value);
  else if (key == "fc_hidden") cfg.net.fc_hidden = static_cast<int>(parse_int(key, value));
  else if (key == "num_classes") cfg.net.num_classes = static_cast<int>(parse_int(key, value));
  else if (key == "alpha_seg") cfg.loss.alpha_seg = parse_double(key, value);
  else if (key == "alpha_cls") cfg.loss.alpha_cls = parse_double(key, value);
  else if (key == "omega0") cfg.loss.omega0 = parse_double(key, value);
  else if (key == "sigma") cfg.loss.sigma = parse_double(key, value);
  else if (key == "weight_mode") {
    if (value == "decay") cfg.weight_mode = WeightGrowth::decay;
    else if (value == "growth") cfg.weight_mode = WeightGrowth::growth;
    else throw UsageError("weight_mode must be decay or growth, got '" + value + "'");
  } else if (key == "median_window") cfg.pre.median_window = static_cast<int>(parse_int(key, value));
  else if (key == "tile_rows") cfg.pre.tile_rows = static_cast<int>(parse_int(key, value));
  else if (key == "tile_cols") cfg.pre.tile_cols = static_cast<int>(parse_int(key, value));
  else if (key == "clip_limit") cfg.pre.clip_limit = parse_double(key, value);
  else if (key == "bins") cfg.pre.bins = static_cast<int>(parse_int(key, value));
  else if (key == "crop_half") cfg.crop_half = static_cast<int>(parse_int(key, value));
  else if (key == "crop_mode") {
    if (value == "clamp") cfg.crop_clamp = true;
    else if (value == "drop") cfg.crop_clamp = false;
    else throw UsageError("crop_mode must be clamp or drop, got '" + value + "'");
  } else if (key == "empty_fallback") {
    if (value == "center") cfg.fallback_center = true;
    else if (value == "drop") cfg.fallback_center = false;
    else throw UsageError("empty_fallback must be center or drop, got '" + value + "'");
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, bool> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (seen[key]) throw UsageError("duplicate config key '" + key + "'");
    seen[key] = true;
    apply_config_line(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Hash of the canonical text without the epochs line: extending the epoch
// budget keeps a run compatible with its checkpoints, anything else does not.
inline uint64_t fingerprint(const RunConfig& cfg) {
  std::istringstream in(serialize(cfg));
  std::string line, kept;
  while (std::getline(in, line))
    if (line.rfind("epochs=", 0) != 0) kept += line + "\n";
  return fnv1a64(kept);
}

inline std::string fingerprint_hex(const RunConfig& cfg) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint(cfg)));
  return buf;
}

}  // namespace mscmt

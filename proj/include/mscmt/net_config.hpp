#pragma once

#include <array>
#include <string>

#include "mscmt/errors.hpp"

namespace mscmt {

// How much of the preliminary probability map the main network consumes.
//   none:   the map input is ignored entirely.
//   common: the map is concatenated onto the input image only.
//   full:   additionally, the map is downscaled and concatenated onto every
//           decoder output before the next decoder block, and at full
//           resolution before the output head.
enum class CascadeLevel { none, common, full };

inline const char* to_string(CascadeLevel lv) {
  switch (lv) {
    case CascadeLevel::none: return "none";
    case CascadeLevel::common: return "common";
    case CascadeLevel::full: return "full";
  }
  return "?";
}

inline CascadeLevel cascade_from_string(const std::string& s) {
  if (s == "none") return CascadeLevel::none;
  if (s == "common") return CascadeLevel::common;
  if (s == "full") return CascadeLevel::full;
  throw UsageError("cascade level must be none, common or full, got '" + s + "'");
}

struct NetworkConfig {
  int input_size = 128;                       // square inputs, divisible by 16
  std::array<int, 4> base_channels{8, 16, 32, 64};
  bool multiscale = false;                    // inject downscaled input at encoder outputs 1..3
  CascadeLevel cascade = CascadeLevel::none;
  bool multitask = false;                     // add the classification head
  bool aggregation = false;                   // feed pooled encoder outputs to the head
  int fc_hidden = 64;
  int num_classes = 3;
};

inline void validate(const NetworkConfig& cfg) {
  if (cfg.input_size < 16 || cfg.input_size % 16 != 0)
    throw UsageError("input_size must be a positive multiple of 16, got " +
                     std::to_string(cfg.input_size));
  for (int c : cfg.base_channels)
    if (c < 1) throw UsageError("base_channels entries must be positive");
  if (cfg.fc_hidden < 1) throw UsageError("fc_hidden must be positive");
  if (cfg.num_classes < 2) throw UsageError("num_classes must be at least 2");
  if (cfg.aggregation && !cfg.multitask)
    throw UsageError("aggregation requires multitask: there is no classification head to feed");
}

}  // namespace mscmt

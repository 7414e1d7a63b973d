#pragma once

#include "mscmt/filters.hpp"
#include "mscmt/sample.hpp"

namespace mscmt {

struct PreprocessParams {
  int median_window = 5;
  int tile_rows = 8;
  int tile_cols = 8;
  double clip_limit = 2.0;
  int bins = 256;
};

// Image enhancement stage: median filtering against impulse noise, then
// contrast-limited adaptive histogram equalization. The mask is untouched.
inline Sample preprocess_sample(const Sample& s, const PreprocessParams& p = {}) {
  validate_sample(s);
  Sample out = s;
  out.image = clahe(median_filter(s.image, p.median_window), p.tile_rows, p.tile_cols,
                    p.clip_limit, p.bins);
  return out;
}

}  // namespace mscmt

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"

namespace mscmt {

// Median over k x k neighborhoods with replicate padding at the borders.
inline Image median_filter(const Image& img, int k = 5) {
  if (k % 2 == 0) throw UsageError("median_filter: window must be odd");
  if (k < 1 || k > std::min(img.height, img.width))
    throw UsageError("median_filter: window exceeds image extents");
  const int h = k / 2;
  Image out(img.height, img.width);
  std::vector<float> window(static_cast<size_t>(k) * k);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      size_t n = 0;
      for (int dr = -h; dr <= h; ++dr) {
        int rr = std::clamp(r + dr, 0, img.height - 1);
        for (int dc = -h; dc <= h; ++dc) {
          int cc = std::clamp(c + dc, 0, img.width - 1);
          window[n++] = img.at(rr, cc);
        }
      }
      auto mid = window.begin() + n / 2;
      std::nth_element(window.begin(), mid, window.begin() + n);
      out.at(r, c) = *mid;
    }
  }
  return out;
}

// Contrast-limited adaptive histogram equalization. Per-tile histograms are
// clipped at clip_limit * tile_pixels / bins with the excess spread uniformly,
// the tile mapping is cdf[b] / tile_pixels, and pixels blend the four
// surrounding tile mappings bilinearly (clamped outside the tile-center grid).
// clip_limit = infinity disables clipping; with a single tile that is plain
// histogram equalization.
inline Image clahe(const Image& img, int tile_rows = 8, int tile_cols = 8,
                   double clip_limit = 2.0, int bins = 256) {
  if (tile_rows < 1 || tile_cols < 1) throw UsageError("clahe: tile grid must be >= 1x1");
  if (clip_limit < 1.0) throw UsageError("clahe: clip limit must be >= 1");
  if (bins < 2) throw UsageError("clahe: need at least 2 bins");
  if (img.height < tile_rows || img.width < tile_cols)
    throw UsageError("clahe: more tiles than pixel rows or columns");

  const int H = img.height, W = img.width;
  auto bin_of = [&](float v) {
    int b = static_cast<int>(v * bins);
    return std::clamp(b, 0, bins - 1);
  };

  std::vector<int> rb(tile_rows + 1), cb(tile_cols + 1);
  for (int i = 0; i <= tile_rows; ++i) rb[i] = static_cast<int>(static_cast<long>(i) * H / tile_rows);
  for (int j = 0; j <= tile_cols; ++j) cb[j] = static_cast<int>(static_cast<long>(j) * W / tile_cols);

  std::vector<std::vector<double>> maps(static_cast<size_t>(tile_rows) * tile_cols);
  for (int ti = 0; ti < tile_rows; ++ti) {
    for (int tj = 0; tj < tile_cols; ++tj) {
      std::vector<double> hist(bins, 0.0);
      const double tile_pixels =
          static_cast<double>(rb[ti + 1] - rb[ti]) * (cb[tj + 1] - cb[tj]);
      for (int r = rb[ti]; r < rb[ti + 1]; ++r)
        for (int c = cb[tj]; c < cb[tj + 1]; ++c) hist[bin_of(img.at(r, c))] += 1.0;
      if (std::isfinite(clip_limit)) {
        const double clip = clip_limit * tile_pixels / bins;
        double excess = 0.0;
        for (double& hv : hist)
          if (hv > clip) {
            excess += hv - clip;
            hv = clip;
          }
        const double share = excess / bins;
        for (double& hv : hist) hv += share;
      }
      auto& map = maps[static_cast<size_t>(ti) * tile_cols + tj];
      map.resize(bins);
      double cdf = 0.0;
      for (int b = 0; b < bins; ++b) {
        cdf += hist[b];
        map[b] = cdf / tile_pixels;
      }
    }
  }

  std::vector<double> cy(tile_rows), cx(tile_cols);
  for (int i = 0; i < tile_rows; ++i) cy[i] = (rb[i] + rb[i + 1] - 1) / 2.0;
  for (int j = 0; j < tile_cols; ++j) cx[j] = (cb[j] + cb[j + 1] - 1) / 2.0;

  auto bracket = [](const std::vector<double>& centers, double pos, int& lo, int& hi,
                    double& w) {
    const int n = static_cast<int>(centers.size());
    if (pos <= centers.front() || n == 1) {
      lo = hi = 0;
      w = 0.0;
      return;
    }
    if (pos >= centers.back()) {
      lo = hi = n - 1;
      w = 0.0;
      return;
    }
    lo = static_cast<int>(std::upper_bound(centers.begin(), centers.end(), pos) -
                          centers.begin()) - 1;
    hi = lo + 1;
    w = (pos - centers[lo]) / (centers[hi] - centers[lo]);
  };

  Image out(H, W);
  for (int r = 0; r < H; ++r) {
    int i0, i1;
    double wy;
    bracket(cy, r, i0, i1, wy);
    for (int c = 0; c < W; ++c) {
      int j0, j1;
      double wx;
      bracket(cx, c, j0, j1, wx);
      const int b = bin_of(img.at(r, c));
      const double v =
          (1 - wy) * ((1 - wx) * maps[static_cast<size_t>(i0) * tile_cols + j0][b] +
                      wx * maps[static_cast<size_t>(i0) * tile_cols + j1][b]) +
          wy * ((1 - wx) * maps[static_cast<size_t>(i1) * tile_cols + j0][b] +
                wx * maps[static_cast<size_t>(i1) * tile_cols + j1][b]);
      out.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// Block-average pooling by a power-of-2 factor that divides both extents.
inline Image downscale(const Image& img, int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0)
    throw UsageError("downscale: factor must be a power of 2");
  if (img.height % factor != 0 || img.width % factor != 0)
    throw ShapeError("downscale: factor does not divide image extents");
  if (factor == 1) return img;
  Image out(img.height / factor, img.width / factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < factor; ++dr)
        for (int dc = 0; dc < factor; ++dc) acc += img.at(r * factor + dr, c * factor + dc);
      out.at(r, c) = static_cast<float>(acc * inv);
    }
  }
  return out;
}

}  // namespace mscmt

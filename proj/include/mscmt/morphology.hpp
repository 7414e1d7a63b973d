#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"

namespace mscmt {

// Per-pixel component ids, 0 = background, components numbered 1..count in
// first-encountered raster order.
struct Labeling {
  int height = 0;
  int width = 0;
  std::vector<int> ids;
  int count = 0;

  int at(int r, int c) const { return ids[static_cast<size_t>(r) * width + c]; }
};

inline Labeling connected_components(const Mask& m) {
  Labeling lab;
  lab.height = m.height;
  lab.width = m.width;
  lab.ids.assign(m.size(), 0);
  std::vector<std::pair<int, int>> queue;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c) || lab.ids[static_cast<size_t>(r) * m.width + c]) continue;
      const int id = ++lab.count;
      queue.clear();
      queue.emplace_back(r, c);
      lab.ids[static_cast<size_t>(r) * m.width + c] = id;
      while (!queue.empty()) {
        auto [qr, qc] = queue.back();
        queue.pop_back();
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            int nr = qr + dr, nc = qc + dc;
            if (nr < 0 || nr >= m.height || nc < 0 || nc >= m.width) continue;
            size_t ni = static_cast<size_t>(nr) * m.width + nc;
            if (m.bits[ni] && !lab.ids[ni]) {
              lab.ids[ni] = id;
              queue.emplace_back(nr, nc);
            }
          }
        }
      }
    }
  }
  return lab;
}

// Empty input returns nullopt: the "empty prediction" signal callers handle.
// Size ties keep the smallest id, i.e. the component met first in raster order.
inline std::optional<Mask> largest_component(const Mask& m) {
  Labeling lab = connected_components(m);
  if (lab.count == 0) return std::nullopt;
  std::vector<size_t> sizes(lab.count + 1, 0);
  for (int id : lab.ids)
    if (id) ++sizes[id];
  int best = 1;
  for (int id = 2; id <= lab.count; ++id)
    if (sizes[id] > sizes[best]) best = id;
  Mask out(m.height, m.width);
  for (size_t i = 0; i < lab.ids.size(); ++i) out.bits[i] = lab.ids[i] == best ? 1 : 0;
  return out;
}

namespace detail {

inline int64_t cross(const std::pair<int, int>& o, const std::pair<int, int>& a,
                     const std::pair<int, int>& b) {
  return static_cast<int64_t>(a.first - o.first) * (b.second - o.second) -
         static_cast<int64_t>(a.second - o.second) * (b.first - o.first);
}

// Andrew monotone chain; returns the hull in counterclockwise order with
// collinear interior points removed. Degenerate inputs give 1 or 2 vertices.
inline std::vector<std::pair<int, int>> convex_hull(std::vector<std::pair<int, int>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const size_t n = pts.size();
  if (n <= 2) return pts;
  std::vector<std::pair<int, int>> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const size_t lower = k + 1;
  for (size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline bool on_segment(const std::pair<int, int>& a, const std::pair<int, int>& b,
                       const std::pair<int, int>& p) {
  if (cross(a, b, p) != 0) return false;
  int64_t dot = static_cast<int64_t>(p.first - a.first) * (b.first - a.first) +
                static_cast<int64_t>(p.second - a.second) * (b.second - a.second);
  int64_t len2 = static_cast<int64_t>(b.first - a.first) * (b.first - a.first) +
                 static_cast<int64_t>(b.second - a.second) * (b.second - a.second);
  return dot >= 0 && dot <= len2;
}

inline bool in_hull(const std::vector<std::pair<int, int>>& hull, std::pair<int, int> p) {
  if (hull.empty()) return false;
  if (hull.size() == 1) return hull[0] == p;
  if (hull.size() == 2) return on_segment(hull[0], hull[1], p);
  for (size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
  }
  return true;
}

}  // namespace detail

// Fills the convex hull of all foreground pixel centers; boundary inclusive,
// so the output is always a superset of the input.
inline Mask convex_hull_fill(const Mask& m) {
  std::vector<std::pair<int, int>> pts;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) pts.emplace_back(r, c);
  if (pts.empty()) throw DataError("convex_hull_fill: empty mask");
  auto hull = detail::convex_hull(std::move(pts));
  int r_lo = hull[0].first, r_hi = hull[0].first;
  int c_lo = hull[0].second, c_hi = hull[0].second;
  for (const auto& [r, c] : hull) {
    r_lo = std::min(r_lo, r);
    r_hi = std::max(r_hi, r);
    c_lo = std::min(c_lo, c);
    c_hi = std::max(c_hi, c);
  }
  Mask out(m.height, m.width);
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c)
      if (detail::in_hull(hull, {r, c})) out.at(r, c) = 1;
  return out;
}

inline std::pair<double, double> center_of_gravity(const Mask& m) {
  double sr = 0, sc = 0, n = 0;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) {
        sr += r;
        sc += c;
        n += 1;
      }
  if (n == 0) throw DataError("center_of_gravity: empty mask");
  return {sr / n, sc / n};
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

inline std::pair<int, int> center_of_gravity_pixel(const Mask& m) {
  auto [r, c] = center_of_gravity(m);
  return {round_half_up(r), round_half_up(c)};
}

enum class CropMode { drop, clamp };

// Window [r-h, r+h) x [c-h, c+h). In drop mode a window crossing any border
// yields nullopt; clamp mode slides the window back inside instead.
inline std::optional<BoundingBox> compute_crop_box(std::pair<int, int> center, int half_window,
                                                   int height, int width, CropMode mode) {
  if (half_window < 1) throw UsageError("compute_crop_box: half_window must be >= 1");
  const int side = 2 * half_window;
  BoundingBox box{center.first - half_window, center.first + half_window,
                  center.second - half_window, center.second + half_window};
  if (mode == CropMode::drop) {
    if (box.row_lo < 0 || box.col_lo < 0 || box.row_hi > height || box.col_hi > width)
      return std::nullopt;
    return box;
  }
  if (side > height || side > width)
    throw DataError("compute_crop_box: window larger than image");
  box.row_lo = std::clamp(box.row_lo, 0, height - side);
  box.col_lo = std::clamp(box.col_lo, 0, width - side);
  box.row_hi = box.row_lo + side;
  box.col_hi = box.col_lo + side;
  return box;
}

template <typename Raster>
Raster crop(const Raster& src, const BoundingBox& box) {
  if (box.row_lo < 0 || box.col_lo < 0 || box.row_hi > src.height || box.col_hi > src.width ||
      box.rows() <= 0 || box.cols() <= 0)
    throw ShapeError("crop: box exceeds raster bounds");
  Raster out(box.rows(), box.cols());
  for (int r = 0; r < box.rows(); ++r)
    for (int c = 0; c < box.cols(); ++c) out.at(r, c) = src.at(box.row_lo + r, box.col_lo + c);
  return out;
}

inline std::optional<std::pair<Image, Image>> crop_window(const Image& img, const Image& map,
                                                          std::pair<int, int> center,
                                                          int half_window, CropMode mode) {
  if (img.height != map.height || img.width != map.width)
    throw ShapeError("crop_window: image and map extents differ");
  auto box = compute_crop_box(center, half_window, img.height, img.width, mode);
  if (!box) return std::nullopt;
  return std::make_pair(crop(img, *box), crop(map, *box));
}

namespace detail {

// Placeholder cost for "no site here"; large but finite so the parabola
// intersection arithmetic below never forms inf - inf.
constexpr double kFarAway = 1e20;

// 1-D squared distance transform (lower envelope of parabolas).
inline void dt1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  constexpr double INF = std::numeric_limits<double>::infinity();
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -INF;
  z[1] = INF;
  auto intersect = [&](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
           (2.0 * q - 2.0 * p);
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = INF;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = static_cast<double>(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

}  // namespace detail

// Boundary pixels are foreground pixels with at least one background
// 4-neighbor; off-image neighbors count as background. Exact Euclidean
// distances via the two-pass separable squared transform.
inline DistanceField boundary_distance_map(const Mask& gt) {
  if (gt.empty_mask()) throw DataError("boundary_distance_map: empty mask");
  const int H = gt.height, W = gt.width;

  std::vector<double> g(static_cast<size_t>(H) * W, detail::kFarAway);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!gt.at(r, c)) continue;
      bool boundary = r == 0 || r == H - 1 || c == 0 || c == W - 1 || !gt.at(r - 1, c) ||
                      !gt.at(r + 1, c) || !gt.at(r, c - 1) || !gt.at(r, c + 1);
      if (boundary) g[static_cast<size_t>(r) * W + c] = 0.0;
    }
  }

  std::vector<double> col_f(H), col_d(H);
  for (int c = 0; c < W; ++c) {
    for (int r = 0; r < H; ++r) col_f[r] = g[static_cast<size_t>(r) * W + c];
    detail::dt1d(col_f, col_d);
    for (int r = 0; r < H; ++r) g[static_cast<size_t>(r) * W + c] = col_d[r];
  }
  DistanceField field(H, W);
  std::vector<double> row_f(W), row_d(W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) row_f[c] = g[static_cast<size_t>(r) * W + c];
    detail::dt1d(row_f, row_d);
    for (int c = 0; c < W; ++c) field.at(r, c) = std::sqrt(row_d[c]);
  }
  return field;
}

}  // namespace mscmt

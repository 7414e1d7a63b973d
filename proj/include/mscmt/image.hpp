#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/tensor.hpp"

namespace mscmt {

// Grayscale raster with intensities in [0,1]. Integer 0..255 only at file
// boundaries.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw ShapeError("image extents must be positive");
  }

  float& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
  float at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
  size_t size() const { return pixels.size(); }
};

// Strictly binary raster; 1 = foreground.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), bits(static_cast<size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw ShapeError("mask extents must be positive");
  }

  uint8_t& at(int r, int c) { return bits[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * width + c]; }
  size_t size() const { return bits.size(); }

  size_t count() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  bool empty_mask() const { return count() == 0; }
};

// Half-open pixel rectangle [row_lo,row_hi) x [col_lo,col_hi).
struct BoundingBox {
  int row_lo = 0, row_hi = 0, col_lo = 0, col_hi = 0;
  int rows() const { return row_hi - row_lo; }
  int cols() const { return col_hi - col_lo; }
};

// Per-pixel Euclidean distance to the nearest mask boundary pixel.
struct DistanceField {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  DistanceField() = default;
  DistanceField(int h, int w)
      : height(h), width(w), values(static_cast<size_t>(h) * w, 0.0) {}

  double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
};

template <typename T>
TensorPtr<T> image_to_tensor(const Image& img) {
  auto t = make_tensor<T>({1, img.height, img.width});
  for (size_t i = 0; i < img.pixels.size(); ++i) t->values[i] = static_cast<T>(img.pixels[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  if (t.shape.size() != 3 || t.shape[0] != 1)
    throw ShapeError("tensor_to_image: expected a 1-channel map");
  Image img(t.shape[1], t.shape[2]);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(t.values[i]);
  return img;
}

template <typename T>
TensorPtr<T> mask_to_tensor(const Mask& m) {
  auto t = make_tensor<T>({1, m.height, m.width});
  for (size_t i = 0; i < m.bits.size(); ++i) t->values[i] = static_cast<T>(m.bits[i]);
  return t;
}

// Probability map -> binary mask at the fixed 0.5 threshold.
template <typename T>
Mask binarize(const Tensor<T>& t, T threshold = T(0.5)) {
  if (t.shape.size() != 3 || t.shape[0] != 1)
    throw ShapeError("binarize: expected a 1-channel map");
  Mask m(t.shape[1], t.shape[2]);
  for (size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = t.values[i] > threshold ? 1 : 0;
  return m;
}

inline Mask binarize(const Image& img, float threshold = 0.5f) {
  Mask m(img.height, img.width);
  for (size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.pixels[i] > threshold ? 1 : 0;
  return m;
}

}  // namespace mscmt

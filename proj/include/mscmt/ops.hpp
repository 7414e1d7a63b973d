#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mscmt/tensor.hpp"

namespace mscmt {

namespace detail {

template <typename T>
bool wants_graph(std::initializer_list<const TensorPtr<T>*> ins) {
  if (!grad_recording()) return false;
  for (const auto* t : ins)
    if ((*t)->requires_grad) return true;
  return false;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, weights {O,C,K,K}, input {C,H,W} -> {O,H',W'}
// with H' = floor((H + 2*padding - K) / stride) + 1.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weights,
                    const TensorPtr<T>& bias, int stride, int padding) {
  if (input->shape.size() != 3) throw ShapeError("conv2d: input must be CxHxW");
  if (weights->shape.size() != 4) throw ShapeError("conv2d: weights must be OxCxKxK");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  const int O = weights->shape[0], K = weights->shape[2];
  if (weights->shape[1] != C)
    throw ShapeError("conv2d: weight channels " + std::to_string(weights->shape[1]) +
                     " do not match input channels " + std::to_string(C));
  if (weights->shape[3] != K) throw ShapeError("conv2d: kernel must be square");
  if (bias->shape != std::vector<int>{O}) throw ShapeError("conv2d: bias must be {O}");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (H + 2 * padding < K || W + 2 * padding < K)
    throw ShapeError("conv2d: kernel larger than padded input");
  const int OH = (H + 2 * padding - K) / stride + 1;
  const int OW = (W + 2 * padding - K) / stride + 1;

  auto out = make_tensor<T>({O, OH, OW});
  const T* in = input->values.data();
  const T* wt = weights->values.data();
  const T* bs = bias->values.data();
  T* op = out->values.data();

  for (int oc = 0; oc < O; ++oc) {
    T* oplane = op + static_cast<size_t>(oc) * OH * OW;
    std::fill(oplane, oplane + static_cast<size_t>(OH) * OW, bs[oc]);
    for (int ic = 0; ic < C; ++ic) {
      const T* iplane = in + static_cast<size_t>(ic) * H * W;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          T w = wt[((static_cast<size_t>(oc) * C + ic) * K + ky) * K + kx];
          for (int oy = 0; oy < OH; ++oy) {
            int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= H) continue;
            const T* irow = iplane + static_cast<size_t>(iy) * W;
            T* orow = oplane + static_cast<size_t>(oy) * OW;
            if (stride == 1) {
              int x0 = std::max(0, padding - kx);
              int x1 = std::min(OW, W - kx + padding);
              for (int ox = x0; ox < x1; ++ox) orow[ox] += w * irow[ox + kx - padding];
            } else {
              for (int ox = 0; ox < OW; ++ox) {
                int ix = ox * stride + kx - padding;
                if (ix >= 0 && ix < W) orow[ox] += w * irow[ix];
              }
            }
          }
        }
      }
    }
  }

  if (detail::wants_graph<T>({&input, &weights, &bias})) {
    out->requires_grad = true;
    out->parents = {input, weights, bias};
    Tensor<T>* self = out.get();
    auto x = input;
    auto wts = weights;
    auto b = bias;
    out->backward_fn = [self, x, wts, b, C, H, W, O, K, OH, OW, stride, padding] {
      const T* go = self->grad.data();
      const T* in = x->values.data();
      const T* wt = wts->values.data();
      if (b->requires_grad) {
        T* db = b->grad.data();
        for (int oc = 0; oc < O; ++oc) {
          const T* gplane = go + static_cast<size_t>(oc) * OH * OW;
          T acc = T(0);
          for (int i = 0; i < OH * OW; ++i) acc += gplane[i];
          db[oc] += acc;
        }
      }
      const bool want_dx = x->requires_grad;
      const bool want_dw = wts->requires_grad;
      if (!want_dx && !want_dw) return;
      T* dx = x->grad.data();
      T* dw = wts->grad.data();
      for (int oc = 0; oc < O; ++oc) {
        const T* gplane = go + static_cast<size_t>(oc) * OH * OW;
        for (int ic = 0; ic < C; ++ic) {
          const T* iplane = in + static_cast<size_t>(ic) * H * W;
          T* dxplane = dx + static_cast<size_t>(ic) * H * W;
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              size_t widx = ((static_cast<size_t>(oc) * C + ic) * K + ky) * K + kx;
              T w = wt[widx];
              T dw_acc = T(0);
              for (int oy = 0; oy < OH; ++oy) {
                int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                const T* irow = iplane + static_cast<size_t>(iy) * W;
                T* dxrow = dxplane + static_cast<size_t>(iy) * W;
                const T* grow = gplane + static_cast<size_t>(oy) * OW;
                if (stride == 1) {
                  int x0 = std::max(0, padding - kx);
                  int x1 = std::min(OW, W - kx + padding);
                  if (want_dw)
                    for (int ox = x0; ox < x1; ++ox) dw_acc += grow[ox] * irow[ox + kx - padding];
                  if (want_dx)
                    for (int ox = x0; ox < x1; ++ox) dxrow[ox + kx - padding] += w * grow[ox];
                } else {
                  for (int ox = 0; ox < OW; ++ox) {
                    int ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= W) continue;
                    if (want_dw) dw_acc += grow[ox] * irow[ix];
                    if (want_dx) dxrow[ix] += w * grow[ox];
                  }
                }
              }
              if (want_dw) dw[widx] += dw_acc;
            }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2d: window must divide both extents; window == H == W is the global
// pooling case. Ties route gradient to the first maximum in row-major scan.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> maxpool2d(const TensorPtr<T>& input, int window) {
  if (input->shape.size() != 3) throw ShapeError("maxpool2d: input must be CxHxW");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  if (window < 1 || H % window != 0 || W % window != 0)
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " must divide extents " + detail::shape_str(input->shape));
  const int OH = H / window, OW = W / window;
  auto out = make_tensor<T>({C, OH, OW});
  std::vector<int> argmax(static_cast<size_t>(C) * OH * OW);
  const T* in = input->values.data();
  T* op = out->values.data();
  for (int c = 0; c < C; ++c) {
    const T* iplane = in + static_cast<size_t>(c) * H * W;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        int best = (oy * window) * W + ox * window;
        T best_v = iplane[best];
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            int idx = (oy * window + dy) * W + ox * window + dx;
            if (iplane[idx] > best_v) {
              best_v = iplane[idx];
              best = idx;
            }
          }
        }
        size_t o = (static_cast<size_t>(c) * OH + oy) * OW + ox;
        op[o] = best_v;
        argmax[o] = best;
      }
    }
  }

  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, argmax = std::move(argmax), C, H, W, OH, OW] {
      T* dx = x->grad.data();
      const T* go = self->grad.data();
      for (int c = 0; c < C; ++c) {
        T* dxplane = dx + static_cast<size_t>(c) * H * W;
        for (int i = 0; i < OH * OW; ++i) {
          size_t o = static_cast<size_t>(c) * OH * OW + i;
          dxplane[argmax[o]] += go[o];
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample2x: nearest-neighbor replication {C,H,W} -> {C,2H,2W}.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> upsample2x(const TensorPtr<T>& input) {
  if (input->shape.size() != 3) throw ShapeError("upsample2x: input must be CxHxW");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  auto out = make_tensor<T>({C, 2 * H, 2 * W});
  const T* in = input->values.data();
  T* op = out->values.data();
  for (int c = 0; c < C; ++c) {
    const T* iplane = in + static_cast<size_t>(c) * H * W;
    T* oplane = op + static_cast<size_t>(c) * 4 * H * W;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        T v = iplane[y * W + x];
        T* o00 = oplane + (2 * y) * (2 * W) + 2 * x;
        o00[0] = v;
        o00[1] = v;
        o00[2 * W] = v;
        o00[2 * W + 1] = v;
      }
    }
  }

  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, C, H, W] {
      T* dx = x->grad.data();
      const T* go = self->grad.data();
      for (int c = 0; c < C; ++c) {
        T* dxplane = dx + static_cast<size_t>(c) * H * W;
        const T* gplane = go + static_cast<size_t>(c) * 4 * H * W;
        for (int y = 0; y < H; ++y) {
          for (int x2 = 0; x2 < W; ++x2) {
            const T* g00 = gplane + (2 * y) * (2 * W) + 2 * x2;
            dxplane[y * W + x2] += g00[0] + g00[1] + g00[2 * W] + g00[2 * W + 1];
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// downscale2x_mean: 2x2 block average {C,H,W} -> {C,H/2,W/2}; the adjoint of
// upsample2x up to the 1/4 factor.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> downscale2x_mean(const TensorPtr<T>& input) {
  if (input->shape.size() != 3) throw ShapeError("downscale2x_mean: input must be CxHxW");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  if (H % 2 != 0 || W % 2 != 0) throw ShapeError("downscale2x_mean: extents must be even");
  const int OH = H / 2, OW = W / 2;
  auto out = make_tensor<T>({C, OH, OW});
  const T* in = input->values.data();
  T* op = out->values.data();
  for (int c = 0; c < C; ++c) {
    const T* iplane = in + static_cast<size_t>(c) * H * W;
    T* oplane = op + static_cast<size_t>(c) * OH * OW;
    for (int y = 0; y < OH; ++y) {
      const T* r0 = iplane + static_cast<size_t>(2 * y) * W;
      const T* r1 = r0 + W;
      for (int x = 0; x < OW; ++x)
        oplane[y * OW + x] =
            (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * T(0.25);
    }
  }
  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, C, H, W, OH, OW] {
      T* dx = x->grad.data();
      const T* go = self->grad.data();
      for (int c = 0; c < C; ++c) {
        T* dxplane = dx + static_cast<size_t>(c) * H * W;
        const T* gplane = go + static_cast<size_t>(c) * OH * OW;
        for (int y = 0; y < OH; ++y) {
          T* r0 = dxplane + static_cast<size_t>(2 * y) * W;
          T* r1 = r0 + W;
          for (int x2 = 0; x2 < OW; ++x2) {
            T g = gplane[y * OW + x2] * T(0.25);
            r0[2 * x2] += g;
            r0[2 * x2 + 1] += g;
            r1[2 * x2] += g;
            r1[2 * x2 + 1] += g;
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activations.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& input) {
  auto out = make_tensor<T>(input->shape);
  const size_t n = input->values.size();
  for (size_t i = 0; i < n; ++i) out->values[i] = input->values[i] > T(0) ? input->values[i] : T(0);
  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, n] {
      for (size_t i = 0; i < n; ++i)
        if (x->values[i] > T(0)) x->grad[i] += self->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& input) {
  auto out = make_tensor<T>(input->shape);
  const size_t n = input->values.size();
  for (size_t i = 0; i < n; ++i)
    out->values[i] = T(1) / (T(1) + std::exp(-input->values[i]));
  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, n] {
      for (size_t i = 0; i < n; ++i) {
        T s = self->values[i];
        x->grad[i] += self->grad[i] * s * (T(1) - s);
      }
    };
  }
  return out;
}

// Flat vectors only; components are positive and sum to 1.
template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& input) {
  if (input->shape.size() != 1)
    throw ShapeError("softmax: input must be a flat vector, got " +
                     detail::shape_str(input->shape));
  const int n = input->shape[0];
  auto out = make_tensor<T>(input->shape);
  T m = input->values[0];
  for (int i = 1; i < n; ++i) m = std::max(m, input->values[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    out->values[i] = std::exp(input->values[i] - m);
    sum += out->values[i];
  }
  for (int i = 0; i < n; ++i) out->values[i] /= sum;
  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto x = input;
    out->backward_fn = [self, x, n] {
      T dot = T(0);
      for (int i = 0; i < n; ++i) dot += self->grad[i] * self->values[i];
      for (int i = 0; i < n; ++i)
        x->grad[i] += self->values[i] * (self->grad[i] - dot);
    };
  }
  return out;
}

enum class Activation { relu, sigmoid, softmax };

template <typename T>
TensorPtr<T> activation(Activation kind, const TensorPtr<T>& input) {
  switch (kind) {
    case Activation::relu: return relu(input);
    case Activation::sigmoid: return sigmoid(input);
    case Activation::softmax: return softmax(input);
  }
  throw UsageError("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// concat_channels: {Ca,H,W} + {Cb,H,W} -> {Ca+Cb,H,W}; flat {Na} + {Nb} -> {Na+Nb}.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  TensorPtr<T> out;
  if (a->shape.size() == 3 && b->shape.size() == 3) {
    if (a->shape[1] != b->shape[1] || a->shape[2] != b->shape[2])
      throw ShapeError("concat_channels: spatial extents differ: " +
                       detail::shape_str(a->shape) + " vs " + detail::shape_str(b->shape));
    out = make_tensor<T>({a->shape[0] + b->shape[0], a->shape[1], a->shape[2]});
  } else if (a->shape.size() == 1 && b->shape.size() == 1) {
    out = make_tensor<T>({a->shape[0] + b->shape[0]});
  } else {
    throw ShapeError("concat_channels: ranks must match and be 1 or 3");
  }
  std::copy(a->values.begin(), a->values.end(), out->values.begin());
  std::copy(b->values.begin(), b->values.end(), out->values.begin() + a->values.size());

  if (detail::wants_graph<T>({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Tensor<T>* self = out.get();
    auto pa = a;
    auto pb = b;
    out->backward_fn = [self, pa, pb] {
      size_t na = pa->values.size();
      if (pa->requires_grad)
        for (size_t i = 0; i < na; ++i) pa->grad[i] += self->grad[i];
      if (pb->requires_grad)
        for (size_t i = 0; i < pb->values.size(); ++i) pb->grad[i] += self->grad[na + i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise add / mul, constant scale, full sum.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape)
    throw ShapeError("add: shapes differ: " + detail::shape_str(a->shape) + " vs " +
                     detail::shape_str(b->shape));
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->values.size();
  for (size_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
  if (detail::wants_graph<T>({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Tensor<T>* self = out.get();
    auto pa = a;
    auto pb = b;
    out->backward_fn = [self, pa, pb, n] {
      if (pa->requires_grad)
        for (size_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
      if (pb->requires_grad)
        for (size_t i = 0; i < n; ++i) pb->grad[i] += self->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape)
    throw ShapeError("mul: shapes differ: " + detail::shape_str(a->shape) + " vs " +
                     detail::shape_str(b->shape));
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->values.size();
  for (size_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
  if (detail::wants_graph<T>({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Tensor<T>* self = out.get();
    auto pa = a;
    auto pb = b;
    out->backward_fn = [self, pa, pb, n] {
      if (pa->requires_grad)
        for (size_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i] * pb->values[i];
      if (pb->requires_grad)
        for (size_t i = 0; i < n; ++i) pb->grad[i] += self->grad[i] * pa->values[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& a, T factor) {
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->values.size();
  for (size_t i = 0; i < n; ++i) out->values[i] = factor * a->values[i];
  if (detail::wants_graph<T>({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Tensor<T>* self = out.get();
    auto pa = a;
    out->backward_fn = [self, pa, factor, n] {
      for (size_t i = 0; i < n; ++i) pa->grad[i] += factor * self->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sum_all(const TensorPtr<T>& a) {
  auto out = make_tensor<T>({1});
  T acc = T(0);
  for (T v : a->values) acc += v;
  out->values[0] = acc;
  if (detail::wants_graph<T>({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Tensor<T>* self = out.get();
    auto pa = a;
    out->backward_fn = [self, pa] {
      T g = self->grad[0];
      for (size_t i = 0; i < pa->values.size(); ++i) pa->grad[i] += g;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense: y = Wx + b with x {N}, W {M,N}, b {M}.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> dense(const TensorPtr<T>& input, const TensorPtr<T>& weights,
                   const TensorPtr<T>& bias) {
  if (input->shape.size() != 1) throw ShapeError("dense: input must be flat");
  if (weights->shape.size() != 2) throw ShapeError("dense: weights must be MxN");
  const int N = input->shape[0], M = weights->shape[0];
  if (weights->shape[1] != N)
    throw ShapeError("dense: weight columns " + std::to_string(weights->shape[1]) +
                     " do not match input length " + std::to_string(N));
  if (bias->shape != std::vector<int>{M}) throw ShapeError("dense: bias must be {M}");
  auto out = make_tensor<T>({M});
  const T* x = input->values.data();
  const T* w = weights->values.data();
  for (int m = 0; m < M; ++m) {
    T acc = bias->values[m];
    const T* wrow = w + static_cast<size_t>(m) * N;
    for (int i = 0; i < N; ++i) acc += wrow[i] * x[i];
    out->values[m] = acc;
  }
  if (detail::wants_graph<T>({&input, &weights, &bias})) {
    out->requires_grad = true;
    out->parents = {input, weights, bias};
    Tensor<T>* self = out.get();
    auto px = input;
    auto pw = weights;
    auto pb = bias;
    out->backward_fn = [self, px, pw, pb, M, N] {
      const T* g = self->grad.data();
      if (pb->requires_grad)
        for (int m = 0; m < M; ++m) pb->grad[m] += g[m];
      if (pw->requires_grad) {
        for (int m = 0; m < M; ++m) {
          T* dwrow = pw->grad.data() + static_cast<size_t>(m) * N;
          T gm = g[m];
          for (int i = 0; i < N; ++i) dwrow[i] += gm * px->values[i];
        }
      }
      if (px->requires_grad) {
        for (int m = 0; m < M; ++m) {
          const T* wrow = pw->values.data() + static_cast<size_t>(m) * N;
          T gm = g[m];
          for (int i = 0; i < N; ++i) px->grad[i] += gm * wrow[i];
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross_entropy_from_probs: -log(probs[label]) with a 1e-12 floor before the
// log. Below the floor the forward value is constant, so the gradient is zero
// there; above it d/dp = -1/p.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> cross_entropy_from_probs(const TensorPtr<T>& probs, int label) {
  if (probs->shape.size() != 1) throw ShapeError("cross_entropy_from_probs: probs must be flat");
  if (label < 0 || label >= probs->shape[0])
    throw ShapeError("cross_entropy_from_probs: label " + std::to_string(label) +
                     " outside [0, " + std::to_string(probs->shape[0]) + ")");
  constexpr T floor_v = T(1e-12);
  auto out = make_tensor<T>({1});
  T p = probs->values[label];
  out->values[0] = -std::log(p > floor_v ? p : floor_v);
  if (detail::wants_graph<T>({&probs})) {
    out->requires_grad = true;
    out->parents = {probs};
    Tensor<T>* self = out.get();
    auto pp = probs;
    out->backward_fn = [self, pp, label, floor_v] {
      T p = pp->values[label];
      if (p > floor_v) pp->grad[label] += -self->grad[0] / p;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross_entropy_from_logits: softmax and negative log-likelihood fused into
// one node, L = logsumexp(z) - z[label], backward softmax(z) minus the one-hot
// target. The fused gradient stays informative when the softmax saturates,
// where the two-node form loses it to underflow.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> cross_entropy_from_logits(const TensorPtr<T>& logits, int label) {
  if (logits->shape.size() != 1)
    throw ShapeError("cross_entropy_from_logits: logits must be flat");
  if (label < 0 || label >= logits->shape[0])
    throw ShapeError("cross_entropy_from_logits: label " + std::to_string(label) +
                     " outside [0, " + std::to_string(logits->shape[0]) + ")");
  const size_t n = logits->values.size();
  T zmax = logits->values[0];
  for (size_t i = 1; i < n; ++i) zmax = std::max(zmax, logits->values[i]);
  T sum = T(0);
  for (size_t i = 0; i < n; ++i) sum += std::exp(logits->values[i] - zmax);
  const T lse = zmax + std::log(sum);
  auto out = make_tensor<T>({1});
  out->values[0] = lse - logits->values[label];
  if (detail::wants_graph<T>({&logits})) {
    out->requires_grad = true;
    out->parents = {logits};
    Tensor<T>* self = out.get();
    auto pz = logits;
    out->backward_fn = [self, pz, label, lse, n] {
      const T g0 = self->grad[0];
      for (size_t i = 0; i < n; ++i) {
        const T p = std::exp(pz->values[i] - lse);
        pz->grad[i] += g0 * (p - (static_cast<int>(i) == label ? T(1) : T(0)));
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// flatten: {C,H,W} or {N} -> {numel}.
// ---------------------------------------------------------------------------
template <typename T>
TensorPtr<T> flatten(const TensorPtr<T>& input) {
  auto out = make_tensor<T>({input->numel()});
  out->values = input->values;
  if (detail::wants_graph<T>({&input})) {
    out->requires_grad = true;
    out->parents = {input};
    Tensor<T>* self = out.get();
    auto px = input;
    out->backward_fn = [self, px] {
      for (size_t i = 0; i < px->values.size(); ++i) px->grad[i] += self->grad[i];
    };
  }
  return out;
}

}  // namespace mscmt

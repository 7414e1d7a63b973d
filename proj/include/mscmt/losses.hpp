#pragma once

#include <cmath>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"
#include "mscmt/morphology.hpp"
#include "mscmt/ops.hpp"
#include "mscmt/tensor.hpp"

namespace mscmt {

// Objective coefficients: alpha_seg : alpha_cls is the 2:1 task ratio, omega0
// and sigma shape the boundary-emphasis weight map.
struct LossWeights {
  double alpha_seg = 2.0;
  double alpha_cls = 1.0;
  double omega0 = 10.0;
  double sigma = 5.0;
};

// alpha_cls may be zero: the classification term then contributes nothing and
// the classification head receives an exactly-zero gradient through it.
inline void validate(const LossWeights& w) {
  if (w.alpha_seg <= 0 || w.alpha_cls < 0)
    throw UsageError("loss weights: alpha_seg must be positive, alpha_cls non-negative");
  if (w.omega0 < 0) throw UsageError("loss weights: omega0 must be non-negative");
  if (w.sigma <= 0) throw UsageError("loss weights: sigma must be positive");
}

// decay: W(x) = 1 + omega0 * exp(-d(x)^2 / (2 sigma^2)), peaking at 1 + omega0
// on the boundary and flattening to 1 far away. growth: the exponent rises
// with distance instead, W(x) = 1 + omega0 * exp(d(x) / (2 sigma^2)).
enum class WeightGrowth { decay, growth };

inline std::vector<double> weight_map(const Mask& gt, const LossWeights& w,
                                      WeightGrowth mode = WeightGrowth::decay) {
  validate(w);
  if (gt.empty_mask()) throw DataError("weight_map: empty mask");
  std::vector<double> out(gt.size(), 1.0);
  if (w.omega0 == 0.0) return out;
  const DistanceField d = boundary_distance_map(gt);
  const double two_sigma_sq = 2.0 * w.sigma * w.sigma;
  for (size_t i = 0; i < out.size(); ++i) {
    const double di = d.values[i];
    const double e = mode == WeightGrowth::decay ? std::exp(-di * di / two_sigma_sq)
                                                 : std::exp(di / two_sigma_sq);
    out[i] = 1.0 + w.omega0 * e;
  }
  return out;
}

// Fused soft-Dice graph node:
//   L = 1 - 2 sum(w g s) / (sum(w g) + sum(w s))
// with the analytic gradient dL/ds_i = (N w_i - 2 w_i g_i D) / D^2 where
// N and D are the numerator and denominator sums.
template <typename T>
TensorPtr<T> weighted_soft_dice_loss(const TensorPtr<T>& pred, const Mask& gt,
                                     const std::vector<T>& weights) {
  if (pred->shape.size() != 3 || pred->shape[0] != 1 || pred->shape[1] != gt.height ||
      pred->shape[2] != gt.width)
    throw ShapeError("weighted_soft_dice_loss: prediction and mask extents differ");
  if (weights.size() != gt.size())
    throw ShapeError("weighted_soft_dice_loss: weight count does not match mask");

  const size_t n = gt.size();
  T num = T(0), den_g = T(0), den_s = T(0);
  for (size_t i = 0; i < n; ++i) {
    const T w = weights[i];
    const T g = static_cast<T>(gt.bits[i]);
    const T s = pred->values[i];
    num += w * g * s;
    den_g += w * g;
    den_s += w * s;
  }
  const T N = T(2) * num;
  const T D = den_g + den_s;
  if (D == T(0)) throw NumericError("weighted_soft_dice_loss: zero denominator");

  auto out = make_tensor<T>({1});
  out->values[0] = T(1) - N / D;

  if (detail::wants_graph<T>({&pred})) {
    out->requires_grad = true;
    out->parents = {pred};
    Tensor<T>* self = out.get();
    auto p = pred;
    auto gt_bits = gt.bits;
    auto w = weights;
    out->backward_fn = [self, p, gt_bits = std::move(gt_bits), w = std::move(w), N, D, n] {
      const T g0 = self->grad[0];
      const T D2 = D * D;
      for (size_t i = 0; i < n; ++i) {
        const T wi = w[i];
        const T gi = static_cast<T>(gt_bits[i]);
        p->grad[i] += g0 * (N * wi - T(2) * wi * gi * D) / D2;
      }
    };
  }
  return out;
}

// 1 - soft Dice with uniform unit weights.
template <typename T>
TensorPtr<T> region_loss(const TensorPtr<T>& pred, const Mask& gt) {
  return weighted_soft_dice_loss(pred, gt, std::vector<T>(gt.size(), T(1)));
}

// 1 - soft Dice with boundary-emphasis weights from the ground truth.
template <typename T>
TensorPtr<T> weighted_dice_loss(const TensorPtr<T>& pred, const Mask& gt, const LossWeights& lw,
                                WeightGrowth mode = WeightGrowth::decay) {
  const auto map = weight_map(gt, lw, mode);
  std::vector<T> weights(map.size());
  for (size_t i = 0; i < map.size(); ++i) weights[i] = static_cast<T>(map[i]);
  return weighted_soft_dice_loss(pred, gt, weights);
}

// Categorical cross-entropy on the class logits. The softmax is fused into
// the loss node so a saturated head keeps a usable gradient.
template <typename T>
TensorPtr<T> classification_loss(int true_class, const TensorPtr<T>& logits) {
  return cross_entropy_from_logits(logits, true_class);
}

template <typename T>
TensorPtr<T> combined_loss(const TensorPtr<T>& l_seg, const TensorPtr<T>& l_cls,
                           const LossWeights& w) {
  validate(w);
  return add(scale(l_seg, static_cast<T>(w.alpha_seg)), scale(l_cls, static_cast<T>(w.alpha_cls)));
}

}  // namespace mscmt

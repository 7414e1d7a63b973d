#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"
#include "mscmt/losses.hpp"
#include "mscmt/network.hpp"
#include "mscmt/ops.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/run_config.hpp"
#include "mscmt/sample.hpp"

namespace mscmt {

namespace detail {

// SGD with momentum over shuffled minibatches. Gradients from every sample in
// a batch accumulate (each backward pass scaled by 1/batch) before one step.
// Runs epochs [start_epoch, cfg.epochs) and returns the mean per-sample loss
// of each epoch it ran. The caller's rng drives the shuffle, so checkpointing
// its state makes resumed runs bit-identical to uninterrupted ones.
template <typename LossFn>
std::vector<double> run_epochs(Network<float>& net, const std::vector<Sample>& train_set,
                               const RunConfig& cfg, Rng& rng, int start_epoch,
                               LossFn&& sample_loss) {
  if (train_set.empty()) throw DataError("training set is empty");
  if (start_epoch < 0 || start_epoch > cfg.epochs)
    throw UsageError("start epoch " + std::to_string(start_epoch) +
                     " outside [0, " + std::to_string(cfg.epochs) + "]");
  const size_t n = train_set.size();
  std::vector<size_t> order(n);
  const float lr = static_cast<float>(cfg.lr);
  const float momentum = static_cast<float>(cfg.momentum);

  std::vector<double> trace;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order.begin(), order.end());
    double epoch_sum = 0.0;
    for (size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const size_t b1 = std::min(n, b0 + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(b1 - b0);
      for (size_t i = b0; i < b1; ++i) {
        const Sample& s = train_set[order[i]];
        TensorPtr<float> loss = sample_loss(net, s);
        const float value = loss->values[0];
        if (!std::isfinite(value))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample " + s.id);
        epoch_sum += value;
        backward(scale(loss, inv_batch));
      }
      sgd_momentum_step(net.params.all(), lr, momentum);
    }
    trace.push_back(epoch_sum / static_cast<double>(n));
  }
  return trace;
}

}  // namespace detail

// Region detector: plain soft-Dice loss against the full-resolution mask.
inline std::vector<double> train_region(Network<float>& net, const std::vector<Sample>& train_set,
                                        const RunConfig& cfg, Rng& rng, int start_epoch = 0) {
  return detail::run_epochs(net, train_set, cfg, rng, start_epoch,
                            [](Network<float>& m, const Sample& s) {
                              auto pred = forward_region(m, image_to_tensor<float>(s.image));
                              return region_loss(pred, s.mask);
                            });
}

// Main network: boundary-weighted Dice, plus the classification term in the
// 2:1 combination when the multitask head exists. Cascaded configurations
// need a preliminary map on every sample.
inline std::vector<double> train_main(Network<float>& net, const std::vector<Sample>& train_set,
                                      const RunConfig& cfg, Rng& rng, int start_epoch = 0) {
  const bool cascaded = net.cfg.cascade != CascadeLevel::none;
  if (cascaded)
    for (const Sample& s : train_set)
      if (!s.init_map)
        throw UsageError("cascade is configured but sample " + s.id +
                         " carries no preliminary map; run the ROI stage first");
  return detail::run_epochs(
      net, train_set, cfg, rng, start_epoch, [&cfg, cascaded](Network<float>& m, const Sample& s) {
        TensorPtr<float> map =
            cascaded ? image_to_tensor<float>(*s.init_map) : TensorPtr<float>{};
        auto pred = forward_mscmt(m, image_to_tensor<float>(s.image), map);
        auto l_seg = weighted_dice_loss(pred.seg_map, s.mask, cfg.loss, cfg.weight_mode);
        if (!m.cfg.multitask) return l_seg;
        return combined_loss(l_seg, classification_loss(s.label, pred.class_logits),
                             cfg.loss);
      });
}

// The samples whose fold differs from `held_out` (training split); throws if
// any sample lacks a fold assignment.
inline std::vector<Sample> training_split(const std::vector<Sample>& samples,
                                          const FoldPlan& plan, int held_out) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (plan.fold_of(s.id) != held_out) out.push_back(s);
  return out;
}

inline std::vector<Sample> heldout_split(const std::vector<Sample>& samples,
                                         const FoldPlan& plan, int held_out) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (plan.fold_of(s.id) == held_out) out.push_back(s);
  return out;
}

}  // namespace mscmt

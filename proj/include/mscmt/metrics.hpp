#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"

namespace mscmt {

namespace detail {

struct PixelCounts {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline PixelCounts pixel_counts(const Mask& gt, const Mask& pred) {
  if (gt.height != pred.height || gt.width != pred.width)
    throw ShapeError("mask extents differ");
  PixelCounts c;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt.bits[i] && pred.bits[i]) ++c.tp;
    else if (!gt.bits[i] && pred.bits[i]) ++c.fp;
    else if (gt.bits[i] && !pred.bits[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace detail

// Hard Dice 2|G n S| / (|G| + |S|); two empty masks agree perfectly.
inline double dice(const Mask& gt, const Mask& pred) {
  auto c = detail::pixel_counts(gt, pred);
  const size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

// TP / (TP + FP + FN); two empty masks agree perfectly.
inline double iou(const Mask& gt, const Mask& pred) {
  auto c = detail::pixel_counts(gt, pred);
  const size_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

// Mean of the foreground and background per-class IoU.
inline double mean_iou(const Mask& gt, const Mask& pred) {
  auto c = detail::pixel_counts(gt, pred);
  const size_t fg_denom = c.tp + c.fp + c.fn;
  const size_t bg_denom = c.tn + c.fp + c.fn;
  const double fg = fg_denom == 0 ? 1.0 : static_cast<double>(c.tp) / fg_denom;
  const double bg = bg_denom == 0 ? 1.0 : static_cast<double>(c.tn) / bg_denom;
  return (fg + bg) / 2.0;
}

inline double pixel_accuracy(const Mask& gt, const Mask& pred) {
  auto c = detail::pixel_counts(gt, pred);
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(gt.size());
}

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<size_t> counts;

  explicit ConfusionMatrix(int nc) : num_classes(nc), counts(static_cast<size_t>(nc) * nc, 0) {}
  size_t& at(int t, int p) { return counts[static_cast<size_t>(t) * num_classes + p]; }
  size_t at(int t, int p) const { return counts[static_cast<size_t>(t) * num_classes + p]; }

  size_t total() const {
    size_t n = 0;
    for (size_t v : counts) n += v;
    return n;
  }
  size_t trace() const {
    size_t n = 0;
    for (int j = 0; j < num_classes; ++j) n += at(j, j);
    return n;
  }
  size_t row_sum(int t) const {
    size_t n = 0;
    for (int p = 0; p < num_classes; ++p) n += at(t, p);
    return n;
  }
};

struct RateReport {
  ConfusionMatrix matrix;
  std::vector<double> row_rates;  // diagonal / row sum, one per class
  double macro_rate = 0.0;        // mean of row rates
  double accuracy = 0.0;          // trace / total
};

inline RateReport rates_from_matrix(ConfusionMatrix m) {
  RateReport report{std::move(m), {}, 0.0, 0.0};
  const auto& cm = report.matrix;
  for (int j = 0; j < cm.num_classes; ++j) {
    const size_t rs = cm.row_sum(j);
    report.row_rates.push_back(rs == 0 ? 0.0 : static_cast<double>(cm.at(j, j)) / rs);
  }
  double acc = 0.0;
  for (double r : report.row_rates) acc += r;
  report.macro_rate = acc / cm.num_classes;
  const size_t total = cm.total();
  if (total == 0) throw DataError("confusion matrix holds no samples");
  report.accuracy = static_cast<double>(cm.trace()) / total;
  return report;
}

inline RateReport confusion_and_rates(const std::vector<int>& truth,
                                      const std::vector<int>& predicted, int num_classes) {
  if (truth.size() != predicted.size())
    throw ShapeError("confusion_and_rates: label list lengths differ");
  ConfusionMatrix m(num_classes);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes)
      throw DataError("confusion_and_rates: label outside [0, " +
                      std::to_string(num_classes) + ") at sample " + std::to_string(i));
    ++m.at(truth[i], predicted[i]);
  }
  return rates_from_matrix(std::move(m));
}

inline double classification_accuracy(const std::vector<int>& truth,
                                      const std::vector<int>& predicted) {
  if (truth.size() != predicted.size())
    throw ShapeError("classification_accuracy: label list lengths differ");
  if (truth.empty()) throw DataError("classification_accuracy: no samples");
  size_t hit = 0;
  for (size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hit) / truth.size();
}

}  // namespace mscmt

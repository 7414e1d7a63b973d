#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"
#include "mscmt/metrics.hpp"
#include "mscmt/network.hpp"
#include "mscmt/sample.hpp"

#include "nlohmann/json.hpp"

namespace mscmt {

struct SamplePrediction {
  Mask seg;
  std::optional<int> label;  // absent when the network has no classification head
};

using Predictor = std::function<SamplePrediction(const Sample&)>;

// Hard-threshold inference through the main network. Cascaded configurations
// read the sample's preliminary map; the class head, when present, takes the
// argmax (lowest index on ties).
inline Predictor network_predictor(Network<float>& net) {
  return [&net](const Sample& s) {
    NoGradGuard ng;
    TensorPtr<float> map;
    if (net.cfg.cascade != CascadeLevel::none) {
      if (!s.init_map)
        throw UsageError("cascade is configured but sample " + s.id +
                         " carries no preliminary map");
      map = image_to_tensor<float>(*s.init_map);
    }
    auto out = forward_mscmt(net, image_to_tensor<float>(s.image), map);
    SamplePrediction pred{binarize(*out.seg_map, 0.5f), std::nullopt};
    if (out.class_probs) {
      const auto& probs = out.class_probs;
      int best = 0;
      for (size_t k = 1; k < probs->values.size(); ++k)
        if (probs->values[k] > probs->values[best]) best = static_cast<int>(k);
      pred.label = best;
    }
    return pred;
  };
}

inline Predictor region_predictor(Network<float>& net) {
  return [&net](const Sample& s) {
    NoGradGuard ng;
    auto seg = forward_region(net, image_to_tensor<float>(s.image));
    return SamplePrediction{binarize(*seg, 0.5f), std::nullopt};
  };
}

struct FoldMetrics {
  int fold = 0;
  int sample_count = 0;
  double dice = 0.0;
  double iou = 0.0;
  double mean_iou = 0.0;
  std::optional<RateReport> cls;
};

// Metrics over one held-out fold, reduced in sorted-id order. Segmentation
// scores are per-sample means; classification rates come from the fold's
// confusion matrix.
inline FoldMetrics evaluate_fold(const std::vector<Sample>& samples, const FoldPlan& plan,
                                 int fold, const Predictor& predict,
                                 int num_classes = kNumClasses) {
  std::vector<const Sample*> held;
  for (const Sample& s : samples)
    if (plan.fold_of(s.id) == fold) held.push_back(&s);
  if (held.empty()) throw DataError("fold " + std::to_string(fold) + " holds no samples");
  std::sort(held.begin(), held.end(),
            [](const Sample* a, const Sample* b) { return a->id < b->id; });

  FoldMetrics m;
  m.fold = fold;
  m.sample_count = static_cast<int>(held.size());
  std::vector<int> truth, guessed;
  for (const Sample* s : held) {
    SamplePrediction pred = predict(*s);
    m.dice += dice(s->mask, pred.seg);
    m.iou += iou(s->mask, pred.seg);
    m.mean_iou += mean_iou(s->mask, pred.seg);
    if (pred.label) {
      truth.push_back(s->label);
      guessed.push_back(*pred.label);
    }
  }
  m.dice /= m.sample_count;
  m.iou /= m.sample_count;
  m.mean_iou /= m.sample_count;
  if (!truth.empty()) {
    if (static_cast<int>(truth.size()) != m.sample_count)
      throw DataError("predictor returned labels for only some samples of fold " +
                      std::to_string(fold));
    m.cls = confusion_and_rates(truth, guessed, num_classes);
  }
  return m;
}

struct MetricsReport {
  std::vector<FoldMetrics> folds;
  double dice = 0.0;      // aggregate = arithmetic mean over folds
  double iou = 0.0;
  double mean_iou = 0.0;
  std::optional<double> accuracy;
  std::optional<double> macro_rate;
  std::vector<double> row_rates;           // mean over folds, empty without labels
  std::optional<ConfusionMatrix> confusion;  // summed over folds
  double wall_seconds = 0.0;
  std::string fingerprint;
};

inline MetricsReport aggregate_report(std::vector<FoldMetrics> folds, std::string fingerprint,
                                      double wall_seconds = 0.0) {
  if (folds.empty()) throw DataError("no fold metrics to aggregate");
  MetricsReport rep;
  rep.folds = std::move(folds);
  rep.fingerprint = std::move(fingerprint);
  rep.wall_seconds = wall_seconds;
  const double n = static_cast<double>(rep.folds.size());
  bool all_cls = true;
  for (const FoldMetrics& f : rep.folds) {
    rep.dice += f.dice / n;
    rep.iou += f.iou / n;
    rep.mean_iou += f.mean_iou / n;
    all_cls = all_cls && f.cls.has_value();
  }
  if (all_cls) {
    const int nc = rep.folds.front().cls->matrix.num_classes;
    ConfusionMatrix sum(nc);
    double acc = 0.0, macro = 0.0;
    std::vector<double> rows(nc, 0.0);
    for (const FoldMetrics& f : rep.folds) {
      acc += f.cls->accuracy / n;
      macro += f.cls->macro_rate / n;
      for (int j = 0; j < nc; ++j) rows[j] += f.cls->row_rates[j] / n;
      for (int t = 0; t < nc; ++t)
        for (int p = 0; p < nc; ++p) sum.at(t, p) += f.cls->matrix.at(t, p);
    }
    rep.accuracy = acc;
    rep.macro_rate = macro;
    rep.row_rates = std::move(rows);
    rep.confusion = std::move(sum);
  }
  return rep;
}

namespace detail {

inline nlohmann::ordered_json confusion_to_json(const ConfusionMatrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int t = 0; t < m.num_classes; ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int p = 0; p < m.num_classes; ++p) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::ordered_json rate_report_to_json(const RateReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["macro_rate"] = r.macro_rate;
  j["row_rates"] = r.row_rates;
  j["confusion"] = confusion_to_json(r.matrix);
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["fingerprint"] = rep.fingerprint;
  j["wall_seconds"] = rep.wall_seconds;
  j["folds"] = nlohmann::ordered_json::array();
  for (const FoldMetrics& f : rep.folds) {
    nlohmann::ordered_json jf;
    jf["fold"] = f.fold;
    jf["samples"] = f.sample_count;
    jf["dice"] = f.dice;
    jf["iou"] = f.iou;
    jf["mean_iou"] = f.mean_iou;
    jf["classification"] = f.cls ? detail::rate_report_to_json(*f.cls)
                                 : nlohmann::ordered_json(nullptr);
    j["folds"].push_back(std::move(jf));
  }
  nlohmann::ordered_json agg;
  agg["dice"] = rep.dice;
  agg["iou"] = rep.iou;
  agg["mean_iou"] = rep.mean_iou;
  if (rep.accuracy) {
    agg["accuracy"] = *rep.accuracy;
    agg["macro_rate"] = *rep.macro_rate;
    agg["row_rates"] = rep.row_rates;
    agg["confusion"] = detail::confusion_to_json(*rep.confusion);
  } else {
    agg["accuracy"] = nullptr;
  }
  j["aggregate"] = std::move(agg);
  return j;
}

}  // namespace mscmt

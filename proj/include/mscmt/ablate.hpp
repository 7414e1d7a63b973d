#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mscmt/evaluate.hpp"
#include "mscmt/network.hpp"
#include "mscmt/preprocess.hpp"
#include "mscmt/roi.hpp"
#include "mscmt/run_config.hpp"
#include "mscmt/train.hpp"

#include "nlohmann/json.hpp"

namespace mscmt {

struct AblationRow {
  std::string name;
  double dice = 0.0;
  double mean_iou = 0.0;
  std::optional<double> accuracy;  // absent for rows without a class head
};

struct AblationTable {
  std::string title;
  std::vector<AblationRow> rows;
};

struct AblationReport {
  std::string fingerprint;
  std::vector<AblationTable> tables;
};

// Full-dataset-scale reference targets the ladder is benchmarked against.
// Desk-scale runs are not expected to reproduce them.
inline constexpr double kReferenceDice = 96.27;
inline constexpr double kReferenceMeanIou = 97.05;
inline constexpr double kReferenceAccuracy = 97.981;

namespace detail {

// Train one variant on the non-held-out split and score the held-out fold.
// Each row runs from its own seed stream so inserting a row never shifts the
// others.
inline AblationRow run_variant(std::string name, NetKind kind, const RunConfig& cfg,
                               const std::vector<Sample>& samples, const FoldPlan& plan,
                               uint64_t row_tag) {
  const uint64_t row_seed = mix_seed(cfg.seed, row_tag);
  Network<float> net = kind == NetKind::region ? build_region_net<float>(cfg.net, row_seed)
                                               : build_mscmt_net<float>(cfg.net, row_seed);
  Rng rng(mix_seed(row_seed, 1));
  const auto train_set = training_split(samples, plan, cfg.fold);
  if (kind == NetKind::region) train_region(net, train_set, cfg, rng);
  else train_main(net, train_set, cfg, rng);
  const Predictor predict =
      kind == NetKind::region ? region_predictor(net) : network_predictor(net);
  const FoldMetrics m = evaluate_fold(samples, plan, cfg.fold, predict, cfg.net.num_classes);
  AblationRow row{std::move(name), m.dice, m.mean_iou, std::nullopt};
  if (m.cls) row.accuracy = m.cls->accuracy;
  return row;
}

}  // namespace detail

// The three-ladder experiment matrix. Table 1 varies input conditioning of
// the region detector (raw, enhanced, enhanced + ROI crops); table 2 varies
// the cascade level of the single-task multiscale network on the crops;
// table 3 adds the classification head and the aggregation module. All nine
// rows train at the passed config's scale on its pinned seed and fold.
inline AblationReport run_ablation(const RunConfig& base, const std::vector<Sample>& samples,
                                   const FoldPlan& plan) {
  validate(base);
  AblationReport rep;
  rep.fingerprint = fingerprint_hex(base);

  std::vector<Sample> enhanced;
  enhanced.reserve(samples.size());
  for (const Sample& s : samples) enhanced.push_back(preprocess_sample(s, base.pre));

  AblationTable t1{"input conditioning", {}};
  t1.rows.push_back(detail::run_variant("raw whole-image", NetKind::region, base, samples,
                                        plan, 101));
  t1.rows.push_back(detail::run_variant("enhanced whole-image", NetKind::region, base,
                                        enhanced, plan, 102));

  // The crop stage reuses the enhanced-whole-image row's seed stream, so the
  // detector that produces the crops is exactly that row's trained network.
  const uint64_t det_seed = mix_seed(base.seed, 102);
  Network<float> detector = build_region_net<float>(base.net, det_seed);
  {
    Rng rng(mix_seed(det_seed, 1));
    train_region(detector, training_split(enhanced, plan, base.fold), base, rng);
  }
  RoiOptions roi{base.crop_half, base.crop_clamp ? CropMode::clamp : CropMode::drop,
                 base.fallback_center};
  std::vector<Sample> crops = extract_roi_all(detector, enhanced, roi).kept;

  RunConfig crop_cfg = base;
  crop_cfg.net.input_size = 2 * base.crop_half;
  t1.rows.push_back(detail::run_variant("enhanced cropped", NetKind::region, crop_cfg, crops,
                                        plan, 103));
  rep.tables.push_back(std::move(t1));

  // Identical configurations reuse their result instead of retraining; the
  // full-cascade single-task row anchors both ladders.
  std::map<std::string, AblationRow> cache;
  auto mscmt_row = [&](std::string name, CascadeLevel cascade, bool multitask,
                       bool aggregation, uint64_t tag) {
    RunConfig cfg = crop_cfg;
    cfg.net.multiscale = true;
    cfg.net.cascade = cascade;
    cfg.net.multitask = multitask;
    cfg.net.aggregation = aggregation;
    const std::string key = serialize(cfg);
    auto it = cache.find(key);
    if (it == cache.end()) {
      AblationRow row = detail::run_variant(name, NetKind::mscmt, cfg, crops, plan, tag);
      it = cache.emplace(key, std::move(row)).first;
    }
    AblationRow row = it->second;
    row.name = std::move(name);
    return row;
  };

  AblationTable t2{"cascade ladder", {}};
  t2.rows.push_back(mscmt_row("multiscale", CascadeLevel::none, false, false, 201));
  t2.rows.push_back(mscmt_row("multiscale + common cascade", CascadeLevel::common, false,
                              false, 202));
  t2.rows.push_back(mscmt_row("multiscale + full cascade", CascadeLevel::full, false, false,
                              203));
  rep.tables.push_back(std::move(t2));

  AblationTable t3{"task heads", {}};
  t3.rows.push_back(mscmt_row("full cascade, segmentation only", CascadeLevel::full, false,
                              false, 203));
  t3.rows.push_back(mscmt_row("+ classification head", CascadeLevel::full, true, false, 301));
  t3.rows.push_back(mscmt_row("+ aggregation module", CascadeLevel::full, true, true, 302));
  rep.tables.push_back(std::move(t3));
  return rep;
}

inline nlohmann::ordered_json ablation_to_json(const AblationReport& rep) {
  nlohmann::ordered_json j;
  j["fingerprint"] = rep.fingerprint;
  j["tables"] = nlohmann::ordered_json::array();
  for (const AblationTable& t : rep.tables) {
    nlohmann::ordered_json jt;
    jt["title"] = t.title;
    jt["rows"] = nlohmann::ordered_json::array();
    for (const AblationRow& r : t.rows) {
      nlohmann::ordered_json jr;
      jr["name"] = r.name;
      jr["dice"] = r.dice;
      jr["mean_iou"] = r.mean_iou;
      jr["accuracy"] = r.accuracy ? nlohmann::ordered_json(*r.accuracy)
                                  : nlohmann::ordered_json(nullptr);
      jt["rows"].push_back(std::move(jr));
    }
    j["tables"].push_back(std::move(jt));
  }
  nlohmann::ordered_json ref;
  ref["note"] = "full-dataset-scale reference targets; not reproduced at desk scale";
  ref["dice"] = kReferenceDice;
  ref["mean_iou"] = kReferenceMeanIou;
  ref["accuracy"] = kReferenceAccuracy;
  j["reference"] = std::move(ref);
  return j;
}

namespace detail {

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline std::string ablation_to_text(const AblationReport& rep) {
  size_t name_w = 0;
  for (const AblationTable& t : rep.tables)
    for (const AblationRow& r : t.rows) name_w = std::max(name_w, r.name.size());
  name_w = std::max(name_w, std::string("variant").size());

  std::string out;
  auto pad = [](std::string s, size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  for (const AblationTable& t : rep.tables) {
    out += "== " + t.title + " ==\n";
    out += pad("variant", name_w) + "  " + pad("DSC", 8) + "  " + pad("mean IoU", 8) + "  " +
           "accuracy\n";
    for (const AblationRow& r : t.rows) {
      out += pad(r.name, name_w) + "  " + detail::fmt_metric(r.dice) + "  " +
             detail::fmt_metric(r.mean_iou) + "  " +
             (r.accuracy ? detail::fmt_metric(*r.accuracy) : std::string("-")) + "\n";
    }
    out += "\n";
  }
  out += "reference targets at full dataset scale (not reproduced at desk scale): DSC " +
         detail::fmt_metric(kReferenceDice) + ", mean IoU " +
         detail::fmt_metric(kReferenceMeanIou) + ", accuracy " +
         detail::fmt_metric(kReferenceAccuracy) + "\n";
  out += "config fingerprint " + rep.fingerprint + "\n";
  return out;
}

}  // namespace mscmt

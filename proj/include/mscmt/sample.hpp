#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"
#include "mscmt/rng.hpp"

namespace mscmt {

inline constexpr int kNumClasses = 3;
inline const char* kClassNames[kNumClasses] = {"glioma", "pituitary", "meningioma"};

// One dataset record. init_map carries the preliminary region probability
// map once ROI extraction has run; it is absent before that stage.
struct Sample {
  std::string id;
  Image image;
  Mask mask;
  int label = 0;
  std::string patient_id;
  std::optional<int> fold;
  std::optional<Image> init_map;
};

inline void validate_sample(const Sample& s) {
  if (s.id.empty()) throw DataError("sample with empty id");
  if (s.image.height != s.mask.height || s.image.width != s.mask.width)
    throw DataError("sample " + s.id + ": image " + std::to_string(s.image.height) +
                    "x" + std::to_string(s.image.width) + " does not match mask " +
                    std::to_string(s.mask.height) + "x" + std::to_string(s.mask.width));
  if (s.label < 0 || s.label >= kNumClasses)
    throw DataError("sample " + s.id + ": label " + std::to_string(s.label) +
                    " out of range");
  if (s.init_map &&
      (s.init_map->height != s.image.height || s.init_map->width != s.image.width))
    throw DataError("sample " + s.id + ": map extents do not match the image");
}

struct FoldPlan {
  int k = 5;
  uint64_t seed = 0;
  std::map<std::string, int> assignment;  // sample id -> fold index

  int fold_of(const std::string& id) const {
    auto it = assignment.find(id);
    if (it == assignment.end()) throw DataError("no fold assigned to sample " + id);
    return it->second;
  }
};

// Partition checks always apply; the per-class balance bound holds for
// sample-level stratification (not for patient-disjoint plans, where whole
// patients move together).
inline void validate_fold_plan(const FoldPlan& plan, const std::vector<Sample>& samples,
                               bool check_balance = true) {
  if (plan.k < 2) throw DataError("fold plan must have k >= 2");
  if (plan.assignment.size() != samples.size())
    throw DataError("fold plan covers " + std::to_string(plan.assignment.size()) +
                    " ids but the dataset has " + std::to_string(samples.size()));
  std::vector<std::vector<int>> class_counts(plan.k, std::vector<int>(kNumClasses, 0));
  std::vector<int> totals(kNumClasses, 0);
  for (const auto& s : samples) {
    int f = plan.fold_of(s.id);
    if (f < 0 || f >= plan.k)
      throw DataError("sample " + s.id + " assigned to invalid fold " + std::to_string(f));
    ++class_counts[f][s.label];
    ++totals[s.label];
  }
  if (!check_balance) return;
  for (int c = 0; c < kNumClasses; ++c) {
    double ideal = static_cast<double>(totals[c]) / plan.k;
    for (int f = 0; f < plan.k; ++f)
      if (std::abs(class_counts[f][c] - ideal) > 1.0 + 1e-9)
        throw DataError("fold " + std::to_string(f) + " holds " +
                        std::to_string(class_counts[f][c]) + " samples of class " +
                        std::to_string(c) + ", expected about " + std::to_string(ideal));
  }
}

// Shuffled per-class round-robin assignment. The fold cursor rolls over from
// one class to the next so the fold SIZES also stay within one of each other,
// not just the per-class counts.
//
// With patient_disjoint set, whole patients are assigned instead of single
// samples (a patient's class is the smallest label among its samples); the
// per-class balance is then only approximate.
inline FoldPlan stratified_kfold(const std::vector<Sample>& samples, int k,
                                 uint64_t seed, bool patient_disjoint = false) {
  if (k < 2) throw UsageError("stratified_kfold: k must be >= 2");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;

  if (!patient_disjoint) {
    std::vector<std::vector<std::string>> per_class(kNumClasses);
    for (const auto& s : samples) {
      validate_sample(s);
      per_class[s.label].push_back(s.id);
    }
    int cursor = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      auto& ids = per_class[c];
      if (ids.empty()) continue;
      if (static_cast<int>(ids.size()) < k)
        throw DataError("class " + std::to_string(c) + " has only " +
                        std::to_string(ids.size()) + " samples for " +
                        std::to_string(k) + " folds");
      Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
      rng.shuffle(ids.begin(), ids.end());
      for (size_t j = 0; j < ids.size(); ++j)
        plan.assignment[ids[j]] = (cursor + static_cast<int>(j)) % k;
      cursor = (cursor + static_cast<int>(ids.size())) % k;
    }
    return plan;
  }

  struct Group {
    std::string patient;
    int label = kNumClasses;
    std::vector<std::string> ids;
  };
  std::map<std::string, Group> by_patient;
  for (const auto& s : samples) {
    validate_sample(s);
    auto& g = by_patient[s.patient_id];
    g.patient = s.patient_id;
    g.label = std::min(g.label, s.label);
    g.ids.push_back(s.id);
  }
  std::vector<std::vector<Group>> per_class(kNumClasses);
  for (auto& [_, g] : by_patient) per_class[g.label].push_back(std::move(g));
  int cursor = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& groups = per_class[c];
    if (groups.empty()) continue;
    if (static_cast<int>(groups.size()) < k)
      throw DataError("class " + std::to_string(c) + " has only " +
                      std::to_string(groups.size()) + " patients for " +
                      std::to_string(k) + " folds");
    Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
    rng.shuffle(groups.begin(), groups.end());
    for (size_t j = 0; j < groups.size(); ++j)
      for (const auto& id : groups[j].ids)
        plan.assignment[id] = (cursor + static_cast<int>(j)) % k;
    cursor = (cursor + static_cast<int>(groups.size())) % k;
  }
  return plan;
}

}  // namespace mscmt

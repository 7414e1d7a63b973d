#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mscmt/import.hpp"
#include "mscmt/manifest.hpp"
#include "mscmt/preprocess.hpp"
#include "mscmt/sample.hpp"
#include "mscmt/synth.hpp"

using namespace mscmt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "mscmt_datapipe_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Sample> fake_dataset(const std::vector<int>& class_counts) {
  std::vector<Sample> out;
  int idx = 0;
  for (int c = 0; c < static_cast<int>(class_counts.size()); ++c)
    for (int i = 0; i < class_counts[c]; ++i) {
      Sample s;
      s.id = "fake-" + std::to_string(idx);
      s.label = c;
      s.patient_id = "pat-" + std::to_string(idx / 7);
      s.image = Image(4, 4);
      s.mask = Mask(4, 4);
      s.mask.at(1, 1) = 1;
      out.push_back(std::move(s));
      ++idx;
    }
  return out;
}

// An isolated impulse stands strictly above or strictly below every
// 8-neighbor by more than the threshold.
int isolated_outliers(const Image& img, float threshold) {
  int count = 0;
  for (int r = 1; r + 1 < img.height; ++r)
    for (int c = 1; c + 1 < img.width; ++c) {
      float v = img.at(r, c);
      bool above = true, below = true;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          float n = img.at(r + dr, c + dc);
          above = above && (v - n > threshold);
          below = below && (n - v > threshold);
        }
      if (above || below) ++count;
    }
  return count;
}

}  // namespace

TEST_CASE("phantom generation: balance, determinism, validity") {
  auto samples = synth_generate(6, 42, 64);
  REQUIRE(samples.size() == 6);
  int counts[3] = {0, 0, 0};
  std::set<std::string> ids;
  for (const auto& s : samples) {
    ++counts[s.label];
    ids.insert(s.id);
    CHECK(s.mask.count() > 0);
    CHECK(s.image.height == 64);
    CHECK_NOTHROW(validate_sample(s));
  }
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 2);
  CHECK(ids.size() == 6);

  auto again = synth_generate(6, 42, 64);
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].image.pixels == again[i].image.pixels);
    CHECK(samples[i].mask.bits == again[i].mask.bits);
    CHECK(samples[i].patient_id == again[i].patient_id);
  }

  // Per-sample generators: a single sample is reproducible on its own.
  auto third = synth_sample(42, 3, 64);
  CHECK(third.image.pixels == samples[3].image.pixels);

  auto other_seed = synth_generate(6, 43, 64);
  CHECK(other_seed[0].image.pixels != samples[0].image.pixels);

  // Blob scale should separate the classes: class 0 largest, class 1 smallest.
  auto many = synth_generate(30, 7, 64);
  double area[3] = {0, 0, 0};
  int n[3] = {0, 0, 0};
  for (const auto& s : many) {
    area[s.label] += s.mask.count();
    ++n[s.label];
  }
  for (int c = 0; c < 3; ++c) area[c] /= n[c];
  CHECK(area[0] > area[2]);
  CHECK(area[2] > area[1]);

  CHECK_THROWS_AS(synth_generate(0, 1, 64), UsageError);
  CHECK_THROWS_AS(synth_generate(3, 1, 32), UsageError);
}

TEST_CASE("stratified folds: sizes, balance, determinism") {
  auto data = fake_dataset({1426, 930, 708});
  auto plan = stratified_kfold(data, 5, 11);
  CHECK(plan.k == 5);
  CHECK_NOTHROW(validate_fold_plan(plan, data));

  std::vector<int> sizes(5, 0);
  std::vector<std::vector<int>> by_class(5, std::vector<int>(3, 0));
  for (const auto& s : data) {
    int f = plan.fold_of(s.id);
    ++sizes[f];
    ++by_class[f][s.label];
  }
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  CHECK(sizes == std::vector<int>{613, 613, 613, 613, 612});
  const double ideal[3] = {1426 / 5.0, 930 / 5.0, 708 / 5.0};
  for (int f = 0; f < 5; ++f)
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(by_class[f][c] - ideal[c]) <= 1.0);

  auto plan2 = stratified_kfold(data, 5, 11);
  CHECK(plan.assignment == plan2.assignment);
  auto plan3 = stratified_kfold(data, 5, 12);
  CHECK(plan.assignment != plan3.assignment);
}

TEST_CASE("stratified folds: small cases and rejections") {
  auto four = fake_dataset({2, 2});
  auto plan = stratified_kfold(four, 2, 3);
  std::vector<std::vector<int>> folds(2);
  for (const auto& s : four) folds[plan.fold_of(s.id)].push_back(s.label);
  for (auto& f : folds) {
    REQUIRE(f.size() == 2);
    std::sort(f.begin(), f.end());
    CHECK(f == std::vector<int>{0, 1});
  }

  auto thin = fake_dataset({3, 5, 5});
  CHECK_THROWS_AS(stratified_kfold(thin, 5, 1), DataError);
  CHECK_THROWS_AS(stratified_kfold(four, 1, 1), UsageError);
}

TEST_CASE("patient-disjoint folds keep each patient together") {
  std::vector<Sample> data;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 4; ++p)
      for (int i = 0; i < 3; ++i) {
        Sample s;
        s.id = "s" + std::to_string(c) + std::to_string(p) + std::to_string(i);
        s.label = c;
        s.patient_id = "pat" + std::to_string(c * 4 + p);
        s.image = Image(4, 4);
        s.mask = Mask(4, 4);
        s.mask.at(0, 0) = 1;
        data.push_back(std::move(s));
      }
  auto plan = stratified_kfold(data, 2, 9, true);
  CHECK_NOTHROW(validate_fold_plan(plan, data, false));
  std::map<std::string, std::set<int>> patient_folds;
  for (const auto& s : data) patient_folds[s.patient_id].insert(plan.fold_of(s.id));
  for (const auto& [pat, folds] : patient_folds) {
    CAPTURE(pat);
    CHECK(folds.size() == 1);
  }
}

TEST_CASE("manifest round trip") {
  auto dir = fresh_dir("roundtrip");
  auto samples = synth_generate(5, 21, 64);
  samples[2].init_map.reset();
  auto path = save_manifest(samples, dir);
  auto loaded = load_manifest(path);
  REQUIRE(loaded.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].label == samples[i].label);
    CHECK(loaded[i].patient_id == samples[i].patient_id);
    CHECK(loaded[i].mask.bits == samples[i].mask.bits);
    CHECK_FALSE(loaded[i].init_map.has_value());
    float max_err = 0;
    for (size_t p = 0; p < samples[i].image.pixels.size(); ++p)
      max_err = std::max(max_err,
                         std::abs(loaded[i].image.pixels[p] - samples[i].image.pixels[p]));
    CHECK(max_err <= 0.5f / 255.0f + 1e-6f);
  }

  SUBCASE("with preliminary maps: six-column manifest") {
    auto with_maps = samples;
    for (auto& s : with_maps) {
      Image m(64, 64);
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) m.at(r, c) = (r + c) / 126.0f;
      s.init_map = m;
    }
    with_maps[1].init_map.reset();  // mixed presence stays loadable
    auto dir2 = fresh_dir("roundtrip_maps");
    auto path2 = save_manifest(with_maps, dir2);
    {
      std::ifstream in(path2);
      std::string header;
      std::getline(in, header);
      CHECK(header == "id,image_path,mask_path,label,patient_id,map_path");
    }
    auto loaded2 = load_manifest(path2);
    REQUIRE(loaded2.size() == with_maps.size());
    CHECK_FALSE(loaded2[1].init_map.has_value());
    REQUIRE(loaded2[0].init_map.has_value());
    float max_err = 0;
    for (size_t p = 0; p < loaded2[0].init_map->pixels.size(); ++p)
      max_err = std::max(max_err, std::abs(loaded2[0].init_map->pixels[p] -
                                           with_maps[0].init_map->pixels[p]));
    CHECK(max_err <= 0.5f / 255.0f + 1e-6f);
  }
}

TEST_CASE("manifest error handling") {
  auto dir = fresh_dir("errors");

  SUBCASE("empty manifest loads as an empty list") {
    std::ofstream(dir / "m.csv") << "id,image_path,mask_path,label,patient_id\n";
    CHECK(load_manifest(dir / "m.csv").empty());
  }
  SUBCASE("bad header is rejected") {
    std::ofstream(dir / "m.csv") << "id,image,mask\n";
    CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
  }
  SUBCASE("missing file names the record") {
    std::ofstream(dir / "m.csv") << "id,image_path,mask_path,label,patient_id\n"
                                 << "ghost,images/ghost.png,masks/ghost.png,0,p1\n";
    try {
      load_manifest(dir / "m.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }
  SUBCASE("bad label is rejected with the record id") {
    auto one = synth_generate(1, 5, 64);
    save_manifest(one, dir);
    // rewrite the label column
    std::ofstream(dir / "manifest.csv")
        << "id,image_path,mask_path,label,patient_id\n"
        << one[0].id << ",images/" << one[0].id << ".png,masks/" << one[0].id
        << ".png,7,p\n";
    CHECK_THROWS_AS(load_manifest(dir / "manifest.csv"), DataError);
  }
  SUBCASE("missing manifest file") {
    CHECK_THROWS_AS(load_manifest(dir / "none.csv"), DataError);
  }
}

TEST_CASE("fold plan JSON round trip") {
  auto dir = fresh_dir("foldplan");
  auto data = fake_dataset({10, 10, 10});
  auto plan = stratified_kfold(data, 5, 77);
  save_fold_plan(plan, dir / "folds.json");
  auto loaded = load_fold_plan(dir / "folds.json");
  CHECK(loaded.k == plan.k);
  CHECK(loaded.seed == plan.seed);
  CHECK(loaded.assignment == plan.assignment);

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_fold_plan(dir / "bad.json"), DataError);
  std::ofstream(dir / "fields.json") << "{\"k\": 5}";
  CHECK_THROWS_AS(load_fold_plan(dir / "fields.json"), DataError);
}

TEST_CASE("external import with key and label remapping") {
  auto src = fresh_dir("import_src");
  auto out = fresh_dir("import_out");
  ImportKeys keys{"scan", "tumor", "kind", "pat"};
  const std::map<int, int> label_map{{1, 2}, {2, 0}, {3, 1}};

  auto phantoms = synth_generate(4, 31, 64);
  const int raw_labels[4] = {1, 2, 3, 9};  // 9 has no mapping
  for (int i = 0; i < 4; ++i) {
    const std::string stem = "rec" + std::to_string(i);
    write_image(src / (stem + "_img.png"), phantoms[i].image);
    write_mask(src / (stem + "_msk.png"), phantoms[i].mask);
    std::ofstream(src / (stem + ".json"))
        << "{\"scan\": \"" << stem << "_img.png\", \"tumor\": \"" << stem
        << "_msk.png\", \"kind\": " << raw_labels[i] << ", \"pat\": \"pt" << i
        << "\"}";
  }
  std::ofstream(src / "broken.json") << "{ nope";

  auto result = import_external_dataset(src, keys, label_map, out);
  CHECK(result.imported == 3);
  CHECK(result.skipped == 2);  // unknown label + broken JSON
  bool extent_warning = false, label_warning = false, json_warning = false;
  for (const auto& w : result.warnings) {
    if (w.find("expected 512x512") != std::string::npos) extent_warning = true;
    if (w.find("unknown label 9") != std::string::npos) label_warning = true;
    if (w.find("broken") != std::string::npos) json_warning = true;
  }
  CHECK(extent_warning);
  CHECK(label_warning);
  CHECK(json_warning);

  auto imported = load_manifest(result.manifest_path);
  REQUIRE(imported.size() == 3);
  CHECK(imported[0].id == "rec0");
  CHECK(imported[0].label == 2);
  CHECK(imported[1].label == 0);
  CHECK(imported[2].label == 1);
  CHECK(imported[0].patient_id == "pt0");
  CHECK(imported[0].mask.bits == phantoms[0].mask.bits);

  // matching extent expectation: no extent warnings
  auto out2 = fresh_dir("import_out2");
  auto result2 = import_external_dataset(src, keys, label_map, out2, 64);
  for (const auto& w : result2.warnings)
    CHECK(w.find("extents") == std::string::npos);
}

TEST_CASE("preprocessing removes impulses and keeps the mask") {
  auto s = synth_sample(8, 0, 64);
  const int before = isolated_outliers(s.image, 0.3f);
  CHECK(before > 0);
  auto enhanced = preprocess_sample(s);
  CHECK(isolated_outliers(enhanced.image, 0.3f) == 0);
  CHECK(enhanced.mask.bits == s.mask.bits);
  CHECK(enhanced.id == s.id);
  CHECK(enhanced.label == s.label);

  SUBCASE("constant image stays constant") {
    Sample flat;
    flat.id = "flat";
    flat.image = Image(32, 32);
    for (auto& v : flat.image.pixels) v = 0.4f;
    flat.mask = Mask(32, 32);
    flat.mask.at(10, 10) = 1;
    auto p = preprocess_sample(flat);
    float lo = 2, hi = -1;
    for (float v : p.image.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == hi);
  }
}

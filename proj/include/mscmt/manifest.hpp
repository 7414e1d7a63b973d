#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mscmt/errors.hpp"
#include "mscmt/image_io.hpp"
#include "mscmt/sample.hpp"

namespace mscmt {

// Manifest CSV: header `id,image_path,mask_path,label,patient_id`, paths
// relative to the manifest file. Manifests produced by ROI extraction carry
// a sixth `map_path` column with the preliminary probability map.

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line, const std::string& ctx) {
  if (line.find('"') != std::string::npos)
    throw DataError(ctx + ": quoted CSV fields are not supported");
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline void check_manifest_field(const std::string& v, const std::string& ctx) {
  if (v.find_first_of(",\"\n") != std::string::npos)
    throw DataError(ctx + ": value '" + v + "' cannot be stored in a CSV field");
}

}  // namespace detail

inline std::vector<Sample> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_map = false;
  if (line == "id,image_path,mask_path,label,patient_id")
    with_map = false;
  else if (line == "id,image_path,mask_path,label,patient_id,map_path")
    with_map = true;
  else
    throw DataError("manifest " + path.string() + " has an unrecognized header: " + line);

  std::vector<Sample> samples;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string ctx = "manifest row " + std::to_string(row);
    auto fields = detail::split_csv_row(line, ctx);
    const size_t want = with_map ? 6 : 5;
    if (fields.size() != want)
      throw DataError(ctx + ": expected " + std::to_string(want) + " fields, got " +
                      std::to_string(fields.size()));
    Sample s;
    s.id = fields[0];
    const std::string rec = ctx + " (id " + s.id + ")";
    try {
      s.image = read_image(base / fields[1]);
      s.mask = read_mask(base / fields[2]);
      if (with_map && !fields[5].empty()) s.init_map = read_image(base / fields[5]);
    } catch (const DataError& e) {
      throw DataError(rec + ": " + e.what());
    }
    try {
      size_t pos = 0;
      s.label = std::stoi(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw DataError(rec + ": bad label '" + fields[3] + "'");
    }
    s.patient_id = fields[4];
    try {
      validate_sample(s);
    } catch (const DataError& e) {
      throw DataError(rec + ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// Writes images/, masks/ (and maps/ when any sample carries one) plus the
// manifest CSV under dir. Returns the manifest path.
inline std::filesystem::path save_manifest(const std::vector<Sample>& samples,
                                           const std::filesystem::path& dir,
                                           const std::string& name = "manifest.csv") {
  namespace fs = std::filesystem;
  bool any_map = false;
  for (const auto& s : samples) any_map = any_map || s.init_map.has_value();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  if (any_map) fs::create_directories(dir / "maps");
  std::ofstream out(dir / name);
  if (!out) throw DataError("cannot write manifest under " + dir.string());
  out << "id,image_path,mask_path,label,patient_id";
  if (any_map) out << ",map_path";
  out << "\n";
  for (const auto& s : samples) {
    validate_sample(s);
    detail::check_manifest_field(s.id, "sample id");
    detail::check_manifest_field(s.patient_id, "sample " + s.id);
    const std::string img_rel = "images/" + s.id + ".png";
    const std::string mask_rel = "masks/" + s.id + ".png";
    write_image(dir / img_rel, s.image);
    write_mask(dir / mask_rel, s.mask);
    out << s.id << "," << img_rel << "," << mask_rel << "," << s.label << ","
        << s.patient_id;
    if (any_map) {
      if (s.init_map) {
        const std::string map_rel = "maps/" + s.id + ".png";
        write_image(dir / map_rel, *s.init_map);
        out << "," << map_rel;
      } else {
        out << ",";
      }
    }
    out << "\n";
  }
  if (!out) throw DataError("failed writing manifest under " + dir.string());
  return dir / name;
}

inline void save_fold_plan(const FoldPlan& plan, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["assignment"] = nlohmann::ordered_json::object();
  for (const auto& [id, fold] : plan.assignment) j["assignment"][id] = fold;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write fold plan " + path.string());
  out << j.dump(2) << "\n";
}

inline FoldPlan load_fold_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fold plan " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("fold plan " + path.string() + " is not valid JSON: " + e.what());
  }
  FoldPlan plan;
  try {
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<uint64_t>();
    for (const auto& [id, fold] : j.at("assignment").items())
      plan.assignment[id] = fold.get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("fold plan " + path.string() + " has a bad field: " + e.what());
  }
  return plan;
}

}  // namespace mscmt

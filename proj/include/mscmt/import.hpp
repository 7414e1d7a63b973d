#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mscmt/manifest.hpp"

namespace mscmt {

// External datasets arrive as a directory of per-sample JSON records whose
// field names vary by distribution; the key map adapts them. Labels are
// remapped through an explicit table (e.g. {1:2, 2:0, 3:1} for sources that
// number meningioma/glioma/pituitary 1/2/3).
struct ImportKeys {
  std::string image = "image";
  std::string mask = "mask";
  std::string label = "label";
  std::string patient = "patient_id";
};

struct ImportResult {
  std::filesystem::path manifest_path;
  int imported = 0;
  int skipped = 0;
  std::vector<std::string> warnings;
};

inline ImportResult import_external_dataset(const std::filesystem::path& dir,
                                            const ImportKeys& keys,
                                            const std::map<int, int>& label_map,
                                            const std::filesystem::path& out_dir,
                                            int expected_extent = 512) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw DataError("import: " + dir.string() + " is not a directory");
  std::vector<fs::path> records;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      records.push_back(entry.path());
  std::sort(records.begin(), records.end());

  ImportResult result;
  std::vector<Sample> samples;
  for (const auto& rec : records) {
    const std::string id = rec.stem().string();
    auto skip = [&](const std::string& why) {
      result.warnings.push_back("record " + id + ": " + why + "; skipped");
      ++result.skipped;
    };
    nlohmann::json j;
    {
      std::ifstream in(rec);
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        skip(std::string("not valid JSON (") + e.what() + ")");
        continue;
      }
    }
    if (!j.is_object() || !j.contains(keys.image) || !j.contains(keys.mask) ||
        !j.contains(keys.label) || !j.contains(keys.patient)) {
      skip("missing one of the configured keys");
      continue;
    }
    Sample s;
    s.id = id;
    try {
      s.image = read_image(rec.parent_path() / j.at(keys.image).get<std::string>());
      s.mask = read_mask(rec.parent_path() / j.at(keys.mask).get<std::string>());
      s.patient_id = j.at(keys.patient).get<std::string>();
      int raw = j.at(keys.label).get<int>();
      auto it = label_map.find(raw);
      if (it == label_map.end()) {
        skip("unknown label " + std::to_string(raw));
        continue;
      }
      s.label = it->second;
      validate_sample(s);
    } catch (const std::exception& e) {
      skip(e.what());
      continue;
    }
    if (s.image.height != expected_extent || s.image.width != expected_extent)
      result.warnings.push_back("record " + id + ": extents " +
                                std::to_string(s.image.height) + "x" +
                                std::to_string(s.image.width) + ", expected " +
                                std::to_string(expected_extent) + "x" +
                                std::to_string(expected_extent));
    samples.push_back(std::move(s));
    ++result.imported;
  }
  result.manifest_path = save_manifest(samples, out_dir);
  return result;
}

}  // namespace mscmt

// SPDX-License-Identifier: Apache-2.0
#include "t2s/manifest.hpp"

#include <fstream>

#include "t2s/error.hpp"

namespace t2s {

nlohmann::json to_json(const ShapeRecord& rec) {
  nlohmann::json out = nlohmann::json::object();
  out["id"] = rec.id;
  out["category"] = rec.category;
  out["instance_class"] = rec.instance_class;
  out["descriptions"] = rec.descriptions;
  out["voxel_path"] = rec.voxel_path;
  if (!rec.split.empty()) out["split"] = rec.split;
  for (auto it = rec.extra.begin(); it != rec.extra.end(); ++it) {
    out[it.key()] = it.value();
  }
  return out;
}

ShapeRecord shape_record_from_json(const nlohmann::json& j) {
  ShapeRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    rec.category = j.at("category").get<std::string>();
    rec.instance_class = j.at("instance_class").get<int>();
    rec.descriptions = j.at("descriptions").get<std::vector<std::string>>();
    rec.voxel_path = j.at("voxel_path").get<std::string>();
    if (j.contains("split")) rec.split = j.at("split").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest record: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* kKnown[] = {"id", "category", "instance_class", "descriptions",
                                   "voxel_path", "split"};
    bool known = false;
    for (const char* k : kKnown) known = known || it.key() == k;
    if (!known) rec.extra[it.key()] = it.value();
  }
  return rec;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ShapeRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  for (const auto& rec : records) os << to_json(rec).dump() << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<ShapeRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  std::vector<ShapeRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(shape_record_from_json(j));
  }
  return records;
}

std::filesystem::path resolve_voxel_path(const std::filesystem::path& manifest_path,
                                         const ShapeRecord& rec) {
  std::filesystem::path p(rec.voxel_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace t2s

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace t2s {

/// One line of a JSONL dataset manifest.
struct ShapeRecord {
  std::string id;
  std::string category;
  int instance_class = 0;
  std::vector<std::string> descriptions;
  std::string voxel_path;  // relative to the manifest directory unless absolute
  std::string split;       // "train" / "val" / "test"; empty when unsplit
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const ShapeRecord& rec);
ShapeRecord shape_record_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const std::vector<ShapeRecord>& records);
std::vector<ShapeRecord> read_manifest(const std::filesystem::path& path);

std::filesystem::path resolve_voxel_path(const std::filesystem::path& manifest_path,
                                         const ShapeRecord& rec);

}  // namespace t2s

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "t2s/diff/optim.hpp"

namespace t2s::diff {

struct ArrayRecord {
  Shape shape;
  std::vector<double> values;
};

/// Binary "T2CK" container: a named table of float64 arrays plus a JSON
/// metadata blob. Layout (little-endian): magic, u16 version, u32 count,
/// then per array {name, u32 rank, i64 dims..., f64 values...}, then the
/// metadata as a length-prefixed UTF-8 string.
class Checkpoint {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void put(const std::string& name, ArrayRecord record);
  const ArrayRecord& at(const std::string& name) const;
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const std::map<std::string, ArrayRecord>& arrays() const { return arrays_; }

  /// Stores parameters and buffers under `prefix`.
  void put_store(const std::string& prefix, const ParamStore& store);
  /// Copies values into an existing store; names and shapes must match.
  void load_store(const std::string& prefix, ParamStore& store) const;
  void put_optimizer(const std::string& prefix, const ParamStore& store, const Adam& opt);
  void load_optimizer(const std::string& prefix, const ParamStore& store, Adam& opt) const;

  nlohmann::json meta = nlohmann::json::object();

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArrayRecord> arrays_;
};

}  // namespace t2s::diff

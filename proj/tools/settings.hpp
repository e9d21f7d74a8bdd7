// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace t2s::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kMissingFile = 3, kConfigConflict = 4 };

/// Bad flag value or flag combination; maps to kUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A required input path does not exist; maps to kMissingFile.
struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads `key = value` lines; '#' starts a comment. Keys are normalized to
/// snake_case. Duplicate keys throw ConfigError.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Typed run parameters resolved from defaults, an optional config file and
/// explicit command-line flags, in increasing precedence.
class Settings {
 public:
  explicit Settings(CLI::App& app) : app_(&app) {}

  /// Registers `--key-with-dashes` (or `flag` when given) with a default.
  void add(const std::string& key, std::string default_value, const std::string& help,
           const std::string& flag = {});
  /// Boolean switch; the config file may set it with true/false.
  void add_switch(const std::string& key, bool default_value, const std::string& help);
  /// Options that must be given on the command line or in the config file.
  void require(const std::string& key) { required_.push_back(key); }

  /// Merges the config file; unknown keys are ConfigError. Call after parsing.
  void resolve(const std::map<std::string, std::string>& config);

  std::string str(const std::string& key) const;
  std::int64_t i64(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double f64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::int64_t> i64_list(const std::string& key) const;
  bool has(const std::string& key) const { return !str(key).empty(); }
  /// True when the value came from the command line or the config file.
  bool given(const std::string& key) const;

  /// Existing input file or directory named by `key`.
  std::filesystem::path input(const std::string& key) const;

  nlohmann::json snapshot() const;

 private:
  struct Entry {
    std::string value;
    std::string origin = "default";  // default, config, flag
    std::string cli_value;
    CLI::Option* option = nullptr;
    bool is_switch = false;
    bool switch_value = false;
  };
  const Entry& entry(const std::string& key) const;
  [[noreturn]] void bad_value(const std::string& key, const std::string& why) const;

  CLI::App* app_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> required_;
};

}  // namespace t2s::cli

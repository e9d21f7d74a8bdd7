// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "settings.hpp"

namespace t2s::cli {

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Settings> settings;
  std::string config_file;
  /// Where the resolved-config snapshot goes when --snapshot is not given.
  std::function<std::filesystem::path(const Settings&)> default_snapshot;
  std::function<void(const Settings&)> run;
};

/// Signed embedding terms of `arith` ("+t:text", "-s:shape_id", ...). They are
/// pulled out of argv before parsing because a leading '-' reads as a flag.
std::vector<std::string> extract_arith_terms(std::vector<std::string>& args);

std::vector<std::unique_ptr<Command>> register_commands(CLI::App& app, std::vector<std::string>& arith_terms);

}  // namespace t2s::cli

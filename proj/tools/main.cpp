// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "t2s/error.hpp"

namespace fs = std::filesystem;
using t2s::cli::ExitCode;

namespace {

void write_snapshot(const t2s::cli::Command& c, const std::string& explicit_path) {
  const fs::path path = explicit_path.empty() ? c.default_snapshot(*c.settings) : fs::path(explicit_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw t2s::IoError("cannot write " + path.string());
  os << nlohmann::json{{"command", c.app->get_name()}, {"settings", c.settings->snapshot()}}.dump(2) << '\n';
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> arith_terms = t2s::cli::extract_arith_terms(args);

  CLI::App app{"Text-to-shape embeddings, retrieval and generation"};
  app.require_subcommand(1);
  std::string snapshot_path;
  app.add_option("--snapshot", snapshot_path, "Where to write the resolved configuration");
  const auto commands = t2s::cli::register_commands(app, arith_terms);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ExitCode::kOk : ExitCode::kUsage;
  }
  for (const auto& c : commands) {
    if (!c->app->parsed()) continue;
    std::map<std::string, std::string> config;
    if (!c->config_file.empty()) config = t2s::cli::read_config_file(c->config_file);
    c->settings->resolve(config);
    if (c->settings->i64("threads") < 1) throw t2s::cli::UsageError("--threads must be >= 1");
    write_snapshot(*c, snapshot_path);
    c->run(*c->settings);
  }
  return ExitCode::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const t2s::cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return ExitCode::kUsage;
  } catch (const t2s::cli::MissingFileError& e) {
    std::cerr << "missing file: " << e.what() << '\n';
    return ExitCode::kMissingFile;
  } catch (const t2s::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return ExitCode::kMissingFile;
  } catch (const t2s::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ExitCode::kConfigConflict;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::kFailure;
  }
}

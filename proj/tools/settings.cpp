// SPDX-License-Identifier: Apache-2.0
#include "settings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "t2s/error.hpp"

namespace t2s::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string snake(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw MissingFileError("config file not found: " + path.string());
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = snake(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

void Settings::add(const std::string& key, std::string default_value, const std::string& help,
                   const std::string& flag) {
  Entry& e = entries_[key];
  e.value = std::move(default_value);
  const std::string name = flag.empty() ? "--" + std::string(key) : flag;
  std::string dashed = name;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  e.option = app_->add_option(dashed, e.cli_value, help);
  if (!e.value.empty()) e.option->default_str(e.value);
}

void Settings::add_switch(const std::string& key, bool default_value, const std::string& help) {
  Entry& e = entries_[key];
  e.is_switch = true;
  e.value = default_value ? "true" : "false";
  std::string dashed = "--" + key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  e.option = app_->add_flag(dashed, e.switch_value, help);
}

void Settings::resolve(const std::map<std::string, std::string>& config) {
  for (const auto& [key, value] : config) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "' for " + app_->get_name());
    it->second.value = value;
    it->second.origin = "config";
  }
  for (auto& [key, e] : entries_) {
    if (e.option->count() == 0) continue;
    e.value = e.is_switch ? (e.switch_value ? "true" : "false") : e.cli_value;
    e.origin = "flag";
  }
  for (const auto& key : required_) {
    if (str(key).empty()) {
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      throw UsageError("--" + dashed + " is required");
    }
  }
}

const Settings::Entry& Settings::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw std::logic_error("undeclared setting '" + key + "'");
  return it->second;
}

void Settings::bad_value(const std::string& key, const std::string& why) const {
  const Entry& e = entry(key);
  const std::string msg = key + " = '" + e.value + "': " + why;
  if (e.origin == "config") throw ConfigError(msg);
  throw UsageError(msg);
}

std::string Settings::str(const std::string& key) const { return entry(key).value; }

bool Settings::given(const std::string& key) const { return entry(key).origin != "default"; }

std::int64_t Settings::i64(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_number(str(key), v)) bad_value(key, "expected an integer");
  return v;
}

std::uint64_t Settings::u64(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_number(str(key), v)) bad_value(key, "expected a nonnegative integer");
  return v;
}

double Settings::f64(const std::string& key) const {
  const std::string s = str(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, "expected a number");
}

bool Settings::flag(const std::string& key) const {
  const std::string s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, "expected true or false");
}

std::vector<std::int64_t> Settings::i64_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  const std::string s = str(key);
  std::size_t start = 0;
  while (start <= s.size() && !s.empty()) {
    const auto comma = s.find(',', start);
    const std::string part = trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    std::int64_t v = 0;
    if (!parse_number(part, v)) bad_value(key, "expected a comma-separated integer list");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::filesystem::path Settings::input(const std::string& key) const {
  const std::filesystem::path p = str(key);
  if (p.empty()) throw UsageError(key + " is required");
  if (!std::filesystem::exists(p)) throw MissingFileError(key + ": no such file: " + p.string());
  return p;
}

nlohmann::json Settings::snapshot() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, e] : entries_) j[key] = {{"value", e.value}, {"origin", e.origin}};
  return j;
}

}  // namespace t2s::cli

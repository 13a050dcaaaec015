#include "sgn/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include "sgn/errors.hpp"

namespace sgn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ContractError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ContractError("config key '" + key + "': expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ContractError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_value_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config file: " + path);
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

RunConfig::RunConfig(std::vector<std::string> valid_keys) : valid_keys_(std::move(valid_keys)) {
  std::sort(valid_keys_.begin(), valid_keys_.end());
}

void RunConfig::check_key(const std::string& key) const {
  if (std::binary_search(valid_keys_.begin(), valid_keys_.end(), key)) return;
  std::string valid;
  for (const auto& k : valid_keys_) valid += (valid.empty() ? "" : ", ") + k;
  throw ContractError("unknown config key '" + key + "'; valid keys: " + valid);
}

void RunConfig::merge_file(const std::string& path) {
  for (const auto& [k, v] : read_key_value_file(path)) {
    check_key(k);
    // Values already set came from flags, which take precedence.
    values_.try_emplace(k, v);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  check_key(key);
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::optional<std::string> RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto v = get(key);
  return v ? parse_int(key, *v) : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(key, *v) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  return v ? parse_bool(key, *v) : fallback;
}

}  // namespace sgn

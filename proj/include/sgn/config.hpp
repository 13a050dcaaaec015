#pragma once

// Flat key=value configuration shared by checkpoints and the command line.

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sgn {

int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
// Shortest text that parses back to the same double.
std::string format_double(double v);

// Lines of `key=value`; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> read_key_value_file(const std::string& path);
void write_key_value_file(const std::string& path, const std::map<std::string, std::string>& kv);

// A config file merged with command-line overrides (overrides win). Keys
// outside `valid_keys` are rejected with a message listing the valid ones.
class RunConfig {
 public:
  explicit RunConfig(std::vector<std::string> valid_keys);

  void merge_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
  [[nodiscard]] std::string get_or(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] int get_int(const std::string& key, int fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }
  [[nodiscard]] const std::vector<std::string>& valid_keys() const { return valid_keys_; }

 private:
  void check_key(const std::string& key) const;

  std::vector<std::string> valid_keys_;
  std::map<std::string, std::string> values_;
};

}  // namespace sgn

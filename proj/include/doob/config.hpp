#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "doob/types.hpp"

namespace doob {

/// Flat `key = value` experiment configuration.
///
/// Grammar, one statement per line:
///   # comment              (also allowed after a value)
///   [section]              prefixes following keys with "section."
///   key = value            keys are [A-Za-z0-9_.]+, values run to end of line, trimmed
/// Duplicate keys are an error. Every key must be consumed by the command that runs the
/// config; leftovers are reported by `check_all_used`.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Whitespace- or comma-separated reals; "inf" and "-inf" are accepted.
  std::vector<double> get_list(const std::string& key) const;
  std::vector<std::string> get_words(const std::string& key) const;

  /// Throws ConfigError naming every key that no accessor read.
  void check_all_used() const;

  /// Canonical form: sorted `key = value` lines. Parses back to the same config.
  std::string echo() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  std::string origin_;
};

double parse_double(const std::string& text, const std::string& what);

}  // namespace doob

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace opdlab {

/// Plain-text `key = value` configuration.
///
/// One entry per line; `#` starts a comment; blank lines are ignored.
/// Keys are case-sensitive and may appear once. Lists are comma separated.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(std::string_view key) const;
  const std::string& require(std::string_view key) const;

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<long long> get_ints(std::string_view key) const;
  std::vector<std::string> get_strings(std::string_view key) const;

  void set(std::string key, std::string value);

  /// Throws InvalidArgument naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string, std::less<>>& allowed) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  /// Serializes in key order; `parse(to_string())` reproduces the entries.
  std::string to_string() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::string origin_ = "<string>";
};

/// Formats a double so that parsing it back yields the identical value.
std::string format_double(double value);

}  // namespace opdlab

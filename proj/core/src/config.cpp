#include "opdlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opdlab/common.hpp"

namespace opdlab {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    out.emplace_back(trim(value.substr(start, comma == std::string_view::npos ? value.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view text, std::string_view key) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty() || !std::isfinite(value)) {
    throw InvalidArgument("config key '" + std::string(key) + "': not a finite number: '" +
                          std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text, std::string_view key) {
  long long value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw InvalidArgument("config key '" + std::string(key) + "': not an integer: '" +
                          std::string(text) + "'");
  }
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view origin) {
  KeyValueConfig config;
  config.origin_ = std::string(origin);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument(std::string(origin) + ":" + std::to_string(line_no) +
                            ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InvalidArgument(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    if (config.entries_.contains(key)) {
      throw InvalidArgument(std::string(origin) + ":" + std::to_string(line_no) +
                            ": duplicate key '" + std::string(key) + "'");
    }
    config.entries_.emplace(std::string(key), std::string(value));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open config file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

bool KeyValueConfig::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string& KeyValueConfig::require(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw InvalidArgument(origin_ + ": missing required key '" + std::string(key) + "'");
  }
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string_view fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? std::string(fallback) : it->second;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_double(it->second, key);
}

long long KeyValueConfig::get_int(std::string_view key, long long fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_int(it->second, key);
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key '" + std::string(key) + "': not a boolean: '" + v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(std::string_view key) const {
  std::vector<double> out;
  const auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_double(item, key));
  return out;
}

std::vector<long long> KeyValueConfig::get_ints(std::string_view key) const {
  std::vector<long long> out;
  const auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_int(item, key));
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  return split_list(it->second);
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

void KeyValueConfig::reject_unknown(const std::set<std::string, std::less<>>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (!allowed.contains(key)) throw InvalidArgument(origin_ + ": unknown key '" + key + "'");
  }
}

std::string KeyValueConfig::to_string() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buffer, ptr);
}

}  // namespace opdlab

#pragma once

// In-process invocation of the command-line front end.

#include <sstream>
#include <string>
#include <vector>

#include "cli/cli.hpp"

namespace cli_runner {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

inline Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "opdlab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = opdlab::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Splits a two-line CSV (header, row) into a column -> value map.
inline std::vector<std::pair<std::string, std::string>> csv_row(const std::string& text) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::stringstream ss(text);
  std::string header;
  std::string row;
  std::getline(ss, header);
  std::getline(ss, row);
  const auto h = split(header);
  const auto v = split(row);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < h.size() && i < v.size(); ++i) out.emplace_back(h[i], v[i]);
  return out;
}

inline std::string cell(const std::string& csv, const std::string& column) {
  for (const auto& [k, v] : csv_row(csv)) {
    if (k == column) return v;
  }
  return {};
}

}  // namespace cli_runner

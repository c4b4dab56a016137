#pragma once

#include <filesystem>
#include <string>

namespace testing_paths {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(OPDLAB_FIXTURE_DIR) / name;
}

inline std::filesystem::path config(const std::string& name) {
  return std::filesystem::path(OPDLAB_SOURCE_DIR) / "configs" / name;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("opdlab-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_paths

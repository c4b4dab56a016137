#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace opdlab {

std::string_view version_string();

std::string read_text_file(const std::filesystem::path& path);
/// Writes bytes exactly as given (no newline translation).
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Output directory that appears under its final name only on commit().
/// An uncommitted staging directory is removed on destruction.
class StagedDirectory {
 public:
  /// Throws InvalidArgument if `target` exists and `overwrite` is false.
  StagedDirectory(std::filesystem::path target, bool overwrite);
  ~StagedDirectory();
  StagedDirectory(const StagedDirectory&) = delete;
  StagedDirectory& operator=(const StagedDirectory&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  const std::filesystem::path& target() const { return target_; }
  void write(std::string_view name, std::string_view content) const;
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool overwrite_ = false;
  bool committed_ = false;
};

}  // namespace opdlab

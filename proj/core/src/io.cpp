#include "opdlab/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "opdlab/common.hpp"

#ifndef OPDLAB_VERSION
#define OPDLAB_VERSION "0.0.0"
#endif

namespace opdlab {

std::string_view version_string() { return OPDLAB_VERSION; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path.string());
}

StagedDirectory::StagedDirectory(std::filesystem::path target, bool overwrite)
    : target_(std::move(target)), overwrite_(overwrite) {
  namespace fs = std::filesystem;
  if (target_.empty()) throw InvalidArgument("output directory must not be empty");
  if (fs::exists(target_) && !overwrite_) {
    throw InvalidArgument("output directory already exists: " + target_.string() + " (pass --force to replace)");
  }
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const std::string stem = ".staging-" + target_.filename().string() + "-" + std::to_string(::getpid());
  staging_ = parent / stem;
  fs::remove_all(staging_);
  fs::create_directory(staging_);
}

StagedDirectory::~StagedDirectory() {
  if (!committed_) {
    std::error_code ec;
    std::filesystem::remove_all(staging_, ec);
  }
}

void StagedDirectory::write(std::string_view name, std::string_view content) const {
  write_text_file(staging_ / std::string(name), content);
}

void StagedDirectory::commit() {
  namespace fs = std::filesystem;
  if (committed_) return;
  if (fs::exists(target_)) {
    if (!overwrite_) throw InvalidArgument("output directory appeared concurrently: " + target_.string());
    fs::remove_all(target_);
  }
  fs::rename(staging_, target_);
  committed_ = true;
}

}  // namespace opdlab

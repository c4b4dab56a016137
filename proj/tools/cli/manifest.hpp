#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "opdlab/trainer.hpp"
#include "opdlab/world.hpp"

namespace opdlab::cli {

struct NamedTrainConfig {
  /// File stem; names the run's output subdirectory.
  std::string name;
  TrainConfig config;
};

/// Experiment description. Paths inside are relative to the manifest's directory.
///
///   world = worlds/hard.conf
///   domain_b = worlds/domain_b.conf     (continual only)
///   train = train/opd.conf, train/caopd.conf
///   seed = 3                            (optional; overrides every train seed)
///   k_list = 1, 2, 4, 8, 16, 32         (ablate-k only)
///   thresholds = thresholds.conf
///   emit_svg = false
///   bins = 10
///   check = true
struct Manifest {
  std::filesystem::path source;
  std::string text;
  WorldSpec world;
  std::optional<WorldSpec> domain_b;
  std::vector<NamedTrainConfig> runs;
  std::optional<std::uint64_t> seed;
  std::vector<int> k_list;
  std::optional<std::filesystem::path> thresholds;
  std::optional<std::filesystem::path> output;
  bool emit_svg = false;
  int bins = 10;
  bool check = true;

  /// Applies `seed` to every run.
  void apply_seed(std::uint64_t value);
};

Manifest load_manifest(const std::filesystem::path& path);

}  // namespace opdlab::cli

#pragma once

#include <filesystem>
#include <string>

#include "opdlab/config.hpp"

namespace opdlab::cli {

/// Pass/fail bands used by the experiment commands.
struct Thresholds {
  /// |OCG| allowed for a calibrated regime.
  double ocg_band = 0.05;
  /// Maximum accuracy difference between runs that should share capability.
  double accuracy_band = 0.02;
  double opd_min_ocg = 0.2;
  double opd_min_confidence = 0.9;
  double proposition_tolerance = 1e-9;

  static Thresholds from_config(const KeyValueConfig& config);
  static Thresholds load(const std::filesystem::path& path);
  KeyValueConfig to_config() const;
};

}  // namespace opdlab::cli

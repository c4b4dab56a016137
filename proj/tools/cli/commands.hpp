#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "opdlab/transcripts.hpp"

namespace opdlab::cli {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool svg = false;
  std::optional<int> bins;
  std::optional<std::filesystem::path> threshold_file;
  bool force = false;
  /// Adds wall-clock columns; off by default so outputs are byte-stable.
  bool timing = false;
};

struct VerifyOptions {
  std::optional<std::filesystem::path> world;
  int trials = 20;
  /// Zero both context strengths (null worlds).
  bool null_world = false;
  /// Corrupts the chain-rule inputs after analysis to exercise the checker.
  bool inject_fault = false;
};

int cmd_verify_propositions(const VerifyOptions& verify, const CommonOptions& common, std::ostream& out,
                            std::ostream& err);
int cmd_train(const std::filesystem::path& manifest, const CommonOptions& common, bool parallel, std::ostream& out,
              std::ostream& err);
int cmd_ablate_k(const std::filesystem::path& manifest, const CommonOptions& common,
                 const std::vector<int>& k_override, std::ostream& out, std::ostream& err);
int cmd_continual(const std::filesystem::path& manifest, const CommonOptions& common, std::ostream& out,
                  std::ostream& err);
int cmd_eval_transcripts(const std::filesystem::path& jsonl, TranscriptMode mode, const CommonOptions& common,
                         double max_format_failure, std::ostream& out, std::ostream& err);

}  // namespace opdlab::cli

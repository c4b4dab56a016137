#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opdlab/metrics.hpp"

namespace opdlab {

struct TranscriptRecord {
  std::string id;
  std::optional<std::string> prompt_text;
  std::string response_text;
  /// Gold option letter (mcq) or gold action name (tool).
  std::string gold;
  std::string domain_tag;

  bool operator==(const TranscriptRecord&) const = default;
};

/// Value of the last line starting with "Confidence:", if it is a plain decimal in [0, 1].
std::optional<double> parse_confidence(std::string_view text);

/// Letter A-D inside the last <answer>...</answer> block.
std::optional<char> parse_mcq_answer(std::string_view text);

struct ToolAction {
  std::string action;
  /// Raw brace-balanced payload, possibly spanning lines.
  std::string input_json;

  bool operator==(const ToolAction&) const = default;
};

/// Last "Action:" line and the "Action Input:" payload that follows it.
std::optional<ToolAction> parse_tool_action(std::string_view text);

/// One JSON object per line: id, response_text, gold, domain_tag, optional prompt_text.
/// Errors carry the 1-based line number. Blank lines are skipped.
std::vector<TranscriptRecord> parse_jsonl(std::string_view text, std::string_view origin = "<string>");
std::vector<TranscriptRecord> ingest_jsonl(const std::filesystem::path& path);
std::string write_jsonl(std::span<const TranscriptRecord> records);

enum class TranscriptMode { kMcq, kTool };
std::string_view to_string(TranscriptMode mode);
TranscriptMode parse_transcript_mode(std::string_view text);

struct TranscriptEvaluation {
  CalibrationReport report;
  TranscriptMode mode = TranscriptMode::kMcq;
  std::size_t total = 0;
  /// Records without a parsable confidence; excluded from the metrics.
  std::size_t format_failures = 0;
  double format_failure_rate = 0.0;
  /// Confidence parsed but answer or action did not; scored incorrect.
  std::size_t answer_parse_failures = 0;
  std::vector<PredictionRecord> records;
};

TranscriptEvaluation evaluate_transcripts(std::span<const TranscriptRecord> records, TranscriptMode mode,
                                          int num_bins);

/// Counts and notes around the report; the report itself is serialized by report_to_json.
std::string evaluation_summary_json(const TranscriptEvaluation& evaluation);

}  // namespace opdlab

#include "opdlab/transcripts.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "opdlab/common.hpp"

namespace opdlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

bool starts_with_label(std::string_view line, std::string_view label, std::string_view& rest) {
  const auto t = trim(line);
  if (!t.starts_with(label)) return false;
  rest = t.substr(label.size());
  return true;
}

}  // namespace

std::optional<double> parse_confidence(std::string_view text) {
  static const std::regex numeral(R"(^([0-9]+(\.[0-9]+)?|\.[0-9]+)$)");
  std::optional<std::string_view> last;
  for (const auto line : split_lines(text)) {
    std::string_view rest;
    if (starts_with_label(line, "Confidence:", rest)) last = rest;
  }
  if (!last) return std::nullopt;
  const std::string value(trim(*last));
  if (!std::regex_match(value, numeral)) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) return std::nullopt;
  if (v < 0.0 || v > 1.0) return std::nullopt;
  return v;
}

std::optional<char> parse_mcq_answer(std::string_view text) {
  constexpr std::string_view open = "<answer>";
  constexpr std::string_view close = "</answer>";
  const auto start = text.rfind(open);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body_start = start + open.size();
  const auto end = text.find(close, body_start);
  if (end == std::string_view::npos) return std::nullopt;
  const auto body = trim(text.substr(body_start, end - body_start));
  if (body.size() != 1 || body[0] < 'A' || body[0] > 'D') return std::nullopt;
  return body[0];
}

std::optional<ToolAction> parse_tool_action(std::string_view text) {
  const auto lines = split_lines(text);
  std::optional<std::size_t> action_line;
  std::string_view action;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view rest;
    if (starts_with_label(lines[i], "Action:", rest)) {
      action_line = i;
      action = trim(rest);
    }
  }
  if (!action_line || action.empty()) return std::nullopt;

  // Offset of the first "Action Input:" line after the action line.
  std::size_t offset = 0;
  for (std::size_t i = 0; i <= *action_line; ++i) offset += lines[i].size() + 1;
  std::optional<std::size_t> payload_start;
  for (std::size_t i = *action_line + 1; i < lines.size(); ++i) {
    std::string_view rest;
    if (starts_with_label(lines[i], "Action Input:", rest)) {
      const auto brace = lines[i].find('{');
      const auto label = lines[i].find("Action Input:");
      if (brace == std::string_view::npos || brace < label) return std::nullopt;
      if (!trim(lines[i].substr(label + 13, brace - label - 13)).empty()) return std::nullopt;
      payload_start = offset + brace;
      break;
    }
    offset += lines[i].size() + 1;
  }
  if (!payload_start || *payload_start >= text.size()) return std::nullopt;

  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = *payload_start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) {
        return ToolAction{std::string(action), std::string(text.substr(*payload_start, i - *payload_start + 1))};
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- jsonl

namespace {

std::string required_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw InvalidArgument(where + ": missing field \"" + key + "\"");
  if (!it->is_string()) throw InvalidArgument(where + ": field \"" + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<TranscriptRecord> parse_jsonl(std::string_view text, std::string_view origin) {
  std::vector<TranscriptRecord> out;
  std::map<std::string, std::size_t> seen;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(i + 1);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidArgument(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw InvalidArgument(where + ": expected a JSON object");
    TranscriptRecord r;
    r.id = required_string(obj, "id", where);
    r.response_text = required_string(obj, "response_text", where);
    r.gold = required_string(obj, "gold", where);
    r.domain_tag = required_string(obj, "domain_tag", where);
    if (const auto it = obj.find("prompt_text"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw InvalidArgument(where + ": field \"prompt_text\" must be a string");
      r.prompt_text = it->get<std::string>();
    }
    if (const auto [pos, inserted] = seen.emplace(r.id, i + 1); !inserted) {
      throw InvalidArgument(where + ": duplicate id \"" + r.id + "\" (first seen on line " +
                            std::to_string(pos->second) + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TranscriptRecord> ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open transcript file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_jsonl(buffer.str(), path.string());
}

std::string write_jsonl(std::span<const TranscriptRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    if (r.prompt_text) j["prompt_text"] = *r.prompt_text;
    j["response_text"] = r.response_text;
    j["gold"] = r.gold;
    j["domain_tag"] = r.domain_tag;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- evaluation

std::string_view to_string(TranscriptMode mode) { return mode == TranscriptMode::kMcq ? "mcq" : "tool"; }

TranscriptMode parse_transcript_mode(std::string_view text) {
  if (text == "mcq") return TranscriptMode::kMcq;
  if (text == "tool") return TranscriptMode::kTool;
  throw InvalidArgument("unknown transcript mode '" + std::string(text) + "' (expected mcq or tool)");
}

TranscriptEvaluation evaluate_transcripts(std::span<const TranscriptRecord> records, TranscriptMode mode,
                                          int num_bins) {
  if (records.empty()) throw InvalidArgument("evaluate_transcripts: no records");
  TranscriptEvaluation out;
  out.mode = mode;
  out.total = records.size();
  for (const auto& r : records) {
    const auto confidence = parse_confidence(r.response_text);
    if (!confidence) {
      ++out.format_failures;
      continue;
    }
    const std::string_view gold = trim(r.gold);
    bool correct = false;
    if (mode == TranscriptMode::kMcq) {
      const auto letter = parse_mcq_answer(r.response_text);
      if (!letter) ++out.answer_parse_failures;
      correct = letter && gold.size() == 1 && gold[0] == *letter;
    } else {
      const auto action = parse_tool_action(r.response_text);
      if (!action) ++out.answer_parse_failures;
      correct = action && action->action == gold;
    }
    out.records.push_back({*confidence, correct, 1.0, r.domain_tag});
  }
  if (out.records.empty()) throw InvalidArgument("evaluate_transcripts: no record has a parsable confidence");
  out.format_failure_rate = static_cast<double>(out.format_failures) / static_cast<double>(out.total);
  out.report = report(out.records, num_bins);
  return out;
}

std::string evaluation_summary_json(const TranscriptEvaluation& e) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(e.mode));
  j["total"] = e.total;
  j["scored"] = e.records.size();
  j["format_failures"] = e.format_failures;
  j["format_failure_rate"] = e.format_failure_rate;
  j["answer_parse_failures"] = e.answer_parse_failures;
  if (e.mode == TranscriptMode::kTool) j["note"] = "correctness compares action names only; action input is not judged";
  return j.dump(2) + "\n";
}

}  // namespace opdlab

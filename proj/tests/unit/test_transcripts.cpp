#include <gtest/gtest.h>

#include "opdlab/common.hpp"
#include "opdlab/io.hpp"
#include "opdlab/transcripts.hpp"
#include "support/paths.hpp"

using namespace opdlab;

namespace {

std::string fixture_text(const std::string& name) { return read_text_file(testing_paths::fixture(name)); }

}  // namespace

TEST(Transcripts, McqResponseFormat) {
  const auto text = fixture_text("mcq_response.txt");
  EXPECT_EQ(parse_confidence(text), 0.8);
  EXPECT_EQ(parse_mcq_answer(text), 'A');
}

TEST(Transcripts, ToolResponseFormat) {
  const auto text = fixture_text("tool_response.txt");
  EXPECT_EQ(parse_confidence(text), 0.95);
  const auto action = parse_tool_action(text);
  ASSERT_TRUE(action);
  EXPECT_EQ(action->action, "Axolotl");
  EXPECT_EQ(action->input_json, "{}");
}

TEST(Transcripts, LastAnswerBlockWins) {
  const auto text = fixture_text("two_answer_blocks.txt");
  EXPECT_EQ(parse_mcq_answer(text), 'D');
  EXPECT_EQ(parse_confidence(text), 0.75);
}

TEST(Transcripts, MultilineActionInput) {
  const auto text = fixture_text("multiline_action.txt");
  const auto action = parse_tool_action(text);
  ASSERT_TRUE(action);
  EXPECT_EQ(action->action, "searchAxolotlImages");
  EXPECT_EQ(action->input_json.front(), '{');
  EXPECT_EQ(action->input_json.back(), '}');
  EXPECT_NE(action->input_json.find("braces } inside strings"), std::string::npos);
  EXPECT_EQ(parse_confidence(text), 0.6);
}

TEST(Transcripts, ConfidenceFormats) {
  EXPECT_EQ(parse_confidence("Confidence: 0.10"), 0.10);
  EXPECT_EQ(parse_confidence("Confidence: .9"), 0.9);
  EXPECT_EQ(parse_confidence("Confidence: 1"), 1.0);
  EXPECT_EQ(parse_confidence("Confidence: 0"), 0.0);
  EXPECT_EQ(parse_confidence("  Confidence:   0.35  \r"), 0.35);
  EXPECT_EQ(parse_confidence("Confidence: 0.2\nConfidence: 0.7"), 0.7);
  EXPECT_FALSE(parse_confidence("Confidence: 85%"));
  EXPECT_FALSE(parse_confidence("Confidence: 1.5"));
  EXPECT_FALSE(parse_confidence("Confidence: -0.1"));
  EXPECT_FALSE(parse_confidence("Confidence: high"));
  EXPECT_FALSE(parse_confidence("Confidence: 1e-1"));
  EXPECT_FALSE(parse_confidence("My confidence: 0.5"));
  EXPECT_FALSE(parse_confidence(""));
}

TEST(Transcripts, AnswerFormats) {
  EXPECT_EQ(parse_mcq_answer("<answer>B</answer>"), 'B');
  EXPECT_EQ(parse_mcq_answer("<answer>\n  C \n</answer>"), 'C');
  EXPECT_FALSE(parse_mcq_answer("<answer>E</answer>"));
  EXPECT_FALSE(parse_mcq_answer("<answer>AB</answer>"));
  EXPECT_FALSE(parse_mcq_answer("<answer>A"));
  EXPECT_FALSE(parse_mcq_answer("no tags"));
}

TEST(Transcripts, ToolActionFormats) {
  EXPECT_FALSE(parse_tool_action("Action: X\nConfidence: 0.5"));
  EXPECT_FALSE(parse_tool_action("Action: X\nAction Input: {\"a\": 1"));
  EXPECT_FALSE(parse_tool_action("Action: X\nAction Input: none"));
  const auto a = parse_tool_action("Action: A\nAction Input: {}\nAction: B\nAction Input: {\"k\": \"\\\"}\"}");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->action, "B");
  EXPECT_EQ(a->input_json, "{\"k\": \"\\\"}\"}");
}

TEST(Transcripts, JsonlParsingAndRoundTrip) {
  const auto records = ingest_jsonl(testing_paths::fixture("three_records.jsonl"));
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].id, "r1");
  EXPECT_EQ(parse_jsonl(write_jsonl(records)), records);
  EXPECT_TRUE(ingest_jsonl(testing_paths::fixture("empty.jsonl")).empty());
}

TEST(Transcripts, JsonlErrorsCarryLineNumbers) {
  try {
    ingest_jsonl(testing_paths::fixture("missing_response.jsonl"));
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("missing_response.jsonl:2"), std::string::npos) << e.what();
  }
  try {
    ingest_jsonl(testing_paths::fixture("duplicate_ids.jsonl"));
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_jsonl("{not json}\n"), InvalidArgument);
  EXPECT_THROW(ingest_jsonl(testing_paths::fixture("does_not_exist.jsonl")), InvalidArgument);
}

TEST(Transcripts, McqEvaluationCounts) {
  const auto records = ingest_jsonl(testing_paths::fixture("mcq_transcripts.jsonl"));
  const auto e = evaluate_transcripts(records, TranscriptMode::kMcq, 10);
  EXPECT_EQ(e.total, 10u);
  EXPECT_EQ(e.format_failures, 2u);
  EXPECT_EQ(e.format_failure_rate, 0.2);
  EXPECT_EQ(e.answer_parse_failures, 1u);
  EXPECT_EQ(e.report.n, 8u);
  EXPECT_EQ(e.report.accuracy, 0.5);
}

TEST(Transcripts, GoldenReportIsByteIdentical) {
  const auto records = ingest_jsonl(testing_paths::fixture("mcq_transcripts.jsonl"));
  const auto e = evaluate_transcripts(records, TranscriptMode::kMcq, 10);
  EXPECT_EQ(report_to_json(e.report), fixture_text("golden_mcq_report.json"));
}

TEST(Transcripts, ToolEvaluation) {
  const auto records = ingest_jsonl(testing_paths::fixture("tool_transcripts.jsonl"));
  const auto e = evaluate_transcripts(records, TranscriptMode::kTool, 10);
  EXPECT_EQ(e.total, 4u);
  EXPECT_EQ(e.format_failures, 1u);
  EXPECT_EQ(e.report.n, 3u);
  EXPECT_NEAR(e.report.accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(e.report.mean_confidence, 0.75, 1e-15);
}

TEST(Transcripts, AllFormatFailuresIsAnInputError) {
  const std::vector<TranscriptRecord> records{{"a", std::nullopt, "no confidence", "A", "x"}};
  EXPECT_THROW(evaluate_transcripts(records, TranscriptMode::kMcq, 10), InvalidArgument);
}

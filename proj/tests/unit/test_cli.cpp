#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "opdlab/io.hpp"
#include "support/cli_runner.hpp"
#include "support/paths.hpp"

using cli_runner::run;
using namespace opdlab;

namespace {

std::string fixture(const std::string& name) { return testing_paths::fixture(name).string(); }
std::string config(const std::string& name) { return testing_paths::config(name).string(); }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, cli::kExitInputError);
  EXPECT_EQ(run({"no-such-command"}).code, cli::kExitInputError);
  EXPECT_EQ(run({"train"}).code, cli::kExitInputError);
  EXPECT_EQ(run({"train", "/nonexistent/manifest.conf"}).code, cli::kExitInputError);
  EXPECT_EQ(run({"eval-transcripts", fixture("mcq_transcripts.jsonl"), "--mode", "essay"}).code,
            cli::kExitInputError);
  EXPECT_EQ(run({"verify-propositions", "--trials", "two"}).code, cli::kExitInputError);
}

TEST(Cli, HelpAndVersionExitZero) {
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, cli::kExitOk);
  EXPECT_NE(help.out.find("verify-propositions"), std::string::npos);
  const auto version = run({"--version"});
  EXPECT_EQ(version.code, cli::kExitOk);
  EXPECT_NE(version.out.find(version_string()), std::string::npos);
}

TEST(Cli, MalformedTranscriptFileExitsTwo) {
  const auto dir = testing_paths::scratch("cli-malformed");
  const auto r = run({"eval-transcripts", fixture("missing_response.jsonl"), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitInputError);
  EXPECT_NE(r.err.find(":2"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "o"));
}

TEST(Cli, EvalTranscriptsWritesReport) {
  const auto dir = testing_paths::scratch("cli-eval");
  const auto r = run({"eval-transcripts", fixture("mcq_transcripts.jsonl"), "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(read_text_file(dir / "o" / "report.json"), read_text_file(testing_paths::fixture("golden_mcq_report.json")));
  for (const char* f : {"report.csv", "bins.csv", "summary.json", "VERSION"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "o" / f)) << f;
  }
}

TEST(Cli, SingleBinEceEqualsAbsoluteOcg) {
  const auto dir = testing_paths::scratch("cli-bins1");
  const auto r = run({"eval-transcripts", fixture("mcq_transcripts.jsonl"), "--bins", "1", "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto csv = read_text_file(dir / "o" / "report.csv");
  const double ece = std::stod(cli_runner::cell(csv, "ece"));
  const double ocg = std::stod(cli_runner::cell(csv, "ocg"));
  EXPECT_NEAR(ece, std::fabs(ocg), 1e-12);
  EXPECT_EQ(cli_runner::cell(csv, "num_bins"), "1");
}

TEST(Cli, FormatFailureThreshold) {
  const auto dir = testing_paths::scratch("cli-format");
  EXPECT_EQ(run({"eval-transcripts", fixture("mcq_transcripts.jsonl"), "--max-format-failure", "0.1", "--out",
                 (dir / "a").string()})
                .code,
            cli::kExitViolation);
  EXPECT_EQ(run({"eval-transcripts", fixture("mcq_transcripts.jsonl"), "--max-format-failure", "0.2", "--out",
                 (dir / "b").string()})
                .code,
            cli::kExitOk);
}

TEST(Cli, ExistingOutputNeedsForce) {
  const auto dir = testing_paths::scratch("cli-force");
  const std::vector<std::string> args{"eval-transcripts", fixture("tool_transcripts.jsonl"), "--mode", "tool", "--out",
                                      (dir / "o").string()};
  ASSERT_EQ(run(args).code, cli::kExitOk);
  const auto again = run(args);
  EXPECT_EQ(again.code, cli::kExitInputError);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  auto forced = args;
  forced.push_back("--force");
  EXPECT_EQ(run(forced).code, cli::kExitOk);
}

TEST(Cli, OutputRootFromEnvironment) {
  const auto dir = testing_paths::scratch("cli-env");
  ::setenv(cli::kOutputRootEnv, dir.string().c_str(), 1);
  const auto r = run({"eval-transcripts", fixture("three_records.jsonl")});
  ::unsetenv(cli::kOutputRootEnv);
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "eval-transcripts-three_records" / "report.json"));
}

TEST(Cli, VerifyPropositionsPassesOnHelpfulAndNullWorlds) {
  const auto dir = testing_paths::scratch("cli-verify");
  const auto helpful = run({"verify-propositions", "--trials", "5", "--out", (dir / "h").string()});
  EXPECT_EQ(helpful.code, cli::kExitOk) << helpful.err;
  const auto null = run({"verify-propositions", "--trials", "5", "--null", "--out", (dir / "n").string()});
  EXPECT_EQ(null.code, cli::kExitOk) << null.err;
  EXPECT_NE(read_text_file(dir / "n" / "summary.txt").find("expect_null=1"), std::string::npos);
}

TEST(Cli, InjectedFaultIsReported) {
  const auto dir = testing_paths::scratch("cli-fault");
  const auto r = run({"verify-propositions", "--trials", "3", "--inject-fault", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitViolation);
  EXPECT_FALSE(read_text_file(dir / "o" / "violations.txt").empty());
}

TEST(Cli, VerifyIsDeterministic) {
  const auto dir = testing_paths::scratch("cli-verify-det");
  ASSERT_EQ(run({"verify-propositions", "--trials", "4", "--seed", "9", "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(run({"verify-propositions", "--trials", "4", "--seed", "9", "--out", (dir / "b").string()}).code, 0);
  ASSERT_EQ(run({"verify-propositions", "--trials", "4", "--seed", "10", "--out", (dir / "c").string()}).code, 0);
  EXPECT_EQ(read_text_file(dir / "a" / "trials.csv"), read_text_file(dir / "b" / "trials.csv"));
  EXPECT_NE(read_text_file(dir / "a" / "trials.csv"), read_text_file(dir / "c" / "trials.csv"));
}

TEST(Cli, BadThresholdFileExitsTwo) {
  const auto dir = testing_paths::scratch("cli-thresholds");
  write_text_file(dir / "t.conf", "ocg_band = wide\n");
  const auto r = run({"train", config("manifests/reference.conf"), "--threshold-file", (dir / "t.conf").string(),
                      "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitInputError);
}

TEST(Cli, ManifestWithUnknownKeyExitsTwo) {
  const auto dir = testing_paths::scratch("cli-manifest");
  write_text_file(dir / "m.conf", "world = " + config("worlds/hard.conf") + "\ntrian = x\n");
  EXPECT_EQ(run({"train", (dir / "m.conf").string(), "--out", (dir / "o").string()}).code, cli::kExitInputError);
}

TEST(Cli, AblationAcceptsNonPowerOfTwoK) {
  const auto dir = testing_paths::scratch("cli-ablate");
  const auto r = run({"ablate-k", config("manifests/ablate_k.conf"), "--k", "1", "8", "22", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out;
  EXPECT_NE(r.out.find("PASS K=22 targets on multiples of 1/K"), std::string::npos) << r.out;
}

TEST(Cli, TrainWritesPeriodicCheckpoints) {
  const auto dir = testing_paths::scratch("cli-checkpoints");
  write_text_file(dir / "short.conf", "regime = caopd\nsteps = 4\ncheckpoint_every = 2\nseed = 5\n");
  write_text_file(dir / "m.conf", "world = " + config("worlds/hard.conf") + "\ntrain = short.conf\ncheck = false\n");
  const auto r = run({"train", (dir / "m.conf").string(), "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto run_dir = dir / "o" / "short";
  EXPECT_TRUE(std::filesystem::exists(run_dir / "step2.opdck"));
  EXPECT_FALSE(std::filesystem::exists(run_dir / "step3.opdck"));
  EXPECT_EQ(read_text_file(run_dir / "step4.opdck"), read_text_file(run_dir / "final.opdck"));
}

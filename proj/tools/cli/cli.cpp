#include "cli/cli.hpp"

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "opdlab/common.hpp"
#include "opdlab/io.hpp"

namespace opdlab::cli {

namespace {

void add_common(CLI::App* cmd, CommonOptions& o, bool with_thresholds = true) {
  cmd->add_option("--seed", o.seed, "Root seed (overrides manifest and config seeds)");
  cmd->add_option("--out", o.out, "Output directory (default: $" + std::string(kOutputRootEnv) + "/<command>-<name>)");
  cmd->add_flag("--svg", o.svg, "Also write SVG figures");
  cmd->add_option("--bins", o.bins, "Reliability bins for ECE (default 10)");
  if (with_thresholds) cmd->add_option("--threshold-file", o.threshold_file, "Acceptance thresholds file");
  cmd->add_flag("--force", o.force, "Replace an existing output directory");
  cmd->add_flag("--timing", o.timing, "Add wall-clock columns to logs");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibration laboratory for on-policy distillation in enumerable toy worlds", "opdlab"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  CommonOptions common;

  VerifyOptions verify;
  auto* vp = app.add_subcommand("verify-propositions", "Check the information-theoretic identities on random worlds");
  vp->add_option("--world", verify.world, "Base world config")->check(CLI::ExistingFile);
  vp->add_option("--trials", verify.trials, "Number of randomized worlds");
  vp->add_flag("--null", verify.null_world, "Zero the context strengths");
  vp->add_flag("--inject-fault", verify.inject_fault, "Corrupt the analysis to test the checker");
  add_common(vp, common);

  std::string manifest;
  bool parallel = false;
  auto* tr = app.add_subcommand("train", "Train every regime in a manifest on the same world and seed");
  tr->add_option("manifest", manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  tr->add_flag("--parallel", parallel, "Run regimes concurrently");
  add_common(tr, common);

  std::vector<int> k_list;
  auto* ab = app.add_subcommand("ablate-k", "One CaOPD run per rollout budget K");
  ab->add_option("manifest", manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  ab->add_option("--k", k_list, "K values (default from manifest, else 1 2 4 8 16 32)");
  add_common(ab, common);

  auto* ct = app.add_subcommand("continual", "Train on domain A then domain B and track calibration on both");
  ct->add_option("manifest", manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  add_common(ct, common);

  std::string jsonl;
  std::string mode = "mcq";
  double max_failure = 1.0;
  auto* ev = app.add_subcommand("eval-transcripts", "Score verbalized-confidence transcripts");
  ev->add_option("transcripts", jsonl, "JSONL transcript file")->required()->check(CLI::ExistingFile);
  ev->add_option("--mode", mode, "mcq or tool")->check(CLI::IsMember({"mcq", "tool"}));
  ev->add_option("--max-format-failure", max_failure, "Exit 1 when the format failure rate exceeds this");
  add_common(ev, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (vp->parsed()) return cmd_verify_propositions(verify, common, out, err);
    if (tr->parsed()) return cmd_train(manifest, common, parallel, out, err);
    if (ab->parsed()) return cmd_ablate_k(manifest, common, k_list, out, err);
    if (ct->parsed()) return cmd_continual(manifest, common, out, err);
    if (ev->parsed()) return cmd_eval_transcripts(jsonl, parse_transcript_mode(mode), common, max_failure, out, err);
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitViolation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace opdlab::cli

#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "cli/cli.hpp"
#include "cli/manifest.hpp"
#include "cli/thresholds.hpp"
#include "opdlab/checkpoint.hpp"
#include "opdlab/infotheory.hpp"
#include "opdlab/io.hpp"
#include "opdlab/metrics.hpp"
#include "opdlab/svg.hpp"
#include "opdlab/trainer.hpp"

namespace opdlab::cli {

namespace fs = std::filesystem;

namespace {

fs::path output_dir(const CommonOptions& common, const std::optional<fs::path>& from_manifest,
                    const std::string& default_name) {
  if (common.out) return *common.out;
  if (from_manifest) return *from_manifest;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "opdlab-runs") / default_name;
}

Thresholds resolve_thresholds(const CommonOptions& common, const std::optional<fs::path>& from_manifest) {
  if (common.threshold_file) return Thresholds::load(*common.threshold_file);
  if (from_manifest) return Thresholds::load(*from_manifest);
  return {};
}

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;
  double threshold = 0.0;
  bool passed = false;
};

class CheckList {
 public:
  void at_least(std::string name, double value, double threshold) {
    add(std::move(name), value, ">=", threshold, value >= threshold);
  }
  void at_most(std::string name, double value, double threshold) {
    add(std::move(name), value, "<=", threshold, value <= threshold);
  }
  void less_than(std::string name, double value, double threshold) {
    add(std::move(name), value, "<", threshold, value < threshold);
  }
  void holds(std::string name, bool condition) { add(std::move(name), condition ? 1.0 : 0.0, "==", 1.0, condition); }

  bool all_passed() const {
    return std::all_of(checks_.begin(), checks_.end(), [](const Check& c) { return c.passed; });
  }
  bool empty() const { return checks_.empty(); }

  std::string csv() const {
    std::ostringstream s;
    s << "check,value,relation,threshold,passed\n";
    for (const auto& c : checks_) {
      s << c.name << ',' << format_double(c.value) << ',' << c.relation << ',' << format_double(c.threshold) << ','
        << (c.passed ? "true" : "false") << '\n';
    }
    return s.str();
  }

  void print(std::ostream& out) const {
    for (const auto& c : checks_) {
      out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << format_double(c.value) << ' ' << c.relation << ' '
          << format_double(c.threshold) << '\n';
    }
  }

 private:
  void add(std::string name, double value, const char* relation, double threshold, bool passed) {
    checks_.push_back({std::move(name), value, relation, threshold, passed});
  }
  std::vector<Check> checks_;
};

std::string version_stamp() { return "opdlab " + std::string(version_string()) + "\n"; }

void write_provenance(const StagedDirectory& dir, const Manifest& m, const Thresholds& t) {
  dir.write("manifest.conf", m.text);
  dir.write("VERSION", version_stamp());
  dir.write("world.conf", m.world.to_config().to_string());
  if (m.domain_b) dir.write("domain_b.conf", m.domain_b->to_config().to_string());
  dir.write("thresholds.conf", t.to_config().to_string());
}

Manifest load_with_overrides(const fs::path& path, const CommonOptions& common) {
  auto m = load_manifest(path);
  if (common.seed) m.apply_seed(*common.seed);
  if (common.bins) {
    if (*common.bins < 1) throw InvalidArgument("--bins must be >= 1");
    m.bins = *common.bins;
  }
  if (common.svg) m.emit_svg = true;
  return m;
}

std::string default_name(std::string_view command, const fs::path& input) {
  return std::string(command) + "-" + input.stem().string();
}

std::string report_summary_line(const CalibrationReport& r) {
  std::ostringstream s;
  s << "accuracy=" << format_double(r.accuracy) << " mean_confidence=" << format_double(r.mean_confidence)
    << " ocg=" << format_double(r.ocg) << " ece=" << format_double(r.ece) << " brier=" << format_double(r.brier)
    << " spr=" << (r.spr ? format_double(*r.spr) : "undefined")
    << " auroc=" << (r.auroc ? format_double(*r.auroc) : "undefined");
  return s.str();
}

std::string report_row(const CalibrationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; };
  return format_double(r.accuracy) + "," + format_double(r.mean_confidence) + "," + format_double(r.ocg) + "," +
         format_double(r.ece) + "," + format_double(r.brier) + "," + opt(r.spr) + "," + opt(r.auroc);
}

constexpr const char* kReportColumns = "accuracy,mean_confidence,ocg,ece,brier,spr,auroc";

struct RunResult {
  TrainingLog log;
  CalibrationReport report;
  Policy policy;
};

RunResult run_training(const TrainConfig& config, const World& world, int bins, const StepObserver& observer = {}) {
  auto state = TrainerState::from_policy(Policy::from_world(world));
  RunResult r;
  r.log = train(config, world, state, observer);
  r.report = report(exact_prediction_records(state.policy, world), bins);
  r.policy = std::move(state.policy);
  return r;
}

std::vector<double> column(const TrainingLog& log, double StepRecord::*field) {
  std::vector<double> out;
  for (const auto& r : log.records) out.push_back(r.*field);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- verify-propositions

int cmd_verify_propositions(const VerifyOptions& verify, const CommonOptions& common, std::ostream& out,
                            std::ostream& err) {
  if (verify.trials < 1) throw InvalidArgument("--trials must be >= 1");
  WorldSpec base;
  std::string base_text = base.to_config().to_string();
  if (verify.world) {
    base_text = read_text_file(*verify.world);
    base = WorldSpec::from_config(KeyValueConfig::parse(base_text, verify.world->string()));
  }
  if (verify.null_world) {
    base.context_helpfulness = 0.0;
    base.context_confidence_bias = 0.0;
  }
  const Thresholds thresholds = resolve_thresholds(common, std::nullopt);
  const std::uint64_t seed = common.seed.value_or(1);
  const double informative_mass = base.p_demonstration + base.p_feedback + base.p_misleading;
  PropositionExpectations expect;
  expect.expect_null = base.context_helpfulness == 0.0;
  expect.expect_strict = !expect.expect_null && informative_mass > 0.0;
  expect.tolerance = thresholds.proposition_tolerance;

  StagedDirectory dir(output_dir(common, std::nullopt,
                                 default_name("verify-propositions", verify.world.value_or("default"))),
                      common.force);
  std::ostringstream csv;
  csv << "trial,world_seed,mi_A_Z_given_X,entropy_gap,chain_rule_residual,mi_R_Z_given_X,projection_error,"
         "projection_argmin_ok,projection_identity_residual,optimism_gap,optimism_gap_unfiltered,violations\n";
  int failed = 0;
  std::ostringstream details;
  for (int trial = 0; trial < verify.trials; ++trial) {
    WorldSpec spec = base;
    spec.seed = derive_seed(seed, {stream_id(Stream::kTrial), static_cast<std::uint64_t>(trial)});
    Rng rng(seed, {stream_id(Stream::kTrial), static_cast<std::uint64_t>(trial), 1});
    spec.difficulty.assign(static_cast<std::size_t>(spec.num_prompts), 0.0);
    for (double& d : spec.difficulty) d = 0.1 + 0.9 * rng.uniform();
    const World world = World::build(spec);
    const Policy policy = Policy::from_world(world);
    auto report = analyze_propositions(policy, world, spec.seed);
    if (verify.inject_fault) report.mi_A_Z_given_X += 1e-3;
    const auto violations = check_propositions(report, expect);
    const double gap = report.entropy_A_given_X - report.expected_teacher_entropy;
    csv << trial << ',' << spec.seed << ',' << format_double(report.mi_A_Z_given_X) << ',' << format_double(gap)
        << ',' << format_double(gap - report.mi_A_Z_given_X) << ',' << format_double(report.mi_R_Z_given_X) << ','
        << format_double(report.projection_error) << ',' << (report.projection.argmin_is_mu ? "true" : "false")
        << ',' << format_double(report.projection.max_identity_residual) << ','
        << format_double(report.optimism_gap) << ',' << format_double(report.optimism_gap_unfiltered) << ','
        << violations.size() << '\n';
    if (!violations.empty()) {
      ++failed;
      for (const auto& v : violations) details << "trial " << trial << ": " << v << '\n';
    }
  }
  std::ostringstream summary;
  summary << "trials=" << verify.trials << "\nfailed=" << failed << "\nexpect_strict=" << expect.expect_strict
          << "\nexpect_null=" << expect.expect_null << "\ntolerance=" << format_double(expect.tolerance)
          << "\nresult=" << (failed == 0 ? "pass" : "fail") << '\n';
  dir.write("world.conf", base_text);
  dir.write("VERSION", version_stamp());
  dir.write("thresholds.conf", thresholds.to_config().to_string());
  dir.write("trials.csv", csv.str());
  dir.write("summary.txt", summary.str());
  dir.write("violations.txt", details.str());
  dir.commit();

  err << details.str();
  out << "verify-propositions: " << (verify.trials - failed) << "/" << verify.trials << " trials passed -> "
      << dir.target().string() << '\n';
  return failed == 0 ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------- train

int cmd_train(const fs::path& manifest_path, const CommonOptions& common, bool parallel, std::ostream& out,
              std::ostream& err) {
  const Manifest m = load_with_overrides(manifest_path, common);
  const Thresholds thresholds = resolve_thresholds(common, m.thresholds);
  const World world = World::build(m.world);
  StagedDirectory dir(output_dir(common, m.output, default_name("train", manifest_path)), common.force);

  std::vector<RunResult> results(m.runs.size());
  std::vector<std::exception_ptr> errors(m.runs.size());
  for (const auto& run : m.runs) fs::create_directories(dir.path() / run.name);
  const auto run = [&](std::size_t i) {
    const auto& cfg = m.runs[i].config;
    // step is 0-based; a checkpoint after every N completed steps
    const auto checkpoint = [&](const StepRecord& rec, const TrainerState& state) {
      if (cfg.checkpoint_every > 0 && (rec.step + 1) % cfg.checkpoint_every == 0) {
        save_checkpoint(state.policy, dir.path() / m.runs[i].name / ("step" + std::to_string(rec.step + 1) + ".opdck"));
      }
    };
    try {
      results[i] = run_training(cfg, world, m.bins, checkpoint);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (parallel) {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < m.runs.size(); ++i) pool.emplace_back(run, i);
  } else {
    for (std::size_t i = 0; i < m.runs.size(); ++i) run(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  write_provenance(dir, m, thresholds);
  std::ostringstream summary;
  summary << "run,regime,context_builder,k_rollouts,steps," << kReportColumns << '\n';
  for (std::size_t i = 0; i < m.runs.size(); ++i) {
    const auto& cfg = m.runs[i].config;
    const auto& r = results[i];
    const fs::path sub = m.runs[i].name;
    dir.write((sub / "train.conf").string(), cfg.to_config().to_string());
    dir.write((sub / "log.csv").string(), training_log_to_csv(r.log, common.timing));
    dir.write((sub / "log.json").string(), training_log_to_json(r.log, common.timing));
    dir.write((sub / "report.json").string(), report_to_json(r.report));
    dir.write((sub / "report.csv").string(), report_to_csv(r.report));
    dir.write((sub / "bins.csv").string(), bins_to_csv(r.report));
    save_checkpoint(r.policy, dir.path() / sub / "final.opdck");
    if (m.emit_svg) {
      dir.write((sub / "reliability.svg").string(), reliability_svg(r.report, m.runs[i].name));
      dir.write((sub / "curves.svg").string(),
                line_chart_svg({{"accuracy", column(r.log, &StepRecord::accuracy)},
                                {"mean confidence", column(r.log, &StepRecord::mean_confidence)}},
                               m.runs[i].name, "exact value"));
      dir.write((sub / "loss.svg").string(),
                line_chart_svg({{"mean loss", column(r.log, &StepRecord::mean_loss)}}, m.runs[i].name, "loss"));
    }
    summary << m.runs[i].name << ',' << regime_label(cfg.regime) << ',' << to_string(cfg.context_builder) << ','
            << cfg.k_rollouts << ',' << cfg.steps << ',' << report_row(r.report) << '\n';
    out << m.runs[i].name << " (" << regime_label(cfg.regime) << "): " << report_summary_line(r.report) << '\n';
  }
  dir.write("summary.csv", summary.str());

  CheckList checks;
  if (m.check) {
    std::vector<double> accuracies;
    for (std::size_t i = 0; i < m.runs.size(); ++i) {
      const auto& name = m.runs[i].name;
      const auto& rep = results[i].report;
      switch (m.runs[i].config.regime) {
        case Regime::kOpd:
          checks.at_least(name + " ocg", rep.ocg, thresholds.opd_min_ocg);
          checks.at_least(name + " mean_confidence", rep.mean_confidence, thresholds.opd_min_confidence);
          accuracies.push_back(rep.accuracy);
          break;
        case Regime::kCaopd:
          checks.at_most(name + " |ocg|", std::fabs(rep.ocg), thresholds.ocg_band);
          accuracies.push_back(rep.accuracy);
          break;
        case Regime::kRlcrLite:
          break;
      }
    }
    if (accuracies.size() > 1) {
      const auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
      checks.at_most("distillation accuracy spread", *hi - *lo, thresholds.accuracy_band);
    }
    dir.write("checks.csv", checks.csv());
  }
  dir.commit();
  checks.print(out);
  out << "outputs: " << dir.target().string() << '\n';
  (void)err;
  return checks.all_passed() ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------- ablate-k

int cmd_ablate_k(const fs::path& manifest_path, const CommonOptions& common, const std::vector<int>& k_override,
                 std::ostream& out, std::ostream& err) {
  Manifest m = load_with_overrides(manifest_path, common);
  if (m.runs.size() != 1) throw InvalidArgument("ablate-k expects exactly one train config in the manifest");
  std::vector<int> ks = !k_override.empty() ? k_override : m.k_list;
  if (ks.empty()) ks = {1, 2, 4, 8, 16, 32};
  for (const int k : ks) {
    if (k < 1) throw InvalidArgument("K values must be >= 1");
  }
  const Thresholds thresholds = resolve_thresholds(common, m.thresholds);
  const World world = World::build(m.world);
  StagedDirectory dir(output_dir(common, m.output, default_name("ablate-k", manifest_path)), common.force);
  write_provenance(dir, m, thresholds);
  dir.write("train.conf", m.runs[0].config.to_config().to_string());

  std::ostringstream csv;
  csv << "k," << kReportColumns << ",target_granularity,distinct_targets,target_support\n";
  std::map<int, CalibrationReport> reports;
  std::map<int, std::set<double>> supports;
  for (const int k : ks) {
    TrainConfig cfg = m.runs[0].config;
    cfg.k_rollouts = k;
    const auto r = run_training(cfg, world, m.bins);
    std::set<double> support;
    for (const auto& [value, count] : r.log.target_histogram) support.insert(value);
    std::string support_text;
    for (const double v : support) support_text += (support_text.empty() ? "" : ";") + format_double(v);
    csv << k << ',' << report_row(r.report) << ',' << format_double(1.0 / k) << ',' << support.size() << ','
        << support_text << '\n';
    dir.write("k" + std::to_string(k) + "_log.csv", training_log_to_csv(r.log, common.timing));
    out << "K=" << k << ": " << report_summary_line(r.report) << " targets=" << support.size() << '\n';
    reports[k] = r.report;
    supports[k] = std::move(support);
  }
  dir.write("ablation.csv", csv.str());
  if (m.emit_svg) {
    Series acc{"accuracy", {}};
    Series ocg{"ocg", {}};
    for (const int k : ks) {
      acc.values.push_back(reports[k].accuracy);
      ocg.values.push_back(reports[k].ocg);
    }
    dir.write("ablation.svg", line_chart_svg({acc, ocg}, "K ablation (x = position in K list)", "value"));
  }

  CheckList checks;
  if (m.check) {
    for (const auto& [k, support] : supports) {
      bool on_grid = true;
      // raw targets are successes / k, so the nearest multiple must reproduce them exactly
      for (const double v : support) on_grid = on_grid && v == std::round(v * k) / k;
      checks.holds("K=" + std::to_string(k) + " targets on multiples of 1/K", on_grid);
    }
    if (supports.contains(1)) {
      const bool binary = std::all_of(supports[1].begin(), supports[1].end(), [](double v) { return v == 0.0 || v == 1.0; });
      checks.holds("K=1 targets binary", binary);
    }
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& [k, rep] : reports) {
      lo = std::min(lo, rep.accuracy);
      hi = std::max(hi, rep.accuracy);
    }
    checks.at_most("accuracy spread across K", hi - lo, thresholds.accuracy_band);
    if (reports.contains(1) && reports.contains(8)) {
      checks.less_than("ocg(K=8) vs ocg(K=1)", reports[8].ocg, reports[1].ocg);
    }
    dir.write("checks.csv", checks.csv());
  }
  dir.commit();
  checks.print(out);
  out << "outputs: " << dir.target().string() << '\n';
  (void)err;
  return checks.all_passed() ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------- continual

int cmd_continual(const fs::path& manifest_path, const CommonOptions& common, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_overrides(manifest_path, common);
  if (!m.domain_b) throw InvalidArgument("continual needs a domain_b world in the manifest");
  const Thresholds thresholds = resolve_thresholds(common, m.thresholds);
  const World world_a = World::build(m.world);
  const World world_b = World::build(*m.domain_b);
  for (const PromptId x : world_b.prompts()) {
    if (world_a.has_prompt(x)) throw InvalidArgument("domains share prompt id " + std::to_string(x));
  }
  StagedDirectory dir(output_dir(common, m.output, default_name("continual", manifest_path)), common.force);
  write_provenance(dir, m, thresholds);

  std::ostringstream csv;
  csv << "run,regime,phase,domain," << kReportColumns << '\n';
  // (run, phase, domain) -> report
  std::map<std::tuple<std::string, std::string, std::string>, CalibrationReport> reports;
  for (const auto& run : m.runs) {
    Policy policy = Policy::from_world(world_a);
    policy.add_world(world_b);
    auto state = TrainerState::from_policy(std::move(policy));
    const auto evaluate = [&](const std::string& phase) {
      for (const auto& [domain, world] : {std::pair<std::string, const World*>{"A", &world_a}, {"B", &world_b}}) {
        const auto rep = report(exact_prediction_records(state.policy, *world), m.bins);
        csv << run.name << ',' << regime_label(run.config.regime) << ',' << phase << ',' << domain << ','
            << report_row(rep) << '\n';
        out << run.name << ' ' << phase << " domain " << domain << ": " << report_summary_line(rep) << '\n';
        reports[{run.name, phase, domain}] = rep;
      }
    };
    const auto log_a = train(run.config, world_a, state);
    evaluate("after_A");
    const auto log_b = train(run.config, world_b, state);
    evaluate("after_B");
    dir.write(run.name + "_phaseA_log.csv", training_log_to_csv(log_a, common.timing));
    dir.write(run.name + "_phaseB_log.csv", training_log_to_csv(log_b, common.timing));
    dir.write(run.name + "_train.conf", run.config.to_config().to_string());
    if (m.emit_svg) {
      dir.write(run.name + "_A_reliability.svg",
                reliability_svg(reports[{run.name, "after_B", "A"}], run.name + " domain A after B"));
    }
  }
  dir.write("continual.csv", csv.str());

  CheckList checks;
  if (m.check) {
    const NamedTrainConfig* opd = nullptr;
    const NamedTrainConfig* caopd = nullptr;
    for (const auto& run : m.runs) {
      if (run.config.regime == Regime::kOpd && !opd) opd = &run;
      if (run.config.regime == Regime::kCaopd && !caopd) caopd = &run;
    }
    if (opd) {
      checks.at_least(opd->name + " ECE on A after B vs after A", reports[{opd->name, "after_B", "A"}].ece,
                      reports[{opd->name, "after_A", "A"}].ece);
    }
    if (opd && caopd) {
      checks.less_than("ECE on A after B: " + caopd->name + " vs " + opd->name,
                       reports[{caopd->name, "after_B", "A"}].ece, reports[{opd->name, "after_B", "A"}].ece);
      checks.at_most("accuracy gap on B after B",
                     std::fabs(reports[{caopd->name, "after_B", "B"}].accuracy -
                               reports[{opd->name, "after_B", "B"}].accuracy),
                     thresholds.accuracy_band);
    }
    dir.write("checks.csv", checks.csv());
  }
  dir.commit();
  checks.print(out);
  out << "outputs: " << dir.target().string() << '\n';
  (void)err;
  return checks.all_passed() ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------- eval-transcripts

int cmd_eval_transcripts(const fs::path& jsonl, TranscriptMode mode, const CommonOptions& common,
                         double max_format_failure, std::ostream& out, std::ostream& err) {
  const int bins = common.bins.value_or(10);
  if (bins < 1) throw InvalidArgument("--bins must be >= 1");
  const auto records = ingest_jsonl(jsonl);
  const auto evaluation = evaluate_transcripts(records, mode, bins);
  StagedDirectory dir(output_dir(common, std::nullopt, default_name("eval-transcripts", jsonl)), common.force);
  dir.write("VERSION", version_stamp());
  dir.write("report.json", report_to_json(evaluation.report));
  dir.write("report.csv", report_to_csv(evaluation.report));
  dir.write("bins.csv", bins_to_csv(evaluation.report));
  dir.write("summary.json", evaluation_summary_json(evaluation));
  if (common.svg) dir.write("reliability.svg", reliability_svg(evaluation.report, jsonl.filename().string()));
  dir.commit();

  out << "n=" << evaluation.report.n << " " << report_summary_line(evaluation.report)
      << " format_failure_rate=" << format_double(evaluation.format_failure_rate)
      << " answer_parse_failures=" << evaluation.answer_parse_failures << '\n';
  if (evaluation.format_failure_rate > max_format_failure) {
    err << "format failure rate " << format_double(evaluation.format_failure_rate) << " exceeds "
        << format_double(max_format_failure) << '\n';
    return kExitViolation;
  }
  return kExitOk;
}

}  // namespace opdlab::cli

#include <gtest/gtest.h>

#include <cmath>

#include "opdlab/trainer.hpp"

using namespace opdlab;

namespace {

WorldSpec small_hard_spec() {
  WorldSpec s;
  s.num_prompts = 6;
  s.answer_vocab_size = 4;
  s.answer_length = 2;
  s.difficulty = {0.4, 0.6, 0.8, 1.0, 0.5, 0.9};
  s.context_helpfulness = 0.2;
  s.context_confidence_bias = 4.0;
  s.seed = 13;
  return s;
}

TrainConfig quick(Regime regime, int steps = 20) {
  TrainConfig c;
  c.regime = regime;
  c.steps = steps;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(TrainConfig, RoundTripAndValidation) {
  TrainConfig c;
  c.regime = Regime::kCaopd;
  c.context_builder = ContextBuilder::kSdpo;
  c.target_source = TargetSource::kSelfConsistency;
  c.k_rollouts = 3;
  c.learning_rate = 0.3;
  c.momentum = 0.9;
  c.seed = 123456789;
  c.threads = 4;
  EXPECT_EQ(TrainConfig::from_config(c.to_config()), c);
  auto bad = c.to_config();
  bad.set("learning_rte", "1");
  EXPECT_THROW(TrainConfig::from_config(bad), InvalidArgument);
  auto bad_k = c;
  bad_k.k_rollouts = 0;
  EXPECT_THROW(bad_k.validate(), InvalidArgument);
  EXPECT_THROW(parse_regime("ppo"), InvalidArgument);
  EXPECT_EQ(parse_regime("caopd"), Regime::kCaopd);
  EXPECT_EQ(regime_label(Regime::kRlcrLite), "rlcr_lite_simplified");
}

TEST(Evaluation, MatchesEnumeration) {
  auto s = small_hard_spec();
  s.prompt_weights = {1, 2, 3, 1, 2, 3};
  const auto w = World::build(s);
  const auto p = Policy::from_world(w);
  double acc = 0.0;
  double conf = 0.0;
  for (const PromptId x : w.prompts()) {
    for (const auto& wt : enumerate_trajectories(p, w, x, {})) {
      conf += w.weight(x) * wt.probability * wt.trajectory.val_c;
      if (w.verify(x, wt.trajectory.answer_path)) acc += w.weight(x) * wt.probability;
    }
  }
  const auto e = evaluate_exact(p, w);
  EXPECT_NEAR(e.accuracy, acc, 1e-12);
  EXPECT_NEAR(e.mean_confidence, conf, 1e-12);
  EXPECT_DOUBLE_EQ(e.ocg, e.mean_confidence - e.accuracy);

  const auto records = exact_prediction_records(p, w);
  EXPECT_NEAR(accuracy(records), acc, 1e-12);
  EXPECT_NEAR(mean_confidence(records), conf, 1e-12);
}

TEST(Trainer, ZeroStepsLeavesPolicyUnchanged) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  const auto before = state.policy;
  const auto log = train(quick(Regime::kOpd, 0), w, state);
  EXPECT_TRUE(log.records.empty());
  EXPECT_TRUE(state.policy == before);
}

TEST(Trainer, SeedDeterminismAndThreadInvariance) {
  const auto w = World::build(small_hard_spec());
  for (const auto regime : {Regime::kOpd, Regime::kCaopd, Regime::kRlcrLite}) {
    auto a = TrainerState::from_policy(Policy::from_world(w));
    auto b = TrainerState::from_policy(Policy::from_world(w));
    auto c = TrainerState::from_policy(Policy::from_world(w));
    auto cfg = quick(regime, 10);
    const auto la = train(cfg, w, a);
    const auto lb = train(cfg, w, b);
    cfg.threads = 4;
    const auto lc = train(cfg, w, c);
    EXPECT_EQ(training_log_to_csv(la), training_log_to_csv(lb));
    EXPECT_EQ(training_log_to_csv(la), training_log_to_csv(lc));
    EXPECT_EQ(a.policy.parameters().logits, c.policy.parameters().logits);
    EXPECT_EQ(a.ema.logits, c.ema.logits);
  }
}

TEST(Trainer, DifferentSeedsDiffer) {
  const auto w = World::build(small_hard_spec());
  auto a = TrainerState::from_policy(Policy::from_world(w));
  auto b = TrainerState::from_policy(Policy::from_world(w));
  auto cfg = quick(Regime::kCaopd, 5);
  train(cfg, w, a);
  cfg.seed = 10;
  train(cfg, w, b);
  EXPECT_NE(a.policy.parameters().logits, b.policy.parameters().logits);
}

TEST(Trainer, OpdInflatesConfidenceAndCaopdTracksAccuracy) {
  const auto w = World::build(small_hard_spec());
  auto opd = TrainerState::from_policy(Policy::from_world(w));
  auto caopd = TrainerState::from_policy(Policy::from_world(w));
  const auto lo = train(quick(Regime::kOpd, 120), w, opd);
  const auto lc = train(quick(Regime::kCaopd, 120), w, caopd);
  const auto eo = evaluate_exact(opd.policy, w);
  const auto ec = evaluate_exact(caopd.policy, w);
  EXPECT_GT(eo.ocg, 0.2);
  EXPECT_LT(std::fabs(ec.ocg), 0.1);
  // Same distilled trajectories and answer-position terms: accuracy matches.
  EXPECT_NEAR(eo.accuracy, ec.accuracy, 1e-12);
  EXPECT_EQ(lo.records.back().accuracy, eo.accuracy);
  EXPECT_EQ(lc.records.back().mean_confidence, ec.mean_confidence);
}

TEST(Trainer, LossBookkeeping) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  const auto log = train(quick(Regime::kCaopd, 5), w, state);
  ASSERT_EQ(log.records.size(), 5u);
  for (const auto& r : log.records) {
    EXPECT_NEAR(r.loss.total, r.loss.capability_term + r.loss.calibration_term, 1e-12);
    EXPECT_GE(r.loss.capability_term, -1e-12);
    EXPECT_GE(r.loss.calibration_term, -1e-12);
    ASSERT_TRUE(r.mean_target);
    EXPECT_GE(*r.mean_target, 0.0);
    EXPECT_LE(*r.mean_target, 1.0);
  }
  long total = 0;
  for (const auto& [value, count] : log.target_histogram) {
    EXPECT_EQ(value * 8, std::round(value * 8));
    total += count;
  }
  EXPECT_EQ(total, 5 * 6);
}

TEST(Trainer, SdpoSkipsPromptsWithoutVerifiedRollouts) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  auto cfg = quick(Regime::kCaopd, 10);
  cfg.context_builder = ContextBuilder::kSdpo;
  cfg.k_rollouts = 1;
  const auto log = train(cfg, w, state);
  int skipped = 0;
  for (const auto& r : log.records) {
    EXPECT_EQ(r.prompts_used + r.prompts_skipped, 6);
    skipped += r.prompts_skipped;
  }
  EXPECT_GT(skipped, 0);
}

TEST(Trainer, DivergenceGuard) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  auto cfg = quick(Regime::kOpd, 50);
  cfg.learning_rate = 1e6;
  cfg.divergence_limit = 100.0;
  EXPECT_THROW(train(cfg, w, state), DivergenceError);
}

TEST(Trainer, ObserverSeesEveryStep) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  std::vector<int> steps;
  train(quick(Regime::kRlcrLite, 4), w, state, [&](const StepRecord& r, const TrainerState&) { steps.push_back(r.step); });
  EXPECT_EQ(steps, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Trainer, CsvColumns) {
  const auto w = World::build(small_hard_spec());
  auto state = TrainerState::from_policy(Policy::from_world(w));
  const auto log = train(quick(Regime::kOpd, 2), w, state);
  const auto csv = training_log_to_csv(log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "step,regime,mean_loss,capability_term,calibration_term,total,accuracy,mean_confidence,ocg,"
            "prompts_used,prompts_skipped,mean_target");
  const auto timed = training_log_to_csv(log, true);
  EXPECT_NE(timed.substr(0, timed.find('\n')).find("wall_clock_seconds"), std::string::npos);
}

TEST(Trainer, SyncLayoutAfterAddingDomain) {
  const auto a = World::build(small_hard_spec());
  auto sb = small_hard_spec();
  sb.prompt_id_offset = 100;
  sb.seed = 77;
  const auto b = World::build(sb);
  auto state = TrainerState::from_policy(Policy::from_world(a));
  train(quick(Regime::kOpd, 3), a, state);
  const auto ema_before = state.ema.logits;
  state.policy.add_world(b);
  state.sync_layout();
  EXPECT_EQ(state.ema.logits.size(), state.policy.parameters().logits.size());
  EXPECT_TRUE(std::equal(ema_before.begin(), ema_before.end(), state.ema.logits.begin()));
  EXPECT_NO_THROW(train(quick(Regime::kCaopd, 2), b, state));
}

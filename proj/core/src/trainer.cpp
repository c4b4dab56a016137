#include "opdlab/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace opdlab {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kOpd: return "opd";
    case Regime::kCaopd: return "caopd";
    case Regime::kRlcrLite: return "rlcr_lite";
  }
  return "?";
}

std::string_view to_string(ContextBuilder builder) {
  return builder == ContextBuilder::kSdft ? "sdft" : "sdpo";
}

std::string_view to_string(TargetSource source) {
  return source == TargetSource::kVerifier ? "verifier" : "self_consistency";
}

Regime parse_regime(std::string_view text) {
  if (text == "opd") return Regime::kOpd;
  if (text == "caopd") return Regime::kCaopd;
  if (text == "rlcr_lite") return Regime::kRlcrLite;
  throw InvalidArgument("unknown regime '" + std::string(text) + "' (expected opd, caopd or rlcr_lite)");
}

ContextBuilder parse_context_builder(std::string_view text) {
  if (text == "sdft") return ContextBuilder::kSdft;
  if (text == "sdpo") return ContextBuilder::kSdpo;
  throw InvalidArgument("unknown context builder '" + std::string(text) + "' (expected sdft or sdpo)");
}

TargetSource parse_target_source(std::string_view text) {
  if (text == "verifier") return TargetSource::kVerifier;
  if (text == "self_consistency") return TargetSource::kSelfConsistency;
  throw InvalidArgument("unknown target source '" + std::string(text) + "'");
}

std::string regime_label(Regime regime) {
  if (regime == Regime::kRlcrLite) return "rlcr_lite_simplified";
  return std::string(to_string(regime));
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (k_rollouts < 1) throw InvalidArgument("k_rollouts must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
  if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw InvalidArgument("ema_alpha must be in (0, 1]");
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (batch_prompts < 0) throw InvalidArgument("batch_prompts must be >= 0");
  if (!(rollout_temperature > 0.0)) throw InvalidArgument("rollout_temperature must be > 0");
  if (!(brier_lambda >= 0.0)) throw InvalidArgument("brier_lambda must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (!(divergence_limit > 0.0)) throw InvalidArgument("divergence_limit must be > 0");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
  c.reject_unknown({"regime", "context_builder", "target_source", "k_rollouts", "learning_rate", "ema_alpha", "steps",
                    "batch_prompts", "rollout_temperature", "brier_lambda", "momentum", "seed", "threads",
                    "divergence_limit", "checkpoint_every"});
  TrainConfig t;
  t.regime = parse_regime(c.get_string("regime", to_string(t.regime)));
  t.context_builder = parse_context_builder(c.get_string("context_builder", to_string(t.context_builder)));
  t.target_source = parse_target_source(c.get_string("target_source", to_string(t.target_source)));
  t.k_rollouts = static_cast<int>(c.get_int("k_rollouts", t.k_rollouts));
  t.learning_rate = c.get_double("learning_rate", t.learning_rate);
  t.ema_alpha = c.get_double("ema_alpha", t.ema_alpha);
  t.steps = static_cast<int>(c.get_int("steps", t.steps));
  t.batch_prompts = static_cast<int>(c.get_int("batch_prompts", t.batch_prompts));
  t.rollout_temperature = c.get_double("rollout_temperature", t.rollout_temperature);
  t.brier_lambda = c.get_double("brier_lambda", t.brier_lambda);
  t.momentum = c.get_double("momentum", t.momentum);
  const long long seed = c.get_int("seed", static_cast<long long>(t.seed));
  if (seed < 0) throw InvalidArgument("seed must be >= 0");
  t.seed = static_cast<std::uint64_t>(seed);
  t.threads = static_cast<int>(c.get_int("threads", t.threads));
  t.divergence_limit = c.get_double("divergence_limit", t.divergence_limit);
  t.checkpoint_every = static_cast<int>(c.get_int("checkpoint_every", t.checkpoint_every));
  t.validate();
  return t;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  c.set("regime", std::string(to_string(regime)));
  c.set("context_builder", std::string(to_string(context_builder)));
  c.set("target_source", std::string(to_string(target_source)));
  c.set("k_rollouts", std::to_string(k_rollouts));
  c.set("learning_rate", format_double(learning_rate));
  c.set("ema_alpha", format_double(ema_alpha));
  c.set("steps", std::to_string(steps));
  c.set("batch_prompts", std::to_string(batch_prompts));
  c.set("rollout_temperature", format_double(rollout_temperature));
  c.set("brier_lambda", format_double(brier_lambda));
  c.set("momentum", format_double(momentum));
  c.set("seed", std::to_string(seed));
  c.set("threads", std::to_string(threads));
  c.set("divergence_limit", format_double(divergence_limit));
  c.set("checkpoint_every", std::to_string(checkpoint_every));
  return c;
}

// ---------------------------------------------------------------- state

TrainerState TrainerState::from_policy(Policy policy) {
  TrainerState s;
  s.ema = policy.parameters();
  s.policy = std::move(policy);
  return s;
}

void TrainerState::sync_layout() {
  const auto& live = policy.parameters();
  const std::size_t old_size = ema.logits.size();
  if (old_size > live.logits.size()) throw InvalidArgument("sync_layout: EMA is larger than the live policy");
  ema.layout = live.layout;
  ema.logits.insert(ema.logits.end(), live.logits.begin() + static_cast<std::ptrdiff_t>(old_size), live.logits.end());
  if (!velocity.empty()) velocity.resize(live.logits.size(), 0.0);
}

Policy TrainerState::teacher() const { return Policy(ema, policy.bias(), policy.grid()); }

// ---------------------------------------------------------------- evaluation

ExactEvaluation evaluate_exact(const Policy& policy, const World& world) {
  ExactEvaluation e;
  for (const PromptId x : world.prompts()) {
    double conf = 0.0;
    for (const auto& wt : enumerate_trajectories(policy, world, x, PrivilegedContext::none())) {
      conf += wt.probability * wt.trajectory.val_c;
    }
    // From the answer distribution alone, so accuracy never depends on confidence rows.
    e.accuracy += world.weight(x) * exact_success_prob(policy, world, x, PrivilegedContext::none());
    e.mean_confidence += world.weight(x) * conf;
  }
  e.ocg = e.mean_confidence - e.accuracy;
  return e;
}

std::vector<PredictionRecord> exact_prediction_records(const Policy& policy, const World& world) {
  std::vector<PredictionRecord> out;
  for (const PromptId x : world.prompts()) {
    for (const auto& wt : enumerate_trajectories(policy, world, x, PrivilegedContext::none())) {
      const double w = world.weight(x) * wt.probability;
      if (!(w > 0.0)) continue;
      out.push_back({wt.trajectory.val_c, world.verify(x, wt.trajectory.answer_path), w, std::nullopt});
    }
  }
  return out;
}

// ---------------------------------------------------------------- training

namespace {

struct PromptOutcome {
  bool used = false;
  GradientMap grad;
  LossBreakdown loss;
  double objective = 0.0;
  std::optional<ConfidenceTarget> target;
};

std::uint64_t prompt_key(PromptId x) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(x)); }

PromptOutcome run_prompt(const TrainConfig& cfg, const World& world, const Policy& student, const Policy& teacher,
                         PromptId x, int step) {
  PromptOutcome out;
  const auto s = static_cast<std::uint64_t>(step);
  const bool needs_rollouts = cfg.regime != Regime::kOpd || cfg.context_builder == ContextBuilder::kSdpo;
  std::vector<Trajectory> rollouts;
  if (needs_rollouts) {
    rollouts.reserve(static_cast<std::size_t>(cfg.k_rollouts));
    for (int k = 0; k < cfg.k_rollouts; ++k) {
      Rng rng(cfg.seed, {stream_id(Stream::kRollout), s, prompt_key(x), static_cast<std::uint64_t>(k)});
      rollouts.push_back(
          sample_trajectory(student, world, x, PrivilegedContext::none(), rng, cfg.rollout_temperature));
    }
  }

  if (cfg.regime == Regime::kRlcrLite) {
    auto pg = rlcr_lite_gradient(student, world, x, rollouts, cfg.brier_lambda, cfg.rollout_temperature);
    out.used = true;
    out.grad = std::move(pg.grad);
    out.objective = -pg.mean_reward;
    out.target = target_from_rollouts(world, x, rollouts);
    return out;
  }

  PrivilegedContext z;
  if (cfg.context_builder == ContextBuilder::kSdft) {
    z = build_sdft_context(world, x);
  } else {
    auto built = build_sdpo_context(world, x, rollouts);
    if (!built) return out;  // nothing verified: no privileged context this step
    z = std::move(*built);
  }

  // The distilled trajectory has its own stream so that it does not depend on
  // the regime or on K.
  Rng distill_rng(cfg.seed, {stream_id(Stream::kDistill), s, prompt_key(x)});
  const auto y = sample_trajectory(student, world, x, PrivilegedContext::none(), distill_rng, cfg.rollout_temperature);

  LossResult result;
  if (cfg.regime == Regime::kCaopd) {
    ConfidenceTarget target;
    if (cfg.target_source == TargetSource::kVerifier) {
      target = target_from_rollouts(world, x, rollouts);
    } else {
      Rng ref_rng(cfg.seed, {stream_id(Stream::kReference), s, prompt_key(x)});
      target = ta_self_consistency(student, world, x, z, cfg.k_rollouts, ref_rng, cfg.rollout_temperature);
    }
    out.target = target;
    result = caopd_loss_and_grad(student, teacher, world, x, revise_context(z, target),
                                 replace_target(y, target, world.grid()));
  } else {
    result = opd_loss_and_grad(student, teacher, world, x, z, y);
  }
  out.used = true;
  out.grad = std::move(result.grad);
  out.loss = result.loss;
  out.objective = result.loss.total;
  return out;
}

std::vector<PromptId> select_batch(const World& world, int batch_prompts, int step) {
  const auto prompts = world.prompts();
  const std::size_t n = prompts.size();
  if (batch_prompts == 0 || static_cast<std::size_t>(batch_prompts) >= n) return {prompts.begin(), prompts.end()};
  const auto b = static_cast<std::size_t>(batch_prompts);
  std::vector<PromptId> out;
  out.reserve(b);
  const std::size_t start = (static_cast<std::size_t>(step) * b) % n;
  for (std::size_t i = 0; i < b; ++i) out.push_back(prompts[(start + i) % n]);
  return out;
}

void check_divergence(const std::vector<double>& logits, double limit) {
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i]) || std::fabs(logits[i]) > limit) {
      throw DivergenceError("logit " + std::to_string(i) + " left the allowed range (|logit| > " +
                            format_double(limit) + ")");
    }
  }
}

}  // namespace

TrainingLog train(const TrainConfig& config, const World& world, TrainerState& state, const StepObserver& observer) {
  config.validate();
  for (const PromptId x : world.prompts()) {
    if (!state.policy.layout().has_prompt(x)) {
      throw InvalidArgument("train: policy has no rows for prompt " + std::to_string(x));
    }
  }
  if (!(state.ema.layout == state.policy.layout())) throw InvalidArgument("train: EMA layout differs from policy");
  if (config.momentum > 0.0 && state.velocity.size() != state.policy.parameters().logits.size()) {
    state.velocity.assign(state.policy.parameters().logits.size(), 0.0);
  }

  TrainingLog log;
  log.regime = config.regime;
  for (int step = 0; step < config.steps; ++step) {
    const auto started = std::chrono::steady_clock::now();
    const auto batch = select_batch(world, config.batch_prompts, step);
    const Policy teacher = state.teacher();
    const Policy& student = state.policy;

    std::vector<PromptOutcome> outcomes(batch.size());
    const auto work = [&](std::size_t i) { outcomes[i] = run_prompt(config, world, student, teacher, batch[i], step); };
    if (config.threads > 1 && batch.size() > 1) {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(batch.size());
      {
        std::vector<std::jthread> pool;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.threads), batch.size());
        for (std::size_t t = 0; t < n; ++t) {
          pool.emplace_back([&] {
            for (std::size_t i = next++; i < batch.size(); i = next++) {
              try {
                work(i);
              } catch (...) {
                errors[i] = std::current_exception();
              }
            }
          });
        }
      }
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    }

    // Reduce in batch order so the sum is independent of scheduling.
    StepRecord rec;
    rec.step = step;
    rec.regime = config.regime;
    GradientMap total;
    double target_sum = 0.0;
    int targets = 0;
    for (const auto& o : outcomes) {
      if (!o.used) {
        ++rec.prompts_skipped;
        continue;
      }
      ++rec.prompts_used;
      total.merge(o.grad);
      rec.mean_loss += o.objective;
      rec.loss.capability_term += o.loss.capability_term;
      rec.loss.calibration_term += o.loss.calibration_term;
      rec.loss.total += o.loss.total;
      if (o.target) {
        target_sum += o.target->raw_mu_hat;
        ++targets;
        ++log.target_histogram[o.target->raw_mu_hat];
      }
    }
    if (rec.prompts_used > 0) {
      const double inv = 1.0 / rec.prompts_used;
      total.scale(inv);
      rec.mean_loss *= inv;
      rec.loss.capability_term *= inv;
      rec.loss.calibration_term *= inv;
      rec.loss.total *= inv;
    }
    if (targets > 0) rec.mean_target = target_sum / targets;

    auto& logits = state.policy.parameters().logits;
    if (config.momentum > 0.0) {
      for (double& v : state.velocity) v *= config.momentum;
      for (const auto& [offset, row] : total.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) state.velocity[offset + i] += row[i];
      }
      for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= config.learning_rate * state.velocity[i];
    } else {
      for (const auto& [offset, row] : total.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) logits[offset + i] -= config.learning_rate * row[i];
      }
    }
    check_divergence(logits, config.divergence_limit);
    ema_update(state.ema, state.policy.parameters(), config.ema_alpha);

    const auto eval = evaluate_exact(state.policy, world);
    rec.accuracy = eval.accuracy;
    rec.mean_confidence = eval.mean_confidence;
    rec.ocg = eval.ocg;
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.records.push_back(rec);
    if (observer) observer(rec, state);
  }
  return log;
}

// ---------------------------------------------------------------- output

std::string training_log_to_csv(const TrainingLog& log, bool include_wall_clock) {
  std::ostringstream out;
  out << "step,regime,mean_loss,capability_term,calibration_term,total,accuracy,mean_confidence,ocg,"
         "prompts_used,prompts_skipped,mean_target";
  if (include_wall_clock) out << ",wall_clock_seconds";
  out << '\n';
  const std::string label = regime_label(log.regime);
  for (const auto& r : log.records) {
    out << r.step << ',' << label << ',' << format_double(r.mean_loss) << ',' << format_double(r.loss.capability_term)
        << ',' << format_double(r.loss.calibration_term) << ',' << format_double(r.loss.total) << ','
        << format_double(r.accuracy) << ',' << format_double(r.mean_confidence) << ',' << format_double(r.ocg)
        << ',' << r.prompts_used << ',' << r.prompts_skipped << ','
        << (r.mean_target ? format_double(*r.mean_target) : std::string{});
    if (include_wall_clock) out << ',' << format_double(r.wall_clock_seconds);
    out << '\n';
  }
  return out.str();
}

std::string training_log_to_json(const TrainingLog& log, bool include_wall_clock) {
  nlohmann::ordered_json j;
  j["regime"] = regime_label(log.regime);
  auto steps = nlohmann::ordered_json::array();
  for (const auto& r : log.records) {
    nlohmann::ordered_json row;
    row["step"] = r.step;
    row["mean_loss"] = r.mean_loss;
    row["capability_term"] = r.loss.capability_term;
    row["calibration_term"] = r.loss.calibration_term;
    row["total"] = r.loss.total;
    row["accuracy"] = r.accuracy;
    row["mean_confidence"] = r.mean_confidence;
    row["ocg"] = r.ocg;
    row["prompts_used"] = r.prompts_used;
    row["prompts_skipped"] = r.prompts_skipped;
    row["mean_target"] = r.mean_target ? nlohmann::ordered_json(*r.mean_target) : nlohmann::ordered_json(nullptr);
    if (include_wall_clock) row["wall_clock_seconds"] = r.wall_clock_seconds;
    steps.push_back(std::move(row));
  }
  j["steps"] = std::move(steps);
  auto hist = nlohmann::ordered_json::array();
  for (const auto& [value, count] : log.target_histogram) hist.push_back({{"target", value}, {"count", count}});
  j["target_histogram"] = std::move(hist);
  return j.dump(2) + "\n";
}

}  // namespace opdlab

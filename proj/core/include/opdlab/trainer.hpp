#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opdlab/config.hpp"
#include "opdlab/distill.hpp"
#include "opdlab/metrics.hpp"
#include "opdlab/policy.hpp"
#include "opdlab/world.hpp"

namespace opdlab {

enum class Regime { kOpd, kCaopd, kRlcrLite };
enum class ContextBuilder { kSdft, kSdpo };
enum class TargetSource { kVerifier, kSelfConsistency };

std::string_view to_string(Regime regime);
std::string_view to_string(ContextBuilder builder);
std::string_view to_string(TargetSource source);
Regime parse_regime(std::string_view text);
ContextBuilder parse_context_builder(std::string_view text);
TargetSource parse_target_source(std::string_view text);

struct TrainConfig {
  Regime regime = Regime::kOpd;
  ContextBuilder context_builder = ContextBuilder::kSdft;
  TargetSource target_source = TargetSource::kVerifier;
  int k_rollouts = 8;
  double learning_rate = 1.0;
  double ema_alpha = 0.05;
  int steps = 100;
  /// Prompts per step, taken cyclically; 0 means every prompt.
  int batch_prompts = 0;
  double rollout_temperature = 1.0;
  double brier_lambda = 1.0;
  /// 0 disables momentum.
  double momentum = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
  double divergence_limit = 1e4;
  /// Intermediate checkpoint cadence for callers that persist runs; 0 keeps only the final policy.
  int checkpoint_every = 0;

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Live policy, EMA teacher parameters and optimizer state.
struct TrainerState {
  Policy policy;
  PolicyParameters ema;
  std::vector<double> velocity;

  static TrainerState from_policy(Policy policy);
  /// Extends layouts after policy.add_world(); EMA rows start at the live values.
  void sync_layout();
  /// The EMA parameters under the live policy's bias and grid.
  Policy teacher() const;
};

/// Accuracy and confidence of the deployed student, by enumeration.
struct ExactEvaluation {
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double ocg = 0.0;
};

ExactEvaluation evaluate_exact(const Policy& policy, const World& world);

/// One weighted record per reachable (prompt, answer, confidence) triple.
std::vector<PredictionRecord> exact_prediction_records(const Policy& policy, const World& world);

struct StepRecord {
  int step = 0;
  Regime regime = Regime::kOpd;
  double mean_loss = 0.0;
  LossBreakdown loss;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double ocg = 0.0;
  int prompts_used = 0;
  int prompts_skipped = 0;
  /// Mean raw target over prompts that produced one.
  std::optional<double> mean_target;
  double wall_clock_seconds = 0.0;
};

struct TrainingLog {
  Regime regime = Regime::kOpd;
  std::vector<StepRecord> records;
  /// Count of raw targets by value, over the whole run.
  std::map<double, long> target_histogram;
};

using StepObserver = std::function<void(const StepRecord&, const TrainerState&)>;

/// Runs config.steps optimizer steps in place on `state`.
TrainingLog train(const TrainConfig& config, const World& world, TrainerState& state,
                  const StepObserver& observer = {});

/// Regime label used in every output; marks the policy-gradient baseline as simplified.
std::string regime_label(Regime regime);

/// CSV with fixed column order; the wall-clock column only when requested.
std::string training_log_to_csv(const TrainingLog& log, bool include_wall_clock = false);
std::string training_log_to_json(const TrainingLog& log, bool include_wall_clock = false);

}  // namespace opdlab

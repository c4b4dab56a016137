#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opdlab/common.hpp"
#include "opdlab/config.hpp"
#include "opdlab/random.hpp"
#include "opdlab/trajectory.hpp"

namespace opdlab {

enum class ContextKind { kNone, kDemonstration, kSuccessfulRollout, kFeedback };

std::string_view to_string(ContextKind kind);

/// Evidence available to the teacher during training but never at deployment.
struct PrivilegedContext {
  ContextKind kind = ContextKind::kNone;
  std::optional<AnswerPath> demonstrated_path;
  std::optional<int> declared_confidence;

  static PrivilegedContext none() { return {}; }

  /// Canonical summary, e.g. "demonstration:1.3|conf=20" or "none".
  std::string summary() const;

  auto operator<=>(const PrivilegedContext&) const = default;
};

struct WeightedContext {
  PrivilegedContext context;
  double probability = 0.0;
};

/// Build parameters of a synthetic task family.
struct WorldSpec {
  int num_prompts = 8;
  int answer_vocab_size = 4;
  int answer_length = 2;
  /// Number of grid levels, G + 1.
  int confidence_levels = 21;
  /// Per-prompt difficulty in [0, 1]; a single entry is broadcast.
  std::vector<double> difficulty{0.5};
  /// In-context bias strength at answer positions.
  double context_helpfulness = 2.0;
  /// In-context bias strength at the confidence position.
  double context_confidence_bias = 4.0;
  std::uint64_t seed = 7;

  PromptId prompt_id_offset = 0;
  /// Optional unnormalized prompt weights; empty means uniform.
  std::vector<double> prompt_weights;

  // Context mixture; the remaining mass goes to "no context".
  double p_demonstration = 0.5;
  double p_feedback = 0.0;
  /// Probability that a feedback context reveals only a prefix of the truth.
  double feedback_prefix_prob = 0.5;
  /// Probability of a demonstration of a wrong path.
  double p_misleading = 0.0;

  // Base-policy initialization.
  double skill_logit = 1.5;
  double logit_noise = 1.0;
  double confidence_logit_noise = 0.5;

  void validate() const;
  std::size_t num_paths() const;
  double difficulty_of(int prompt_index) const;

  static WorldSpec from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;

  bool operator==(const WorldSpec&) const = default;
};

class World {
 public:
  static World build(const WorldSpec& spec);

  const WorldSpec& spec() const { return spec_; }
  const ConfidenceGrid& grid() const { return grid_; }
  int vocab_size() const { return spec_.answer_vocab_size; }
  int answer_length() const { return spec_.answer_length; }
  std::size_t num_paths() const { return num_paths_; }
  std::size_t num_prompts() const { return prompts_.size(); }

  std::span<const PromptId> prompts() const { return prompts_; }
  bool has_prompt(PromptId x) const;
  /// Position of x in prompts(); throws InvalidArgument for unknown ids.
  std::size_t index_of(PromptId x) const;

  const AnswerPath& truth(PromptId x) const { return truth_[index_of(x)]; }
  std::size_t truth_code(PromptId x) const;
  std::span<const WeightedContext> contexts(PromptId x) const { return contexts_[index_of(x)]; }
  /// Normalized prompt weight P(x).
  double weight(PromptId x) const { return weights_[index_of(x)]; }
  double difficulty(PromptId x) const { return spec_.difficulty_of(static_cast<int>(index_of(x))); }

  /// R(x, a): 1 iff the path equals the ground truth.
  bool verify(PromptId x, std::span<const Token> path) const;

  PrivilegedContext sample_context(PromptId x, Rng& rng) const;

  std::string to_json() const;

  bool operator==(const World&) const;

 private:
  World(WorldSpec spec, ConfidenceGrid grid) : spec_(std::move(spec)), grid_(grid) {}

  WorldSpec spec_;
  ConfidenceGrid grid_;
  std::size_t num_paths_ = 0;
  std::vector<PromptId> prompts_;
  std::vector<AnswerPath> truth_;
  std::vector<std::vector<WeightedContext>> contexts_;
  std::vector<double> weights_;
};

/// Big-endian base-V code of a path; lexicographic order equals numeric order.
std::size_t encode_path(std::span<const Token> path, int vocab_size);
AnswerPath decode_path(std::size_t code, int vocab_size, int length);
std::size_t integer_power(std::size_t base, int exponent);

/// Ground-truth demonstration with declared confidence 1.0.
PrivilegedContext build_sdft_context(const World& world, PromptId x);

/// First verified rollout in batch order, carrying its own confidence level.
std::optional<PrivilegedContext> build_sdpo_context(const World& world, PromptId x,
                                                    std::span<const Trajectory> batch);

}  // namespace opdlab

#pragma once

#include <compare>
#include <map>
#include <span>
#include <vector>

#include "opdlab/common.hpp"
#include "opdlab/random.hpp"
#include "opdlab/trajectory.hpp"
#include "opdlab/world.hpp"

namespace opdlab {

/// Addresses one next-token distribution: prompt, teacher context, generated prefix.
///
/// A prefix shorter than the answer length selects an answer position; a prefix of
/// exactly the answer length selects the confidence position.
struct ConditioningKey {
  PromptId prompt = 0;
  PrivilegedContext context;
  std::vector<Token> prefix;

  auto operator<=>(const ConditioningKey&) const = default;
};

/// Maps (prompt, prefix) rows onto one flat logit array.
///
/// Layout: a shared confidence row of width G+1 first, then one block per prompt
/// holding every answer-prefix row (width V) followed by one confidence row per
/// full answer path (width G+1). The shared row is added to every confidence row.
class ParameterLayout {
 public:
  ParameterLayout() = default;
  ParameterLayout(int vocab_size, int answer_length, int confidence_levels);

  int vocab_size() const { return vocab_; }
  int answer_length() const { return length_; }
  int confidence_levels() const { return levels_; }
  std::size_t num_paths() const { return num_paths_; }
  std::size_t num_prompts() const { return slots_.size(); }
  std::size_t size() const { return confidence_levels_offset() + slots_.size() * block_size_; }

  bool has_prompt(PromptId x) const { return slots_.contains(x); }
  std::size_t add_prompt(PromptId x);
  std::vector<PromptId> prompts() const;

  std::size_t shared_confidence_offset() const { return 0; }
  std::size_t answer_row_offset(PromptId x, std::span<const Token> prefix) const;
  std::size_t confidence_row_offset(PromptId x, std::size_t path_code) const;
  /// Width of the row at `offset`-style position `prefix_length`.
  int row_width(std::size_t prefix_length) const;

  bool operator==(const ParameterLayout&) const = default;

 private:
  std::size_t confidence_levels_offset() const { return static_cast<std::size_t>(levels_); }
  std::size_t slot_of(PromptId x) const;

  int vocab_ = 0;
  int length_ = 0;
  int levels_ = 0;
  std::size_t num_paths_ = 0;
  std::size_t answer_rows_ = 0;
  std::size_t block_size_ = 0;
  std::map<PromptId, std::size_t> slots_;
};

struct PolicyParameters {
  ParameterLayout layout;
  std::vector<double> logits;

  std::span<const double> row(std::size_t offset, int width) const {
    return std::span<const double>(logits).subspan(offset, static_cast<std::size_t>(width));
  }
  bool operator==(const PolicyParameters&) const = default;
};

/// Strength of in-context conditioning when a privileged context is present.
struct IclBias {
  double answer = 0.0;
  double confidence = 0.0;
  bool operator==(const IclBias&) const = default;
};

/// Tabular autoregressive policy. The same parameters serve as student
/// (no context) and teacher (context adds a logit bias).
class Policy {
 public:
  Policy() = default;
  Policy(PolicyParameters params, IclBias bias, ConfidenceGrid grid)
      : params_(std::move(params)), bias_(bias), grid_(grid) {}

  /// Base policy for a world: truth-token skill bonus plus difficulty-scaled noise.
  static Policy from_world(const World& world);

  /// Adds freshly initialized rows for every prompt of `world` (e.g. a second domain).
  void add_world(const World& world);

  const PolicyParameters& parameters() const { return params_; }
  PolicyParameters& parameters() { return params_; }
  const ParameterLayout& layout() const { return params_.layout; }
  const IclBias& bias() const { return bias_; }
  void set_bias(IclBias bias) { bias_ = bias; }
  const ConfidenceGrid& grid() const { return grid_; }

  /// Conditioned logits (before temperature). Throws for keys outside the layout.
  std::vector<double> logits(const ConditioningKey& key) const;

  bool operator==(const Policy&) const = default;

 private:
  PolicyParameters params_;
  IclBias bias_;
  ConfidenceGrid grid_{1};
};

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

/// Numerically stable log-softmax of `logits / temperature`.
std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

std::vector<double> token_distribution(const Policy& policy, const ConditioningKey& key, double temperature = 1.0);

/// Ancestral sampling of answer tokens then the confidence token.
Trajectory sample_trajectory(const Policy& policy, const World& world, PromptId x,
                             const PrivilegedContext& context, Rng& rng, double temperature = 1.0);

/// Every (answer path, confidence level) pair with its exact probability.
std::vector<WeightedTrajectory> enumerate_trajectories(const Policy& policy, const World& world, PromptId x,
                                                       const PrivilegedContext& context);

/// P(a | x, context) for every answer path, indexed by encode_path().
std::vector<double> answer_path_distribution(const Policy& policy, const World& world, PromptId x,
                                             const PrivilegedContext& context);

/// P(c | x, a, context) over the confidence grid.
std::vector<double> confidence_distribution(const Policy& policy, PromptId x, std::span<const Token> path,
                                            const PrivilegedContext& context);

/// mu(x) with no context, mu_T(x, z) otherwise. Confidence is marginalized out.
double exact_success_prob(const Policy& policy, const World& world, PromptId x, const PrivilegedContext& context);

/// shadow <- (1 - alpha) shadow + alpha live, elementwise.
void ema_update(PolicyParameters& shadow, const PolicyParameters& live, double alpha);

}  // namespace opdlab

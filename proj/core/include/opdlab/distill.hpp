#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "opdlab/policy.hpp"
#include "opdlab/random.hpp"
#include "opdlab/world.hpp"

namespace opdlab {

/// Student-grounded confidence target built from K rollouts.
struct ConfidenceTarget {
  double raw_mu_hat = 0.0;
  int grid_level = 0;
  int k_used = 0;
  int successes = 0;

  bool operator==(const ConfidenceTarget&) const = default;
};

/// raw = successes / k; level = nearest grid point, ties rounded up.
ConfidenceTarget make_target(int successes, int k, const ConfidenceGrid& grid);

/// Empirical success rate of existing student rollouts under the verifier.
ConfidenceTarget target_from_rollouts(const World& world, PromptId x, std::span<const Trajectory> rollouts);

/// Draws K student rollouts and scores them with the verifier.
ConfidenceTarget monte_carlo_confidence(const Policy& policy, const World& world, PromptId x, int k, Rng& rng,
                                        double temperature = 1.0);

/// Verifier-free target: agreement of K student rollouts with one reference
/// answer drawn under teacher conditioning. Equivalence is exact path match.
ConfidenceTarget ta_self_consistency(const Policy& policy, const World& world, PromptId x,
                                     const PrivilegedContext& context, int k, Rng& rng, double temperature = 1.0);

/// Overwrites the confidence token; the answer tokens are untouched and the
/// stored log-probability is cleared because it no longer describes the sequence.
Trajectory replace_target(Trajectory y, const ConfidenceTarget& target, const ConfidenceGrid& grid);

/// Overwrites the declared confidence of a teacher context with the target level.
PrivilegedContext revise_context(PrivilegedContext z, const ConfidenceTarget& target);

/// Floor applied to teacher probabilities before taking logs.
inline constexpr double kTeacherProbFloor = 1e-12;

struct KlResult {
  double kl = 0.0;
  /// d KL / d student_logits.
  std::vector<double> grad;
};

/// KL(softmax(student_logits) || teacher_probs) and its closed-form gradient
/// p_i (log(p_i / q_i) - KL). The teacher side is a constant.
KlResult reverse_kl_and_grad(std::span<const double> student_logits, std::span<const double> teacher_probs);

/// Sparse gradient keyed by flat row offset; iteration order is key order.
class GradientMap {
 public:
  void add(std::size_t offset, std::span<const double> values, double scale = 1.0);
  void merge(const GradientMap& other, double scale = 1.0);
  void scale(double factor);

  /// Value at a flat parameter index (0 if untouched).
  double at(std::size_t index) const;
  bool empty() const { return rows_.empty(); }
  const std::map<std::size_t, std::vector<double>>& rows() const { return rows_; }

 private:
  std::map<std::size_t, std::vector<double>> rows_;
};

struct LossBreakdown {
  /// Sum of per-token KL over answer positions.
  double capability_term = 0.0;
  /// Sum over the confidence position.
  double calibration_term = 0.0;
  double total = 0.0;
};

struct LossResult {
  LossBreakdown loss;
  GradientMap grad;
  /// KL per position: answer positions first, then the confidence position.
  std::vector<double> position_kl;
};

/// Per-token reverse KL between the student (x only) and the EMA teacher
/// (x and z) along the prefixes of y. Gradients reach only student rows.
LossResult opd_loss_and_grad(const Policy& student, const Policy& ema_teacher, const World& world, PromptId x,
                             const PrivilegedContext& z, const Trajectory& y);

/// The same per-position machinery evaluated on the revised pair (y~, z~).
/// Answer-position terms form the capability term, the confidence position the calibration term.
LossResult caopd_loss_and_grad(const Policy& student, const Policy& ema_teacher, const World& world, PromptId x,
                               const PrivilegedContext& z_tilde, const Trajectory& y_tilde);

/// R - lambda (val(c) - R)^2.
double brier_penalized_reward(bool correct, double val_c, double lambda);

struct PolicyGradientResult {
  GradientMap grad;
  double mean_reward = 0.0;
};

/// Simplified Brier-penalized REINFORCE baseline (not a reproduction of any
/// published RL calibration method). Returns the descent direction, i.e. minus
/// the score-function estimate with a leave-one-out mean-reward baseline.
PolicyGradientResult rlcr_lite_gradient(const Policy& policy, const World& world, PromptId x,
                                        std::span<const Trajectory> batch, double lambda, double temperature = 1.0);

}  // namespace opdlab

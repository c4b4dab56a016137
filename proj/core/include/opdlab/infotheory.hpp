#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opdlab/policy.hpp"
#include "opdlab/world.hpp"

namespace opdlab {

/// Which segment counts as the "trajectory" for entropy quantities.
enum class TrajectoryScope { kAnswerOnly, kFullSequence };

inline constexpr double kIdentityTolerance = 1e-9;
inline constexpr double kNonNegativeSlack = 1e-12;

// All quantities are exact finite sums over the enumerated joint (X, Z, A), in nats.
// P(x) comes from the world's prompt weights and P(z|x) from its context support.
// The X-only marginal P(a|x) is the context mixture sum_z P(z|x) pi(a|x,z).

double conditional_entropy_answers(const Policy& policy, const World& world,
                                   TrajectoryScope scope = TrajectoryScope::kAnswerOnly);
/// E_X[H(pi(A|X))] under the student conditioning (no context).
double student_entropy_answers(const Policy& policy, const World& world,
                               TrajectoryScope scope = TrajectoryScope::kAnswerOnly);
double expected_teacher_entropy(const Policy& policy, const World& world,
                                TrajectoryScope scope = TrajectoryScope::kAnswerOnly);
/// I(A; Z | X), computed as E[KL(pi(.|x,z) || P(.|x))], independently of the entropies.
double mutual_info_answers(const Policy& policy, const World& world,
                           TrajectoryScope scope = TrajectoryScope::kAnswerOnly);
/// I(R; Z | X) with R the verifier outcome of a teacher answer.
double mutual_info_correctness(const Policy& policy, const World& world);

struct ProjectionCheck {
  /// E_X[Var(mu_T | X)], the minimum squared error of any X-measurable predictor.
  double error = 0.0;
  /// No perturbed predictor beat the projection E_Z[mu_T | X].
  bool argmin_is_mu = false;
  int perturbations = 0;
  /// max |MSE(g) - MSE(proj) - E[(g - proj)^2]| over perturbations.
  double max_identity_residual = 0.0;
  /// E[(mu_T - mu_student)^2]; equals error + projection_gap.
  double student_mse = 0.0;
  /// E_X[(E_Z[mu_T|X] - mu_student)^2].
  double projection_gap = 0.0;
};

ProjectionCheck projection_error(const Policy& policy, const World& world, std::uint64_t seed,
                                 int perturbations = 100);

/// E[mu_T - mu] over the context support, optionally restricted to helpful
/// (x, z) pairs (mu_T(x,z) >= mu(x)) renormalized per prompt. Prompts with no
/// helpful context drop out and P(x) is renormalized. Throws when nothing remains.
double optimism_gap(const Policy& policy, const World& world, bool helpful_only);

struct PromptPropositionStats {
  PromptId prompt = 0;
  double weight = 0.0;
  double mu_student = 0.0;
  double mean_teacher_mu = 0.0;
  double var_teacher_mu = 0.0;
  /// Mass of contexts passing the helpful filter.
  double helpful_mass = 0.0;
  /// E_{Z~helpful}[mu_T | x] > mu(x): membership in the strict-improvement set.
  bool strict_improvement = false;
};

struct PropositionReport {
  double mi_R_Z_given_X = 0.0;
  double mi_A_Z_given_X = 0.0;
  double entropy_A_given_X = 0.0;
  double student_entropy_A = 0.0;
  double expected_teacher_entropy = 0.0;
  double projection_error = 0.0;
  double optimism_gap = 0.0;
  double optimism_gap_unfiltered = 0.0;
  ProjectionCheck projection;
  std::vector<PromptPropositionStats> per_prompt;
};

PropositionReport analyze_propositions(const Policy& policy, const World& world, std::uint64_t seed,
                                       TrajectoryScope scope = TrajectoryScope::kAnswerOnly);

struct PropositionExpectations {
  /// Informative contexts: require the three strict inequalities.
  bool expect_strict = false;
  /// Teacher identical to student: require every gap within tolerance of zero.
  bool expect_null = false;
  double tolerance = kIdentityTolerance;
};

/// Returns one message per violated check; empty means the report passes.
std::vector<std::string> check_propositions(const PropositionReport& report, const PropositionExpectations& expect);

std::string proposition_report_to_json(const PropositionReport& report);
/// One row per prompt with a header line.
std::string proposition_report_to_csv(const PropositionReport& report);

}  // namespace opdlab

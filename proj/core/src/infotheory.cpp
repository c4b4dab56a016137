#include "opdlab/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "opdlab/config.hpp"

namespace opdlab {
namespace {

struct PromptJoint {
  PromptId prompt = 0;
  double weight = 0.0;
  std::vector<double> context_probs;
  std::vector<std::vector<double>> teacher;  // per context
  std::vector<double> mixture;
  std::vector<double> student;
  std::vector<double> teacher_mu;  // per context
  double student_mu = 0.0;
};

std::vector<double> sequence_distribution(const Policy& policy, const World& world, PromptId x,
                                          const PrivilegedContext& ctx, TrajectoryScope scope) {
  if (scope == TrajectoryScope::kAnswerOnly) return answer_path_distribution(policy, world, x, ctx);
  const auto all = enumerate_trajectories(policy, world, x, ctx);
  std::vector<double> out;
  out.reserve(all.size());
  for (const auto& wt : all) out.push_back(wt.probability);
  return out;
}

// Index of the truth in a sequence distribution, per scope.
double success_mass(const std::vector<double>& dist, const World& world, PromptId x, TrajectoryScope scope) {
  const std::size_t code = world.truth_code(x);
  if (scope == TrajectoryScope::kAnswerOnly) return dist[code];
  const auto levels = static_cast<std::size_t>(world.grid().size());
  double total = 0.0;
  for (std::size_t c = 0; c < levels; ++c) total += dist[code * levels + c];
  return total;
}

std::vector<PromptJoint> build_joint(const Policy& policy, const World& world, TrajectoryScope scope) {
  std::vector<PromptJoint> out;
  out.reserve(world.num_prompts());
  for (const PromptId x : world.prompts()) {
    PromptJoint joint;
    joint.prompt = x;
    joint.weight = world.weight(x);
    joint.student = sequence_distribution(policy, world, x, PrivilegedContext::none(), scope);
    joint.student_mu = success_mass(joint.student, world, x, scope);
    joint.mixture.assign(joint.student.size(), 0.0);
    for (const auto& wc : world.contexts(x)) {
      joint.context_probs.push_back(wc.probability);
      joint.teacher.push_back(sequence_distribution(policy, world, x, wc.context, scope));
      joint.teacher_mu.push_back(success_mass(joint.teacher.back(), world, x, scope));
      for (std::size_t a = 0; a < joint.mixture.size(); ++a) joint.mixture[a] += wc.probability * joint.teacher.back()[a];
    }
    out.push_back(std::move(joint));
  }
  return out;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (const double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

double bernoulli_kl(double p, double q) {
  double kl = 0.0;
  if (p > 0.0) kl += p * (std::log(p) - std::log(q));
  if (p < 1.0) kl += (1.0 - p) * (std::log1p(-p) - std::log1p(-q));
  return kl;
}

double mean_teacher_mu(const PromptJoint& j) {
  double m = 0.0;
  for (std::size_t z = 0; z < j.context_probs.size(); ++z) m += j.context_probs[z] * j.teacher_mu[z];
  return m;
}

double var_teacher_mu(const PromptJoint& j) {
  const double m = mean_teacher_mu(j);
  double v = 0.0;
  for (std::size_t z = 0; z < j.context_probs.size(); ++z) v += j.context_probs[z] * (j.teacher_mu[z] - m) * (j.teacher_mu[z] - m);
  return v;
}

double conditional_entropy(const std::vector<PromptJoint>& joint) {
  double h = 0.0;
  for (const auto& j : joint) h += j.weight * entropy(j.mixture);
  return h;
}

double teacher_entropy(const std::vector<PromptJoint>& joint) {
  double h = 0.0;
  for (const auto& j : joint) {
    double inner = 0.0;
    for (std::size_t z = 0; z < j.teacher.size(); ++z) inner += j.context_probs[z] * entropy(j.teacher[z]);
    h += j.weight * inner;
  }
  return h;
}

double student_entropy(const std::vector<PromptJoint>& joint) {
  double h = 0.0;
  for (const auto& j : joint) h += j.weight * entropy(j.student);
  return h;
}

double mi_answers(const std::vector<PromptJoint>& joint) {
  double mi = 0.0;
  for (const auto& j : joint) {
    double inner = 0.0;
    for (std::size_t z = 0; z < j.teacher.size(); ++z) inner += j.context_probs[z] * kl_divergence(j.teacher[z], j.mixture);
    mi += j.weight * inner;
  }
  return mi;
}

double mi_correctness(const std::vector<PromptJoint>& joint) {
  double mi = 0.0;
  for (const auto& j : joint) {
    const double m = mean_teacher_mu(j);
    double inner = 0.0;
    for (std::size_t z = 0; z < j.teacher_mu.size(); ++z) inner += j.context_probs[z] * bernoulli_kl(j.teacher_mu[z], m);
    mi += j.weight * inner;
  }
  return mi;
}

double squared_error(const std::vector<PromptJoint>& joint, const std::vector<double>& predictor) {
  double mse = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    double inner = 0.0;
    for (std::size_t z = 0; z < joint[i].teacher_mu.size(); ++z) {
      const double d = joint[i].teacher_mu[z] - predictor[i];
      inner += joint[i].context_probs[z] * d * d;
    }
    mse += joint[i].weight * inner;
  }
  return mse;
}

ProjectionCheck projection(const std::vector<PromptJoint>& joint, std::uint64_t seed, int perturbations) {
  ProjectionCheck check;
  std::vector<double> proj(joint.size());
  std::vector<double> student(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) {
    proj[i] = mean_teacher_mu(joint[i]);
    student[i] = joint[i].student_mu;
    check.error += joint[i].weight * var_teacher_mu(joint[i]);
    check.projection_gap += joint[i].weight * (proj[i] - student[i]) * (proj[i] - student[i]);
  }
  check.student_mse = squared_error(joint, student);
  const double best = squared_error(joint, proj);
  check.argmin_is_mu = true;
  check.perturbations = perturbations;
  for (int k = 0; k < perturbations; ++k) {
    Rng rng(seed, {static_cast<std::uint64_t>(Stream::kPerturbation), static_cast<std::uint64_t>(k)});
    // Perturbation scales sweep several orders of magnitude.
    const double scale = std::pow(10.0, -3.0 + 3.0 * rng.uniform());
    std::vector<double> g(joint.size());
    double expected_margin = 0.0;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      g[i] = proj[i] + rng.normal(0.0, scale);
      expected_margin += joint[i].weight * (g[i] - proj[i]) * (g[i] - proj[i]);
    }
    const double mse = squared_error(joint, g);
    if (mse < best) check.argmin_is_mu = false;
    check.max_identity_residual = std::max(check.max_identity_residual, std::abs(mse - best - expected_margin));
  }
  return check;
}

double optimism(const std::vector<PromptJoint>& joint, bool helpful_only) {
  double total_weight = 0.0;
  double gap = 0.0;
  for (const auto& j : joint) {
    double mass = 0.0;
    double teacher = 0.0;
    for (std::size_t z = 0; z < j.teacher_mu.size(); ++z) {
      if (helpful_only && !(j.teacher_mu[z] >= j.student_mu)) continue;
      mass += j.context_probs[z];
      teacher += j.context_probs[z] * j.teacher_mu[z];
    }
    if (mass <= 0.0) continue;
    total_weight += j.weight;
    gap += j.weight * (teacher / mass - j.student_mu);
  }
  if (total_weight <= 0.0) throw Error("optimism_gap: the helpful context set is empty");
  return gap / total_weight;
}

}  // namespace

double conditional_entropy_answers(const Policy& policy, const World& world, TrajectoryScope scope) {
  return conditional_entropy(build_joint(policy, world, scope));
}

double student_entropy_answers(const Policy& policy, const World& world, TrajectoryScope scope) {
  return student_entropy(build_joint(policy, world, scope));
}

double expected_teacher_entropy(const Policy& policy, const World& world, TrajectoryScope scope) {
  return teacher_entropy(build_joint(policy, world, scope));
}

double mutual_info_answers(const Policy& policy, const World& world, TrajectoryScope scope) {
  return mi_answers(build_joint(policy, world, scope));
}

double mutual_info_correctness(const Policy& policy, const World& world) {
  return mi_correctness(build_joint(policy, world, TrajectoryScope::kAnswerOnly));
}

ProjectionCheck projection_error(const Policy& policy, const World& world, std::uint64_t seed, int perturbations) {
  if (perturbations < 0) throw InvalidArgument("projection_error: negative perturbation count");
  return projection(build_joint(policy, world, TrajectoryScope::kAnswerOnly), seed, perturbations);
}

double optimism_gap(const Policy& policy, const World& world, bool helpful_only) {
  return optimism(build_joint(policy, world, TrajectoryScope::kAnswerOnly), helpful_only);
}

PropositionReport analyze_propositions(const Policy& policy, const World& world, std::uint64_t seed,
                                       TrajectoryScope scope) {
  const auto joint = build_joint(policy, world, scope);
  // Correctness-based quantities never depend on the confidence token.
  const auto answers = scope == TrajectoryScope::kAnswerOnly ? joint
                                                             : build_joint(policy, world, TrajectoryScope::kAnswerOnly);
  PropositionReport r;
  r.entropy_A_given_X = conditional_entropy(joint);
  r.student_entropy_A = student_entropy(joint);
  r.expected_teacher_entropy = teacher_entropy(joint);
  r.mi_A_Z_given_X = mi_answers(joint);
  r.mi_R_Z_given_X = mi_correctness(answers);
  r.projection = projection(answers, seed, 100);
  r.projection_error = r.projection.error;
  r.optimism_gap = optimism(answers, true);
  r.optimism_gap_unfiltered = optimism(answers, false);
  for (const auto& j : answers) {
    PromptPropositionStats s;
    s.prompt = j.prompt;
    s.weight = j.weight;
    s.mu_student = j.student_mu;
    s.mean_teacher_mu = mean_teacher_mu(j);
    s.var_teacher_mu = var_teacher_mu(j);
    double teacher = 0.0;
    for (std::size_t z = 0; z < j.teacher_mu.size(); ++z) {
      if (j.teacher_mu[z] >= j.student_mu) {
        s.helpful_mass += j.context_probs[z];
        teacher += j.context_probs[z] * j.teacher_mu[z];
      }
    }
    s.strict_improvement = s.helpful_mass > 0.0 && teacher / s.helpful_mass > j.student_mu;
    r.per_prompt.push_back(s);
  }
  return r;
}

std::vector<std::string> check_propositions(const PropositionReport& r, const PropositionExpectations& expect) {
  std::vector<std::string> violations;
  const double tol = expect.tolerance;
  auto fail = [&](std::string msg) { violations.push_back(std::move(msg)); };

  const std::pair<const char*, double> nonnegative[] = {
      {"I(R;Z|X)", r.mi_R_Z_given_X},
      {"I(A;Z|X)", r.mi_A_Z_given_X},
      {"H(A|X)", r.entropy_A_given_X},
      {"E[H(teacher)]", r.expected_teacher_entropy},
      {"projection error", r.projection_error},
  };
  for (const auto& [name, value] : nonnegative) {
    if (!(value >= -kNonNegativeSlack)) fail(std::string(name) + " is negative: " + format_double(value));
  }

  const double entropy_gap = r.entropy_A_given_X - r.expected_teacher_entropy;
  if (!(std::abs(entropy_gap - r.mi_A_Z_given_X) <= tol)) {
    fail("chain rule violated: H(A|X) - E[H(teacher)] = " + format_double(entropy_gap) + " but I(A;Z|X) = " +
         format_double(r.mi_A_Z_given_X));
  }
  if (r.mi_A_Z_given_X > tol && !(r.expected_teacher_entropy < r.entropy_A_given_X)) {
    fail("entropy collapse inequality violated despite I(A;Z|X) > 0");
  }
  if (!r.projection.argmin_is_mu) fail("a perturbed predictor beat E_Z[mu_T|X] in squared error");
  if (!(r.projection.max_identity_residual <= tol)) {
    fail("squared-error margin identity residual " + format_double(r.projection.max_identity_residual));
  }
  if (!(std::abs(r.projection.student_mse - r.projection.error - r.projection.projection_gap) <= tol)) {
    fail("variance decomposition E[(mu_T - mu)^2] = error + gap violated");
  }
  bool nonconstant = false;
  bool strict_set = false;
  for (const auto& s : r.per_prompt) {
    if (s.weight > 0.0 && s.var_teacher_mu > 0.0) nonconstant = true;
    if (s.weight > 0.0 && s.strict_improvement) strict_set = true;
  }
  if (nonconstant != (r.projection_error > 0.0)) fail("projection error positivity disagrees with per-prompt variance");
  if (strict_set && !(r.optimism_gap > 0.0)) fail("optimism gap not positive despite a strict-improvement set");
  if (!(r.optimism_gap >= -kNonNegativeSlack)) fail("helpful-filtered optimism gap is negative");

  if (expect.expect_strict) {
    if (!(r.mi_A_Z_given_X > tol)) fail("expected I(A;Z|X) > 0, got " + format_double(r.mi_A_Z_given_X));
    if (!(entropy_gap > tol)) fail("expected strict entropy collapse, gap " + format_double(entropy_gap));
    if (!(r.projection_error > tol)) fail("expected positive projection error, got " + format_double(r.projection_error));
    if (!(r.optimism_gap > tol)) fail("expected positive optimism gap, got " + format_double(r.optimism_gap));
  }
  if (expect.expect_null) {
    if (!(std::abs(r.mi_A_Z_given_X) <= tol)) fail("null world: I(A;Z|X) = " + format_double(r.mi_A_Z_given_X));
    if (!(std::abs(r.mi_R_Z_given_X) <= tol)) fail("null world: I(R;Z|X) = " + format_double(r.mi_R_Z_given_X));
    if (!(std::abs(entropy_gap) <= tol)) fail("null world: entropy gap = " + format_double(entropy_gap));
    if (!(std::abs(r.projection_error) <= tol)) fail("null world: projection error = " + format_double(r.projection_error));
    if (!(std::abs(r.optimism_gap) <= tol)) fail("null world: optimism gap = " + format_double(r.optimism_gap));
  }
  return violations;
}

std::string proposition_report_to_json(const PropositionReport& r) {
  nlohmann::ordered_json out;
  out["mi_R_Z_given_X"] = r.mi_R_Z_given_X;
  out["mi_A_Z_given_X"] = r.mi_A_Z_given_X;
  out["entropy_A_given_X"] = r.entropy_A_given_X;
  out["student_entropy_A"] = r.student_entropy_A;
  out["expected_teacher_entropy"] = r.expected_teacher_entropy;
  out["projection_error"] = r.projection_error;
  out["projection_argmin_is_mu"] = r.projection.argmin_is_mu;
  out["projection_perturbations"] = r.projection.perturbations;
  out["projection_identity_residual"] = r.projection.max_identity_residual;
  out["student_mse"] = r.projection.student_mse;
  out["projection_gap"] = r.projection.projection_gap;
  out["optimism_gap"] = r.optimism_gap;
  out["optimism_gap_unfiltered"] = r.optimism_gap_unfiltered;
  auto prompts = nlohmann::ordered_json::array();
  for (const auto& s : r.per_prompt) {
    nlohmann::ordered_json p;
    p["prompt"] = s.prompt;
    p["weight"] = s.weight;
    p["mu"] = s.mu_student;
    p["mean_teacher_mu"] = s.mean_teacher_mu;
    p["var_teacher_mu"] = s.var_teacher_mu;
    p["helpful_mass"] = s.helpful_mass;
    p["strict_improvement"] = s.strict_improvement;
    prompts.push_back(std::move(p));
  }
  out["per_prompt"] = std::move(prompts);
  return out.dump(2) + "\n";
}

std::string proposition_report_to_csv(const PropositionReport& r) {
  std::ostringstream out;
  out << "prompt,weight,mu,mean_teacher_mu,var_teacher_mu,helpful_mass,strict_improvement\n";
  for (const auto& s : r.per_prompt) {
    out << s.prompt << ',' << format_double(s.weight) << ',' << format_double(s.mu_student) << ','
        << format_double(s.mean_teacher_mu) << ',' << format_double(s.var_teacher_mu) << ','
        << format_double(s.helpful_mass) << ',' << (s.strict_improvement ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace opdlab

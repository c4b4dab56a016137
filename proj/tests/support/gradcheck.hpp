#pragma once

// Central finite-difference check of the distillation losses on random configurations.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "opdlab/distill.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
/// Relative error denominator floor; gradients below it are compared absolutely at this scale.
inline constexpr double kFloor = 1e-3;

struct Config {
  opdlab::World world;
  opdlab::Policy student;
  opdlab::Policy teacher;
  opdlab::PromptId x = 0;
  opdlab::PrivilegedContext z;
  opdlab::Trajectory y;
};

/// Random world, perturbed student, distinct teacher, a non-empty context and an on-policy y.
inline Config random_config(std::uint64_t seed, bool revise) {
  using namespace opdlab;
  Rng rng(seed, {99});
  WorldSpec s;
  s.num_prompts = 3;
  s.answer_vocab_size = 2 + static_cast<int>(rng.below(3));
  s.answer_length = 1 + static_cast<int>(rng.below(2));
  s.confidence_levels = 5 + static_cast<int>(rng.below(17));
  s.difficulty = {rng.uniform()};
  s.context_helpfulness = 4.0 * rng.uniform();
  s.context_confidence_bias = 6.0 * rng.uniform();
  s.p_demonstration = 0.5;
  s.p_feedback = 0.3;
  s.p_misleading = 0.1;
  s.seed = seed;
  auto world = World::build(s);
  auto student = Policy::from_world(world);
  auto teacher = student;
  for (double& v : student.parameters().logits) v += rng.normal(0.0, 1.0);
  for (double& v : teacher.parameters().logits) v += rng.normal(0.0, 1.0);
  const PromptId x = world.prompts()[rng.below(world.num_prompts())];
  PrivilegedContext z;
  while (z.kind == ContextKind::kNone) z = world.sample_context(x, rng);
  auto y = sample_trajectory(student, world, x, PrivilegedContext::none(), rng);
  if (revise) {
    const int k = 1 + static_cast<int>(rng.below(16));
    const auto target = make_target(static_cast<int>(rng.below(static_cast<std::uint64_t>(k) + 1)), k, world.grid());
    y = replace_target(y, target, world.grid());
    z = revise_context(z, target);
  }
  return {std::move(world), std::move(student), std::move(teacher), x, z, y};
}

inline double loss(const Config& c, const opdlab::Policy& student, bool revise) {
  return revise ? opdlab::caopd_loss_and_grad(student, c.teacher, c.world, c.x, c.z, c.y).loss.total
                : opdlab::opd_loss_and_grad(student, c.teacher, c.world, c.x, c.z, c.y).loss.total;
}

/// Max relative error of the analytic gradient over every touched entry plus the
/// whole shared confidence row and a sample of untouched entries.
inline double max_relative_error(const Config& c, bool revise) {
  const auto analytic = revise ? opdlab::caopd_loss_and_grad(c.student, c.teacher, c.world, c.x, c.z, c.y).grad
                               : opdlab::opd_loss_and_grad(c.student, c.teacher, c.world, c.x, c.z, c.y).grad;
  std::vector<std::size_t> indices;
  for (const auto& [offset, values] : analytic.rows()) {
    for (std::size_t i = 0; i < values.size(); ++i) indices.push_back(offset + i);
  }
  const std::size_t n = c.student.parameters().logits.size();
  for (std::size_t i = 0; i < n; i += 7) indices.push_back(i);
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

  double worst = 0.0;
  auto probe = c.student;
  for (const std::size_t i : indices) {
    const double original = probe.parameters().logits[i];
    probe.parameters().logits[i] = original + kStep;
    const double up = loss(c, probe, revise);
    probe.parameters().logits[i] = original - kStep;
    const double down = loss(c, probe, revise);
    probe.parameters().logits[i] = original;
    const double numeric = (up - down) / (2.0 * kStep);
    const double a = analytic.at(i);
    const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), kFloor});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace gradcheck

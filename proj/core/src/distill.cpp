#include "opdlab/distill.hpp"

#include <algorithm>
#include <cmath>

namespace opdlab {

ConfidenceTarget make_target(int successes, int k, const ConfidenceGrid& grid) {
  if (k < 1) throw InvalidArgument("confidence target needs k >= 1");
  if (successes < 0 || successes > k) throw InvalidArgument("confidence target: successes outside [0, k]");
  ConfidenceTarget t;
  t.k_used = k;
  t.successes = successes;
  t.raw_mu_hat = static_cast<double>(successes) / static_cast<double>(k);
  t.grid_level = grid.nearest_level(successes, k);
  return t;
}

ConfidenceTarget target_from_rollouts(const World& world, PromptId x, std::span<const Trajectory> rollouts) {
  int successes = 0;
  for (const auto& y : rollouts) successes += world.verify(x, y.answer_path) ? 1 : 0;
  return make_target(successes, static_cast<int>(rollouts.size()), world.grid());
}

ConfidenceTarget monte_carlo_confidence(const Policy& policy, const World& world, PromptId x, int k, Rng& rng,
                                        double temperature) {
  if (k < 1) throw InvalidArgument("monte_carlo_confidence: K must be >= 1");
  int successes = 0;
  for (int i = 0; i < k; ++i) {
    const auto y = sample_trajectory(policy, world, x, PrivilegedContext::none(), rng, temperature);
    successes += world.verify(x, y.answer_path) ? 1 : 0;
  }
  return make_target(successes, k, world.grid());
}

ConfidenceTarget ta_self_consistency(const Policy& policy, const World& world, PromptId x,
                                     const PrivilegedContext& context, int k, Rng& rng, double temperature) {
  if (k < 1) throw InvalidArgument("ta_self_consistency: K must be >= 1");
  if (context.kind == ContextKind::kNone) throw InvalidArgument("ta_self_consistency: a privileged context is required");
  const auto reference = sample_trajectory(policy, world, x, context, rng, temperature);
  int agree = 0;
  for (int i = 0; i < k; ++i) {
    const auto y = sample_trajectory(policy, world, x, PrivilegedContext::none(), rng, temperature);
    agree += y.answer_path == reference.answer_path ? 1 : 0;
  }
  return make_target(agree, k, world.grid());
}

Trajectory replace_target(Trajectory y, const ConfidenceTarget& target, const ConfidenceGrid& grid) {
  y.confidence_token = target.grid_level;
  y.val_c = grid.value(target.grid_level);
  y.log_prob.reset();
  return y;
}

PrivilegedContext revise_context(PrivilegedContext z, const ConfidenceTarget& target) {
  if (z.kind == ContextKind::kNone) throw InvalidArgument("revise_context: context kind none has no confidence to revise");
  z.declared_confidence = target.grid_level;
  return z;
}

KlResult reverse_kl_and_grad(std::span<const double> student_logits, std::span<const double> teacher_probs) {
  if (student_logits.size() != teacher_probs.size()) throw InvalidArgument("reverse_kl: size mismatch");
  for (const double q : teacher_probs) {
    if (!std::isfinite(q) || q < 0.0) throw InvalidArgument("reverse_kl: teacher probabilities must be finite and >= 0");
  }
  const auto log_p = log_softmax(student_logits);  // throws on non-finite logits
  const std::size_t n = log_p.size();
  std::vector<double> ratio(n);
  KlResult out;
  out.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ratio[i] = log_p[i] - std::log(std::max(teacher_probs[i], kTeacherProbFloor));
    out.kl += std::exp(log_p[i]) * ratio[i];
  }
  for (std::size_t i = 0; i < n; ++i) out.grad[i] = std::exp(log_p[i]) * (ratio[i] - out.kl);
  return out;
}

// ---------------------------------------------------------------- gradient map

void GradientMap::add(std::size_t offset, std::span<const double> values, double scale) {
  auto [it, inserted] = rows_.try_emplace(offset, values.size(), 0.0);
  auto& row = it->second;
  if (row.size() != values.size()) throw InvalidArgument("GradientMap: row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) row[i] += scale * values[i];
}

void GradientMap::merge(const GradientMap& other, double scale) {
  for (const auto& [offset, values] : other.rows_) add(offset, values, scale);
}

void GradientMap::scale(double factor) {
  for (auto& [offset, values] : rows_) {
    for (double& v : values) v *= factor;
  }
}

double GradientMap::at(std::size_t index) const {
  auto it = rows_.upper_bound(index);
  if (it == rows_.begin()) return 0.0;
  --it;
  const std::size_t local = index - it->first;
  return local < it->second.size() ? it->second[local] : 0.0;
}

// ---------------------------------------------------------------- losses

namespace {

void add_row_gradient(GradientMap& grad, const Policy& student, PromptId x, std::span<const Token> prefix,
                      std::span<const double> row_grad) {
  const auto& layout = student.layout();
  if (prefix.size() < static_cast<std::size_t>(layout.answer_length())) {
    grad.add(layout.answer_row_offset(x, prefix), row_grad);
  } else {
    // Confidence logits are row + shared, so both receive the same gradient.
    grad.add(layout.confidence_row_offset(x, encode_path(prefix, layout.vocab_size())), row_grad);
    grad.add(layout.shared_confidence_offset(), row_grad);
  }
}

LossResult per_token_reverse_kl(const Policy& student, const Policy& teacher, const World& world, PromptId x,
                                const PrivilegedContext& z, const Trajectory& y) {
  if (!(student.layout() == teacher.layout())) throw InvalidArgument("student and teacher layouts differ");
  const auto length = static_cast<std::size_t>(world.answer_length());
  if (y.answer_path.size() != length) throw InvalidArgument("trajectory answer length mismatch");
  if (z.kind == ContextKind::kNone) throw InvalidArgument("distillation requires a privileged context");

  LossResult out;
  out.position_kl.reserve(length + 1);
  // Position t scores the next token given y_<t. The single confidence token is
  // last, so no position's prefix contains it.
  for (std::size_t t = 0; t <= length; ++t) {
    const std::vector<Token> prefix(y.answer_path.begin(), y.answer_path.begin() + static_cast<std::ptrdiff_t>(t));
    const auto student_logits = student.logits({x, PrivilegedContext::none(), prefix});
    const auto teacher_probs = softmax(teacher.logits({x, z, prefix}));
    const auto kl = reverse_kl_and_grad(student_logits, teacher_probs);
    out.position_kl.push_back(kl.kl);
    (t < length ? out.loss.capability_term : out.loss.calibration_term) += kl.kl;
    add_row_gradient(out.grad, student, x, prefix, kl.grad);
  }
  out.loss.total = out.loss.capability_term + out.loss.calibration_term;
  return out;
}

}  // namespace

LossResult opd_loss_and_grad(const Policy& student, const Policy& ema_teacher, const World& world, PromptId x,
                             const PrivilegedContext& z, const Trajectory& y) {
  return per_token_reverse_kl(student, ema_teacher, world, x, z, y);
}

LossResult caopd_loss_and_grad(const Policy& student, const Policy& ema_teacher, const World& world, PromptId x,
                               const PrivilegedContext& z_tilde, const Trajectory& y_tilde) {
  return per_token_reverse_kl(student, ema_teacher, world, x, z_tilde, y_tilde);
}

// ---------------------------------------------------------------- policy gradient

double brier_penalized_reward(bool correct, double val_c, double lambda) {
  const double r = correct ? 1.0 : 0.0;
  return r - lambda * (val_c - r) * (val_c - r);
}

PolicyGradientResult rlcr_lite_gradient(const Policy& policy, const World& world, PromptId x,
                                        std::span<const Trajectory> batch, double lambda, double temperature) {
  if (!(lambda >= 0.0)) throw InvalidArgument("rlcr_lite: lambda must be >= 0");
  if (batch.empty()) throw InvalidArgument("rlcr_lite: empty batch");
  const std::size_t k = batch.size();
  std::vector<double> rewards(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    rewards[i] = brier_penalized_reward(world.verify(x, batch[i].answer_path), batch[i].val_c, lambda);
    total += rewards[i];
  }
  PolicyGradientResult out;
  out.mean_reward = total / static_cast<double>(k);
  const auto length = static_cast<std::size_t>(world.answer_length());
  for (std::size_t i = 0; i < k; ++i) {
    const double baseline = k > 1 ? (total - rewards[i]) / static_cast<double>(k - 1) : 0.0;
    const double advantage = rewards[i] - baseline;
    if (advantage == 0.0) continue;
    // d log softmax(s / T)[tok] / ds = (onehot(tok) - p) / T
    const double scale = -advantage / (static_cast<double>(k) * temperature);
    for (std::size_t t = 0; t <= length; ++t) {
      const std::vector<Token> prefix(batch[i].answer_path.begin(),
                                      batch[i].answer_path.begin() + static_cast<std::ptrdiff_t>(t));
      auto score = softmax(policy.logits({x, PrivilegedContext::none(), prefix}), temperature);
      for (double& v : score) v = -v;
      const std::size_t token = t < length ? static_cast<std::size_t>(batch[i].answer_path[t])
                                           : static_cast<std::size_t>(batch[i].confidence_token);
      score[token] += 1.0;
      for (double& v : score) v *= scale;
      add_row_gradient(out.grad, policy, x, prefix, score);
    }
  }
  return out;
}

}  // namespace opdlab

#include "opdlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace opdlab {

// ---------------------------------------------------------------- layout

ParameterLayout::ParameterLayout(int vocab_size, int answer_length, int confidence_levels)
    : vocab_(vocab_size), length_(answer_length), levels_(confidence_levels) {
  if (vocab_ < 2 || length_ < 1 || levels_ < 2) throw InvalidArgument("ParameterLayout: invalid dimensions");
  num_paths_ = integer_power(static_cast<std::size_t>(vocab_), length_);
  if (num_paths_ > kMaxEnumerablePaths) throw EnumerationError("ParameterLayout: too many answer paths");
  // 1 + V + ... + V^(T-1) prefixes
  answer_rows_ = (num_paths_ - 1) / static_cast<std::size_t>(vocab_ - 1);
  block_size_ = answer_rows_ * static_cast<std::size_t>(vocab_) + num_paths_ * static_cast<std::size_t>(levels_);
}

std::size_t ParameterLayout::add_prompt(PromptId x) {
  if (slots_.contains(x)) throw InvalidArgument("ParameterLayout: prompt already present: " + std::to_string(x));
  const std::size_t slot = slots_.size();
  slots_.emplace(x, slot);
  return slot;
}

std::vector<PromptId> ParameterLayout::prompts() const {
  std::vector<PromptId> out;
  out.reserve(slots_.size());
  for (const auto& [x, slot] : slots_) out.push_back(x);
  return out;
}

std::size_t ParameterLayout::slot_of(PromptId x) const {
  const auto it = slots_.find(x);
  if (it == slots_.end()) {
    throw InvalidArgument("policy has no logit rows for prompt " + std::to_string(x) + " (world/policy mismatch)");
  }
  return it->second;
}

std::size_t ParameterLayout::answer_row_offset(PromptId x, std::span<const Token> prefix) const {
  if (prefix.size() >= static_cast<std::size_t>(length_)) throw InvalidArgument("answer_row_offset: prefix too long");
  const std::size_t t = prefix.size();
  const std::size_t first_of_depth = (integer_power(static_cast<std::size_t>(vocab_), static_cast<int>(t)) - 1) /
                                     static_cast<std::size_t>(vocab_ - 1);
  const std::size_t row = first_of_depth + encode_path(prefix, vocab_);
  return confidence_levels_offset() + slot_of(x) * block_size_ + row * static_cast<std::size_t>(vocab_);
}

std::size_t ParameterLayout::confidence_row_offset(PromptId x, std::size_t path_code) const {
  if (path_code >= num_paths_) throw InvalidArgument("confidence_row_offset: path code out of range");
  return confidence_levels_offset() + slot_of(x) * block_size_ + answer_rows_ * static_cast<std::size_t>(vocab_) +
         path_code * static_cast<std::size_t>(levels_);
}

int ParameterLayout::row_width(std::size_t prefix_length) const {
  return prefix_length < static_cast<std::size_t>(length_) ? vocab_ : levels_;
}

// ---------------------------------------------------------------- softmax

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw InvalidArgument("log_softmax: empty logits");
  if (!(temperature > 0.0)) throw InvalidArgument("log_softmax: temperature must be positive");
  std::vector<double> out(logits.size());
  double max_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw InvalidArgument("log_softmax: non-finite logit");
    out[i] = temperature == 1.0 ? logits[i] : logits[i] / temperature;
    max_value = std::max(max_value, out[i]);
  }
  double sum = 0.0;
  for (double& v : out) {
    v -= max_value;
    sum += std::exp(v);
  }
  const double log_sum = std::log(sum);
  for (double& v : out) v -= log_sum;
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  auto out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

// ---------------------------------------------------------------- policy

namespace {

void init_prompt_rows(PolicyParameters& params, const World& world, PromptId x) {
  const auto& layout = params.layout;
  const int vocab = layout.vocab_size();
  const int length = layout.answer_length();
  const std::size_t index = world.index_of(x);
  const auto& spec = world.spec();
  const double noise = spec.logit_noise * world.difficulty(x);
  const auto& truth = world.truth(x);

  Rng rng(spec.seed, {static_cast<std::uint64_t>(Stream::kPolicyInit), index});
  for (int t = 0; t < length; ++t) {
    const std::size_t count = integer_power(static_cast<std::size_t>(vocab), t);
    for (std::size_t code = 0; code < count; ++code) {
      const AnswerPath prefix = decode_path(code, vocab, t);
      const std::size_t offset = layout.answer_row_offset(x, prefix);
      for (int v = 0; v < vocab; ++v) {
        params.logits[offset + static_cast<std::size_t>(v)] = noise > 0.0 ? rng.normal(0.0, noise) : 0.0;
      }
      if (std::equal(prefix.begin(), prefix.end(), truth.begin())) {
        params.logits[offset + static_cast<std::size_t>(truth[static_cast<std::size_t>(t)])] += spec.skill_logit;
      }
    }
  }
  for (std::size_t code = 0; code < layout.num_paths(); ++code) {
    const std::size_t offset = layout.confidence_row_offset(x, code);
    for (int c = 0; c < layout.confidence_levels(); ++c) {
      params.logits[offset + static_cast<std::size_t>(c)] =
          spec.confidence_logit_noise > 0.0 ? rng.normal(0.0, spec.confidence_logit_noise) : 0.0;
    }
  }
}

void check_key(const Policy& policy, const ConditioningKey& key) {
  const auto& layout = policy.layout();
  if (key.prefix.size() > static_cast<std::size_t>(layout.answer_length())) {
    throw InvalidArgument("conditioning prefix longer than the answer segment");
  }
  for (const Token t : key.prefix) {
    if (t < 0 || t >= layout.vocab_size()) throw InvalidArgument("conditioning prefix token out of vocabulary");
  }
  if (key.context.kind == ContextKind::kNone && (key.context.demonstrated_path || key.context.declared_confidence)) {
    throw InvalidArgument("context kind none must not carry a path or confidence");
  }
  if (key.context.declared_confidence && !policy.grid().contains(*key.context.declared_confidence)) {
    throw InvalidArgument("declared confidence is not a grid level");
  }
}

}  // namespace

Policy Policy::from_world(const World& world) {
  const auto& spec = world.spec();
  PolicyParameters params{ParameterLayout(spec.answer_vocab_size, spec.answer_length, spec.confidence_levels), {}};
  Policy policy(std::move(params), IclBias{spec.context_helpfulness, spec.context_confidence_bias}, world.grid());
  policy.add_world(world);
  return policy;
}

void Policy::add_world(const World& world) {
  const auto& spec = world.spec();
  if (spec.answer_vocab_size != layout().vocab_size() || spec.answer_length != layout().answer_length() ||
      spec.confidence_levels != layout().confidence_levels()) {
    throw InvalidArgument("Policy::add_world: world dimensions differ from the policy layout");
  }
  for (const PromptId x : world.prompts()) params_.layout.add_prompt(x);
  params_.logits.resize(params_.layout.size(), 0.0);
  for (const PromptId x : world.prompts()) init_prompt_rows(params_, world, x);
}

std::vector<double> Policy::logits(const ConditioningKey& key) const {
  check_key(*this, key);
  const auto& layout = this->layout();
  const std::size_t t = key.prefix.size();
  std::vector<double> out;
  if (t < static_cast<std::size_t>(layout.answer_length())) {
    const auto row = params_.row(layout.answer_row_offset(key.prompt, key.prefix), layout.vocab_size());
    out.assign(row.begin(), row.end());
    const auto& demo = key.context.demonstrated_path;
    if (demo && t < demo->size()) {
      const Token target = (*demo)[t];
      if (target < 0 || target >= layout.vocab_size()) throw InvalidArgument("demonstrated token out of vocabulary");
      out[static_cast<std::size_t>(target)] += bias_.answer;
    }
  } else {
    const std::size_t code = encode_path(key.prefix, layout.vocab_size());
    const auto row = params_.row(layout.confidence_row_offset(key.prompt, code), layout.confidence_levels());
    const auto shared = params_.row(layout.shared_confidence_offset(), layout.confidence_levels());
    out.resize(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] + shared[i];
    if (key.context.declared_confidence) {
      out[static_cast<std::size_t>(*key.context.declared_confidence)] += bias_.confidence;
    }
  }
  return out;
}

std::vector<double> token_distribution(const Policy& policy, const ConditioningKey& key, double temperature) {
  return softmax(policy.logits(key), temperature);
}

Trajectory sample_trajectory(const Policy& policy, const World& world, PromptId x, const PrivilegedContext& context,
                             Rng& rng, double temperature) {
  const int length = world.answer_length();
  ConditioningKey key{x, context, {}};
  key.prefix.reserve(static_cast<std::size_t>(length));
  double log_prob = 0.0;
  for (int t = 0; t < length; ++t) {
    const auto log_probs = log_softmax(policy.logits(key), temperature);
    std::vector<double> probs(log_probs.size());
    std::transform(log_probs.begin(), log_probs.end(), probs.begin(), [](double v) { return std::exp(v); });
    const auto token = rng.categorical(probs);
    log_prob += log_probs[token];
    key.prefix.push_back(static_cast<Token>(token));
  }
  const auto log_probs = log_softmax(policy.logits(key), temperature);
  std::vector<double> probs(log_probs.size());
  std::transform(log_probs.begin(), log_probs.end(), probs.begin(), [](double v) { return std::exp(v); });
  const auto level = static_cast<int>(rng.categorical(probs));
  log_prob += log_probs[static_cast<std::size_t>(level)];

  Trajectory y;
  y.answer_path = std::move(key.prefix);
  y.confidence_token = level;
  y.log_prob = log_prob;
  y.val_c = policy.grid().value(level);
  return y;
}

namespace {

// Log-probabilities of every full answer path, by depth-first expansion of prefixes.
std::vector<double> answer_path_log_probs(const Policy& policy, PromptId x, const PrivilegedContext& context) {
  const auto& layout = policy.layout();
  const int vocab = layout.vocab_size();
  const int length = layout.answer_length();
  std::vector<double> current{0.0};
  for (int t = 0; t < length; ++t) {
    std::vector<double> next(current.size() * static_cast<std::size_t>(vocab));
    for (std::size_t code = 0; code < current.size(); ++code) {
      const ConditioningKey key{x, context, decode_path(code, vocab, t)};
      const auto log_probs = log_softmax(policy.logits(key));
      for (int v = 0; v < vocab; ++v) {
        next[code * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(v)] =
            current[code] + log_probs[static_cast<std::size_t>(v)];
      }
    }
    current = std::move(next);
  }
  return current;
}

void check_world(const Policy& policy, const World& world, PromptId x) {
  if (!world.has_prompt(x)) throw InvalidArgument("unknown prompt id: " + std::to_string(x));
  if (world.vocab_size() != policy.layout().vocab_size() || world.answer_length() != policy.layout().answer_length() ||
      world.grid() != policy.grid()) {
    throw InvalidArgument("world and policy dimensions differ");
  }
}

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const Policy& policy, const World& world, PromptId x,
                                                       const PrivilegedContext& context) {
  check_world(policy, world, x);
  const std::size_t levels = static_cast<std::size_t>(policy.grid().size());
  if (world.num_paths() * levels > kMaxEnumerablePaths * 64) {
    throw EnumerationError("enumerate_trajectories: trajectory space too large");
  }
  const auto path_log_probs = answer_path_log_probs(policy, x, context);
  std::vector<WeightedTrajectory> out;
  out.reserve(path_log_probs.size() * levels);
  for (std::size_t code = 0; code < path_log_probs.size(); ++code) {
    const AnswerPath path = decode_path(code, world.vocab_size(), world.answer_length());
    const auto conf_log_probs = log_softmax(policy.logits({x, context, path}));
    for (std::size_t c = 0; c < levels; ++c) {
      WeightedTrajectory wt;
      wt.trajectory.answer_path = path;
      wt.trajectory.confidence_token = static_cast<int>(c);
      wt.trajectory.log_prob = path_log_probs[code] + conf_log_probs[c];
      wt.trajectory.val_c = policy.grid().value(static_cast<int>(c));
      wt.probability = std::exp(*wt.trajectory.log_prob);
      out.push_back(std::move(wt));
    }
  }
  return out;
}

std::vector<double> answer_path_distribution(const Policy& policy, const World& world, PromptId x,
                                             const PrivilegedContext& context) {
  check_world(policy, world, x);
  auto out = answer_path_log_probs(policy, x, context);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double> confidence_distribution(const Policy& policy, PromptId x, std::span<const Token> path,
                                            const PrivilegedContext& context) {
  if (path.size() != static_cast<std::size_t>(policy.layout().answer_length())) {
    throw InvalidArgument("confidence_distribution: path must be a full answer");
  }
  return softmax(policy.logits({x, context, AnswerPath(path.begin(), path.end())}));
}

double exact_success_prob(const Policy& policy, const World& world, PromptId x, const PrivilegedContext& context) {
  check_world(policy, world, x);
  const auto log_probs = answer_path_log_probs(policy, x, context);
  return std::exp(log_probs[world.truth_code(x)]);
}

void ema_update(PolicyParameters& shadow, const PolicyParameters& live, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("ema_update: alpha must lie in (0, 1]");
  if (!(shadow.layout == live.layout) || shadow.logits.size() != live.logits.size()) {
    throw InvalidArgument("ema_update: shadow and live parameter key sets differ");
  }
  const double keep = 1.0 - alpha;
  for (std::size_t i = 0; i < shadow.logits.size(); ++i) {
    shadow.logits[i] = keep * shadow.logits[i] + alpha * live.logits[i];
  }
}

}  // namespace opdlab

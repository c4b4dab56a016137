#include "opdlab/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace opdlab {

// ---------------------------------------------------------------- grid

ConfidenceGrid::ConfidenceGrid(int intervals) : intervals_(intervals) {
  if (intervals < 1) throw InvalidArgument("confidence grid needs at least 2 levels");
}

double ConfidenceGrid::value(int level) const {
  if (!contains(level)) throw InvalidArgument("confidence level out of range: " + std::to_string(level));
  return static_cast<double>(level) / static_cast<double>(intervals_);
}

int ConfidenceGrid::nearest_level(long long successes, long long trials) const {
  if (trials <= 0 || successes < 0 || successes > trials) {
    throw InvalidArgument("nearest_level: need 0 <= successes <= trials, trials > 0");
  }
  // floor(s/k * G + 1/2) == floor((2 s G + k) / (2 k))
  return static_cast<int>((2 * successes * intervals_ + trials) / (2 * trials));
}

int ConfidenceGrid::level_of(double v) const {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("confidence value outside [0,1]");
  const int level = static_cast<int>(std::lround(v * intervals_));
  if (value(level) != v) throw InvalidArgument("confidence value " + format_double(v) + " is not on the grid");
  return level;
}

// ---------------------------------------------------------------- contexts

std::string_view to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::kNone: return "none";
    case ContextKind::kDemonstration: return "demonstration";
    case ContextKind::kSuccessfulRollout: return "successful_rollout";
    case ContextKind::kFeedback: return "feedback";
  }
  return "unknown";
}

std::string PrivilegedContext::summary() const {
  if (kind == ContextKind::kNone) return "none";
  std::string out(to_string(kind));
  if (demonstrated_path) {
    out += ':';
    for (std::size_t i = 0; i < demonstrated_path->size(); ++i) {
      if (i) out += '.';
      out += std::to_string((*demonstrated_path)[i]);
    }
  }
  if (declared_confidence) out += "|conf=" + std::to_string(*declared_confidence);
  return out;
}

// ---------------------------------------------------------------- paths

std::size_t integer_power(std::size_t base, int exponent) {
  std::size_t out = 1;
  for (int i = 0; i < exponent; ++i) out *= base;
  return out;
}

std::size_t encode_path(std::span<const Token> path, int vocab_size) {
  std::size_t code = 0;
  for (const Token t : path) {
    if (t < 0 || t >= vocab_size) throw InvalidArgument("token out of vocabulary: " + std::to_string(t));
    code = code * static_cast<std::size_t>(vocab_size) + static_cast<std::size_t>(t);
  }
  return code;
}

AnswerPath decode_path(std::size_t code, int vocab_size, int length) {
  AnswerPath path(static_cast<std::size_t>(length));
  for (int t = length - 1; t >= 0; --t) {
    path[static_cast<std::size_t>(t)] = static_cast<Token>(code % static_cast<std::size_t>(vocab_size));
    code /= static_cast<std::size_t>(vocab_size);
  }
  return path;
}

// ---------------------------------------------------------------- spec

std::size_t WorldSpec::num_paths() const { return integer_power(static_cast<std::size_t>(answer_vocab_size), answer_length); }

double WorldSpec::difficulty_of(int prompt_index) const {
  if (difficulty.size() == 1) return difficulty.front();
  return difficulty.at(static_cast<std::size_t>(prompt_index));
}

void WorldSpec::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("WorldSpec: " + msg); };
  if (num_prompts < 1) fail("num_prompts must be >= 1");
  if (answer_vocab_size < 2 || answer_vocab_size > 16) fail("answer_vocab_size must be in [2, 16]");
  if (answer_length < 1 || answer_length > 3) fail("answer_length must be in [1, 3]");
  if (num_paths() > kMaxEnumerablePaths) {
    throw EnumerationError("WorldSpec: answer_vocab_size^answer_length exceeds " +
                           std::to_string(kMaxEnumerablePaths));
  }
  if (confidence_levels < 2) fail("confidence_levels must be >= 2 (G >= 1)");
  if (difficulty.empty() || (difficulty.size() != 1 && difficulty.size() != static_cast<std::size_t>(num_prompts))) {
    fail("difficulty must have 1 or num_prompts entries");
  }
  for (const double d : difficulty) {
    if (!(d >= 0.0 && d <= 1.0)) fail("difficulty entries must lie in [0, 1]");
  }
  if (!(context_helpfulness >= 0.0) || !std::isfinite(context_helpfulness)) fail("context_helpfulness must be >= 0");
  if (!(context_confidence_bias >= 0.0) || !std::isfinite(context_confidence_bias)) {
    fail("context_confidence_bias must be >= 0");
  }
  if (!prompt_weights.empty()) {
    if (prompt_weights.size() != static_cast<std::size_t>(num_prompts)) fail("prompt_weights must have num_prompts entries");
    for (const double w : prompt_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) fail("prompt_weights must be positive");
    }
  }
  for (const double p : {p_demonstration, p_feedback, feedback_prefix_prob, p_misleading}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("context probabilities must lie in [0, 1]");
  }
  if (p_demonstration + p_feedback + p_misleading > 1.0 + 1e-12) fail("context probabilities sum above 1");
  for (const double s : {skill_logit, logit_noise, confidence_logit_noise}) {
    if (!std::isfinite(s)) fail("initialization parameters must be finite");
  }
  if (logit_noise < 0.0 || confidence_logit_noise < 0.0) fail("noise scales must be >= 0");
}

WorldSpec WorldSpec::from_config(const KeyValueConfig& config) {
  config.reject_unknown({"num_prompts", "answer_vocab_size", "answer_length", "confidence_levels", "difficulty",
                         "context_helpfulness", "context_confidence_bias", "seed", "prompt_id_offset",
                         "prompt_weights", "p_demonstration", "p_feedback", "feedback_prefix_prob",
                         "p_misleading", "skill_logit", "logit_noise", "confidence_logit_noise"});
  WorldSpec spec;
  spec.num_prompts = static_cast<int>(config.get_int("num_prompts", spec.num_prompts));
  spec.answer_vocab_size = static_cast<int>(config.get_int("answer_vocab_size", spec.answer_vocab_size));
  spec.answer_length = static_cast<int>(config.get_int("answer_length", spec.answer_length));
  spec.confidence_levels = static_cast<int>(config.get_int("confidence_levels", spec.confidence_levels));
  if (config.contains("difficulty")) spec.difficulty = config.get_doubles("difficulty");
  spec.context_helpfulness = config.get_double("context_helpfulness", spec.context_helpfulness);
  spec.context_confidence_bias = config.get_double("context_confidence_bias", spec.context_confidence_bias);
  const auto seed = config.get_int("seed", static_cast<long long>(spec.seed));
  if (seed < 0) throw InvalidArgument("WorldSpec: seed must be non-negative");
  spec.seed = static_cast<std::uint64_t>(seed);
  spec.prompt_id_offset = static_cast<PromptId>(config.get_int("prompt_id_offset", spec.prompt_id_offset));
  spec.prompt_weights = config.get_doubles("prompt_weights");
  spec.p_demonstration = config.get_double("p_demonstration", spec.p_demonstration);
  spec.p_feedback = config.get_double("p_feedback", spec.p_feedback);
  spec.feedback_prefix_prob = config.get_double("feedback_prefix_prob", spec.feedback_prefix_prob);
  spec.p_misleading = config.get_double("p_misleading", spec.p_misleading);
  spec.skill_logit = config.get_double("skill_logit", spec.skill_logit);
  spec.logit_noise = config.get_double("logit_noise", spec.logit_noise);
  spec.confidence_logit_noise = config.get_double("confidence_logit_noise", spec.confidence_logit_noise);
  spec.validate();
  return spec;
}

KeyValueConfig WorldSpec::to_config() const {
  auto join = [](const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out += ", ";
      out += format_double(values[i]);
    }
    return out;
  };
  KeyValueConfig config;
  config.set("num_prompts", std::to_string(num_prompts));
  config.set("answer_vocab_size", std::to_string(answer_vocab_size));
  config.set("answer_length", std::to_string(answer_length));
  config.set("confidence_levels", std::to_string(confidence_levels));
  config.set("difficulty", join(difficulty));
  config.set("context_helpfulness", format_double(context_helpfulness));
  config.set("context_confidence_bias", format_double(context_confidence_bias));
  config.set("seed", std::to_string(seed));
  config.set("prompt_id_offset", std::to_string(prompt_id_offset));
  if (!prompt_weights.empty()) config.set("prompt_weights", join(prompt_weights));
  config.set("p_demonstration", format_double(p_demonstration));
  config.set("p_feedback", format_double(p_feedback));
  config.set("feedback_prefix_prob", format_double(feedback_prefix_prob));
  config.set("p_misleading", format_double(p_misleading));
  config.set("skill_logit", format_double(skill_logit));
  config.set("logit_noise", format_double(logit_noise));
  config.set("confidence_logit_noise", format_double(confidence_logit_noise));
  return config;
}

// ---------------------------------------------------------------- world

World World::build(const WorldSpec& spec) {
  spec.validate();
  World world(spec, ConfidenceGrid(spec.confidence_levels - 1));
  const int vocab = spec.answer_vocab_size;
  const int length = spec.answer_length;
  world.num_paths_ = spec.num_paths();

  const auto n = static_cast<std::size_t>(spec.num_prompts);
  world.prompts_.resize(n);
  world.truth_.resize(n);
  world.contexts_.resize(n);
  world.weights_.assign(n, 1.0 / static_cast<double>(n));
  if (!spec.prompt_weights.empty()) {
    const double total = std::accumulate(spec.prompt_weights.begin(), spec.prompt_weights.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) world.weights_[i] = spec.prompt_weights[i] / total;
  }

  const int top = world.grid_.top();
  const int prefix_len = length / 2;
  for (std::size_t i = 0; i < n; ++i) {
    world.prompts_[i] = spec.prompt_id_offset + static_cast<PromptId>(i);

    Rng truth_rng(spec.seed, {static_cast<std::uint64_t>(Stream::kTruth), i});
    AnswerPath truth(static_cast<std::size_t>(length));
    for (auto& tok : truth) tok = static_cast<Token>(truth_rng.below(static_cast<std::uint64_t>(vocab)));
    world.truth_[i] = truth;

    auto& support = world.contexts_[i];
    const double p_feedback_full = spec.p_feedback * (1.0 - spec.feedback_prefix_prob);
    const double p_feedback_prefix = spec.p_feedback * spec.feedback_prefix_prob;
    const double p_none =
        std::max(0.0, 1.0 - spec.p_demonstration - p_feedback_full - p_feedback_prefix - spec.p_misleading);
    if (p_none > 0.0) support.push_back({PrivilegedContext::none(), p_none});
    if (spec.p_demonstration > 0.0) {
      support.push_back({{ContextKind::kDemonstration, truth, top}, spec.p_demonstration});
    }
    if (p_feedback_full > 0.0) support.push_back({{ContextKind::kFeedback, truth, std::nullopt}, p_feedback_full});
    if (p_feedback_prefix > 0.0) {
      AnswerPath prefix(truth.begin(), truth.begin() + prefix_len);
      support.push_back({{ContextKind::kFeedback, prefix, std::nullopt}, p_feedback_prefix});
    }
    if (spec.p_misleading > 0.0) {
      Rng wrong_rng(spec.seed, {static_cast<std::uint64_t>(Stream::kContextChoice), i});
      const std::size_t truth_code = encode_path(truth, vocab);
      std::size_t code = wrong_rng.below(world.num_paths_ - 1);
      if (code >= truth_code) ++code;
      support.push_back({{ContextKind::kDemonstration, decode_path(code, vocab, length), top}, spec.p_misleading});
    }
    double total = 0.0;
    for (const auto& wc : support) total += wc.probability;
    if (std::abs(total - 1.0) > 1e-12) throw Error("context distribution does not normalize");
  }
  return world;
}

bool World::has_prompt(PromptId x) const {
  const auto offset = static_cast<long long>(x) - spec_.prompt_id_offset;
  return offset >= 0 && offset < static_cast<long long>(prompts_.size());
}

std::size_t World::index_of(PromptId x) const {
  if (!has_prompt(x)) throw InvalidArgument("unknown prompt id: " + std::to_string(x));
  return static_cast<std::size_t>(x - spec_.prompt_id_offset);
}

std::size_t World::truth_code(PromptId x) const { return encode_path(truth(x), vocab_size()); }

bool World::verify(PromptId x, std::span<const Token> path) const {
  const auto& gold = truth(x);
  if (path.size() != gold.size()) {
    throw InvalidArgument("verify: path length " + std::to_string(path.size()) + " != " + std::to_string(gold.size()));
  }
  for (const Token t : path) {
    if (t < 0 || t >= vocab_size()) throw InvalidArgument("verify: token out of vocabulary");
  }
  return std::equal(path.begin(), path.end(), gold.begin());
}

PrivilegedContext World::sample_context(PromptId x, Rng& rng) const {
  const auto support = contexts(x);
  std::vector<double> probs;
  probs.reserve(support.size());
  for (const auto& wc : support) probs.push_back(wc.probability);
  return support[rng.categorical(probs)].context;
}

std::string World::to_json() const {
  using nlohmann::ordered_json;
  ordered_json out;
  out["num_prompts"] = prompts_.size();
  out["answer_vocab_size"] = vocab_size();
  out["answer_length"] = answer_length();
  out["confidence_levels"] = grid_.size();
  out["context_helpfulness"] = spec_.context_helpfulness;
  out["context_confidence_bias"] = spec_.context_confidence_bias;
  out["seed"] = spec_.seed;
  ordered_json prompts = ordered_json::array();
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    ordered_json p;
    p["id"] = prompts_[i];
    p["weight"] = weights_[i];
    p["difficulty"] = spec_.difficulty_of(static_cast<int>(i));
    p["truth"] = truth_[i];
    ordered_json ctxs = ordered_json::array();
    for (const auto& wc : contexts_[i]) {
      ordered_json c;
      c["kind"] = std::string(to_string(wc.context.kind));
      c["demonstrated_path"] = wc.context.demonstrated_path ? ordered_json(*wc.context.demonstrated_path) : ordered_json();
      c["declared_confidence"] =
          wc.context.declared_confidence ? ordered_json(grid_.value(*wc.context.declared_confidence)) : ordered_json();
      c["probability"] = wc.probability;
      ctxs.push_back(std::move(c));
    }
    p["contexts"] = std::move(ctxs);
    prompts.push_back(std::move(p));
  }
  out["prompts"] = std::move(prompts);
  return out.dump(2) + "\n";
}

bool World::operator==(const World& other) const {
  if (!(spec_ == other.spec_) || prompts_ != other.prompts_ || truth_ != other.truth_ || weights_ != other.weights_) {
    return false;
  }
  if (contexts_.size() != other.contexts_.size()) return false;
  for (std::size_t i = 0; i < contexts_.size(); ++i) {
    if (contexts_[i].size() != other.contexts_[i].size()) return false;
    for (std::size_t j = 0; j < contexts_[i].size(); ++j) {
      if (contexts_[i][j].context != other.contexts_[i][j].context ||
          contexts_[i][j].probability != other.contexts_[i][j].probability) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- builders

PrivilegedContext build_sdft_context(const World& world, PromptId x) {
  return {ContextKind::kDemonstration, world.truth(x), world.grid().top()};
}

std::optional<PrivilegedContext> build_sdpo_context(const World& world, PromptId x,
                                                    std::span<const Trajectory> batch) {
  for (const auto& y : batch) {
    if (world.verify(x, y.answer_path)) {
      return PrivilegedContext{ContextKind::kSuccessfulRollout, y.answer_path, y.confidence_token};
    }
  }
  return std::nullopt;
}

}  // namespace opdlab

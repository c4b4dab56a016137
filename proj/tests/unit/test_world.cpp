#include <gtest/gtest.h>

#include <map>

#include "opdlab/common.hpp"
#include "opdlab/random.hpp"
#include "opdlab/world.hpp"

using namespace opdlab;

namespace {

WorldSpec small_spec() {
  WorldSpec s;
  s.num_prompts = 8;
  s.answer_vocab_size = 4;
  s.answer_length = 2;
  s.seed = 7;
  return s;
}

}  // namespace

TEST(World, BuildIsDeterministic) {
  EXPECT_TRUE(World::build(small_spec()) == World::build(small_spec()));
  auto other = small_spec();
  other.seed = 8;
  EXPECT_FALSE(World::build(small_spec()) == World::build(other));
}

TEST(World, BinaryWorldHasTwoPaths) {
  auto s = small_spec();
  s.answer_vocab_size = 2;
  s.answer_length = 1;
  EXPECT_EQ(World::build(s).num_paths(), 2u);
}

TEST(World, TruthReproducedByReseeding) {
  const auto spec = small_spec();
  const auto w = World::build(spec);
  EXPECT_EQ(w.num_paths(), 16u);
  for (std::size_t i = 0; i < w.num_prompts(); ++i) {
    Rng rng(spec.seed, {stream_id(Stream::kTruth), i});
    AnswerPath expected(2);
    for (auto& t : expected) t = static_cast<Token>(rng.below(4));
    EXPECT_EQ(w.truth(w.prompts()[i]), expected);
  }
}

TEST(World, VerifyAcceptsOnlyTheTruth) {
  const auto w = World::build(small_spec());
  for (const PromptId x : w.prompts()) {
    int verified = 0;
    for (std::size_t code = 0; code < w.num_paths(); ++code) {
      verified += w.verify(x, decode_path(code, 4, 2)) ? 1 : 0;
    }
    EXPECT_EQ(verified, 1);
    EXPECT_TRUE(w.verify(x, w.truth(x)));
  }
  EXPECT_THROW(w.verify(999, w.truth(0)), InvalidArgument);
  EXPECT_THROW(w.verify(0, AnswerPath{0}), InvalidArgument);
}

TEST(World, RejectsInfeasibleSpecs) {
  auto s = small_spec();
  s.answer_length = 4;
  EXPECT_THROW(World::build(s), InvalidArgument);
  s = small_spec();
  s.answer_vocab_size = 1;
  EXPECT_THROW(World::build(s), InvalidArgument);
  s = small_spec();
  s.confidence_levels = 1;
  EXPECT_THROW(World::build(s), InvalidArgument);
  s = small_spec();
  s.p_demonstration = 0.8;
  s.p_misleading = 0.4;
  EXPECT_THROW(World::build(s), InvalidArgument);
}

TEST(World, ContextDistributionsNormalize) {
  auto s = small_spec();
  s.p_demonstration = 0.3;
  s.p_feedback = 0.4;
  s.p_misleading = 0.1;
  const auto w = World::build(s);
  for (const PromptId x : w.prompts()) {
    double total = 0.0;
    for (const auto& wc : w.contexts(x)) {
      total += wc.probability;
      if (wc.context.kind == ContextKind::kNone) {
        EXPECT_FALSE(wc.context.demonstrated_path);
        EXPECT_FALSE(wc.context.declared_confidence);
      }
      if (wc.context.declared_confidence) {
        EXPECT_TRUE(w.grid().contains(*wc.context.declared_confidence));
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(World, MisleadingDemonstrationIsWrong) {
  auto s = small_spec();
  s.p_misleading = 0.2;
  const auto w = World::build(s);
  for (const PromptId x : w.prompts()) {
    const auto ctx = w.contexts(x);
    const auto& last = ctx.back();
    EXPECT_DOUBLE_EQ(last.probability, 0.2);
    EXPECT_FALSE(w.verify(x, *last.context.demonstrated_path));
  }
}

TEST(World, SampledContextFrequenciesMatch) {
  auto s = small_spec();
  s.p_demonstration = 0.3;
  s.p_feedback = 0.4;
  const auto w = World::build(s);
  const PromptId x = w.prompts()[2];
  std::map<std::string, int> counts;
  Rng rng(99);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[w.sample_context(x, rng).summary()];
  double chi2 = 0.0;
  for (const auto& wc : w.contexts(x)) {
    const double expected = wc.probability * n;
    const double d = counts[wc.context.summary()] - expected;
    chi2 += d * d / expected;
  }
  // 3 degrees of freedom; 16.27 is the 0.999 quantile.
  EXPECT_LT(chi2, 16.27);
}

TEST(World, SdftContextRevealsTruthAtFullConfidence) {
  const auto w = World::build(small_spec());
  for (const PromptId x : w.prompts()) {
    const auto z = build_sdft_context(w, x);
    EXPECT_EQ(z.kind, ContextKind::kDemonstration);
    EXPECT_EQ(*z.demonstrated_path, w.truth(x));
    EXPECT_EQ(w.grid().value(*z.declared_confidence), 1.0);
    EXPECT_TRUE(w.verify(x, *z.demonstrated_path));
  }
}

TEST(World, SdpoContextUsesFirstVerifiedRollout) {
  const auto w = World::build(small_spec());
  const PromptId x = w.prompts()[0];
  const auto truth = w.truth(x);
  AnswerPath wrong = truth;
  wrong[0] = (wrong[0] + 1) % 4;
  const int level_08 = w.grid().level_of(0.8);

  EXPECT_FALSE(build_sdpo_context(w, x, std::vector<Trajectory>{{wrong, 3, {}, 0.15}}));

  const std::vector<Trajectory> mixed{{wrong, 20, {}, 1.0}, {truth, level_08, {}, 0.8}};
  const auto z = build_sdpo_context(w, x, mixed);
  ASSERT_TRUE(z);
  EXPECT_EQ(z->kind, ContextKind::kSuccessfulRollout);
  EXPECT_EQ(*z->demonstrated_path, truth);
  EXPECT_EQ(*z->declared_confidence, level_08);

  std::vector<Trajectory> all_correct;
  for (int i = 0; i < 8; ++i) all_correct.push_back({truth, i, {}, w.grid().value(i)});
  EXPECT_EQ(*build_sdpo_context(w, x, all_correct)->declared_confidence, 0);
}

TEST(World, SpecConfigRoundTrip) {
  auto s = small_spec();
  s.difficulty = {0.1, 0.9};
  s.prompt_weights = {1, 2, 3, 4, 5, 6, 7, 8};
  s.num_prompts = 8;
  EXPECT_THROW(WorldSpec::from_config(s.to_config()), InvalidArgument);  // difficulty length mismatch
  s.difficulty = {0.25};
  const auto back = WorldSpec::from_config(s.to_config());
  EXPECT_TRUE(back == s);
  auto bad = s.to_config();
  bad.set("typo_key", "1");
  EXPECT_THROW(WorldSpec::from_config(bad), InvalidArgument);
}

TEST(World, PromptWeightsNormalize) {
  auto s = small_spec();
  s.prompt_weights = {1, 1, 1, 1, 2, 2, 2, 2};
  const auto w = World::build(s);
  EXPECT_DOUBLE_EQ(w.weight(0), 1.0 / 12.0);
  EXPECT_DOUBLE_EQ(w.weight(7), 2.0 / 12.0);
}

TEST(Paths, EncodeDecodeRoundTrip) {
  for (std::size_t code = 0; code < 27; ++code) EXPECT_EQ(encode_path(decode_path(code, 3, 3), 3), code);
  EXPECT_EQ(encode_path(AnswerPath{1, 2}, 4), 6u);
}

TEST(Grid, DecodeAndNearestLevel) {
  const ConfidenceGrid g(20);
  for (int l = 0; l <= 20; ++l) EXPECT_EQ(g.level_of(g.value(l)), l);
  EXPECT_EQ(g.value(20), 1.0);
  // 0.125 sits halfway between 0.10 and 0.15: ties round up.
  EXPECT_EQ(g.nearest_level(1, 8), 3);
  EXPECT_EQ(g.nearest_level(6, 8), 15);
  EXPECT_EQ(g.nearest_level(0, 8), 0);
  EXPECT_EQ(g.nearest_level(8, 8), 20);
  EXPECT_THROW(g.level_of(0.33), InvalidArgument);
  EXPECT_THROW(ConfidenceGrid(0), InvalidArgument);
}

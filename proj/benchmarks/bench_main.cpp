#include <benchmark/benchmark.h>

#include "opdlab/metrics.hpp"
#include "opdlab/trainer.hpp"

namespace {

opdlab::WorldSpec bench_spec(int vocab, int length) {
  opdlab::WorldSpec s;
  s.num_prompts = 16;
  s.answer_vocab_size = vocab;
  s.answer_length = length;
  s.seed = 5;
  return s;
}

void BM_EnumerateTrajectories(benchmark::State& state) {
  const auto world = opdlab::World::build(bench_spec(static_cast<int>(state.range(0)), static_cast<int>(state.range(1))));
  const auto policy = opdlab::Policy::from_world(world);
  for (auto _ : state) {
    benchmark::DoNotOptimize(opdlab::enumerate_trajectories(policy, world, world.prompts()[0], {}));
  }
}
BENCHMARK(BM_EnumerateTrajectories)->Args({4, 2})->Args({8, 2})->Args({4, 3});

void BM_Spr(benchmark::State& state) {
  opdlab::Rng rng(1);
  std::vector<opdlab::PredictionRecord> records(static_cast<std::size_t>(state.range(0)));
  for (auto& r : records) {
    r.confidence = rng.uniform();
    r.correct = rng.uniform() < r.confidence;
  }
  for (auto _ : state) benchmark::DoNotOptimize(opdlab::spr(records));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Spr)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oNLogN);

void BM_TrainStep(benchmark::State& state) {
  const auto world = opdlab::World::build(bench_spec(4, 2));
  opdlab::TrainConfig config;
  config.regime = static_cast<opdlab::Regime>(state.range(0));
  config.steps = 1;
  auto trainer = opdlab::TrainerState::from_policy(opdlab::Policy::from_world(world));
  for (auto _ : state) benchmark::DoNotOptimize(opdlab::train(config, world, trainer));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2);

}  // namespace

BENCHMARK_MAIN();

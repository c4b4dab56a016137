#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace opdlab {

/// Derives an independent 64-bit seed from a root seed and a stream path.
///
/// Streams are addressed by tuples such as (purpose, step, prompt, rollout),
/// so results do not depend on the order in which work is scheduled.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

/// Stream purposes; the values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
  kTruth = 1,
  kPolicyInit = 2,
  kRollout = 3,
  kDistill = 4,
  kReference = 5,
  kPerturbation = 6,
  kTrial = 7,
  kContextChoice = 8,
};

constexpr std::uint64_t stream_id(Stream s) { return static_cast<std::uint64_t>(s); }

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) : engine_(derive_seed(root, path)) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal(double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }

  /// Draws an index from a probability vector (need not be exactly normalized).
  std::size_t categorical(std::span<const double> probs);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace opdlab

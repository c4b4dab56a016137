#pragma once

#include <compare>
#include <optional>

#include "opdlab/common.hpp"

namespace opdlab {

/// Evenly spaced verbalized-confidence levels {0, 1/G, ..., 1}.
class ConfidenceGrid {
 public:
  explicit ConfidenceGrid(int intervals);

  int intervals() const { return intervals_; }
  int size() const { return intervals_ + 1; }
  int top() const { return intervals_; }
  bool contains(int level) const { return level >= 0 && level <= intervals_; }

  /// Exact decode: level / G.
  double value(int level) const;

  /// Nearest level to successes/trials, ties rounded up. Integer arithmetic, so exact.
  int nearest_level(long long successes, long long trials) const;

  /// Inverse of value() for values on the grid; throws otherwise.
  int level_of(double value) const;

  auto operator<=>(const ConfidenceGrid&) const = default;

 private:
  int intervals_;
};

/// One generation y = (a, c): answer tokens followed by a single confidence token.
struct Trajectory {
  AnswerPath answer_path;
  int confidence_token = 0;
  /// Log-probability under the conditioning that generated it; cleared when edited.
  std::optional<double> log_prob;
  double val_c = 0.0;

  bool operator==(const Trajectory&) const = default;
};

}  // namespace opdlab

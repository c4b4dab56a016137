#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opdlab {

/// One (verbalized confidence, correctness) observation.
struct PredictionRecord {
  double confidence = 0.0;
  bool correct = false;
  double weight = 1.0;
  std::optional<std::string> tag;

  bool operator==(const PredictionRecord&) const = default;
};

/// Throws InvalidArgument on an empty set, confidence outside [0, 1] or weight <= 0.
void validate_records(std::span<const PredictionRecord> records);

double accuracy(std::span<const PredictionRecord> records);
double mean_confidence(std::span<const PredictionRecord> records);
/// Mean confidence minus accuracy; positive means overconfident.
double ocg(std::span<const PredictionRecord> records);
double brier(std::span<const PredictionRecord> records);

/// Equal-width bins on [0, 1]: bin 0 is [0, 1/B], bin b > 0 is (b/B, (b+1)/B].
std::size_t bin_index(double confidence, int num_bins);
double ece(std::span<const PredictionRecord> records, int num_bins);

/// Weighted counts over (correct, incorrect) pairs.
struct PairCounts {
  double wins = 0.0;  ///< correct confidence strictly greater
  double ties = 0.0;
  double total = 0.0;
};

/// O(n log n) pair counts; nullopt when either class is empty.
std::optional<PairCounts> pair_counts(std::span<const PredictionRecord> records);
/// Strict pairwise ranking: ties earn nothing. nullopt when undefined.
std::optional<double> spr(std::span<const PredictionRecord> records);
/// Ties earn half credit. nullopt when undefined.
std::optional<double> auroc(std::span<const PredictionRecord> records);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
  std::size_t count = 0;
  double weight = 0.0;
};

std::vector<ReliabilityBin> reliability_bins(std::span<const PredictionRecord> records, int num_bins);

struct CalibrationReport {
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double ocg = 0.0;
  double ece = 0.0;
  double brier = 0.0;
  std::optional<double> spr;
  std::optional<double> auroc;
  std::size_t n = 0;
  int num_bins = 0;
  std::vector<ReliabilityBin> bins;
};

/// Every metric at once; internal identities are checked before returning.
CalibrationReport report(std::span<const PredictionRecord> records, int num_bins);

std::string report_to_json(const CalibrationReport& report);
/// Header line plus one data row.
std::string report_to_csv(const CalibrationReport& report);
std::string bins_to_csv(const CalibrationReport& report);

}  // namespace opdlab

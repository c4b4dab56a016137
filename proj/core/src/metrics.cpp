#include "opdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "opdlab/common.hpp"
#include "opdlab/config.hpp"

namespace opdlab {

void validate_records(std::span<const PredictionRecord> records) {
  if (records.empty()) throw InvalidArgument("metrics: empty record set");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw InvalidArgument("metrics: record " + std::to_string(i) + " has confidence outside [0, 1]");
    }
    if (!(r.weight > 0.0) || !std::isfinite(r.weight)) {
      throw InvalidArgument("metrics: record " + std::to_string(i) + " has non-positive weight");
    }
  }
}

namespace {

struct Sums {
  double weight = 0.0;
  double confidence = 0.0;
  double correct = 0.0;
};

Sums sums(std::span<const PredictionRecord> records) {
  validate_records(records);
  Sums s;
  for (const auto& r : records) {
    s.weight += r.weight;
    s.confidence += r.weight * r.confidence;
    s.correct += r.correct ? r.weight : 0.0;
  }
  return s;
}

}  // namespace

double accuracy(std::span<const PredictionRecord> records) {
  const auto s = sums(records);
  return s.correct / s.weight;
}

double mean_confidence(std::span<const PredictionRecord> records) {
  const auto s = sums(records);
  return s.confidence / s.weight;
}

double ocg(std::span<const PredictionRecord> records) {
  const auto s = sums(records);
  return s.confidence / s.weight - s.correct / s.weight;
}

double brier(std::span<const PredictionRecord> records) {
  validate_records(records);
  double total = 0.0;
  double weight = 0.0;
  for (const auto& r : records) {
    const double d = r.confidence - (r.correct ? 1.0 : 0.0);
    total += r.weight * d * d;
    weight += r.weight;
  }
  return total / weight;
}

std::size_t bin_index(double confidence, int num_bins) {
  if (num_bins < 1) throw InvalidArgument("num_bins must be >= 1");
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgument("bin_index: confidence outside [0, 1]");
  const auto b = static_cast<double>(num_bins);
  long idx = static_cast<long>(std::ceil(confidence * b)) - 1;
  idx = std::clamp(idx, 0L, static_cast<long>(num_bins) - 1);
  // ceil(c * B) can be off by one near edges; settle against the exact boundaries.
  while (idx > 0 && confidence <= static_cast<double>(idx) / b) --idx;
  while (idx < num_bins - 1 && confidence > static_cast<double>(idx + 1) / b) ++idx;
  return static_cast<std::size_t>(idx);
}

std::vector<ReliabilityBin> reliability_bins(std::span<const PredictionRecord> records, int num_bins) {
  validate_records(records);
  if (num_bins < 1) throw InvalidArgument("num_bins must be >= 1");
  std::vector<Sums> per(static_cast<std::size_t>(num_bins));
  std::vector<ReliabilityBin> bins(static_cast<std::size_t>(num_bins));
  for (const auto& r : records) {
    const auto b = bin_index(r.confidence, num_bins);
    per[b].weight += r.weight;
    per[b].confidence += r.weight * r.confidence;
    per[b].correct += r.correct ? r.weight : 0.0;
    ++bins[b].count;
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lower = static_cast<double>(b) / num_bins;
    bins[b].upper = static_cast<double>(b + 1) / num_bins;
    bins[b].weight = per[b].weight;
    if (bins[b].count > 0) {
      bins[b].mean_confidence = per[b].confidence / per[b].weight;
      bins[b].accuracy = per[b].correct / per[b].weight;
    }
  }
  return bins;
}

double ece(std::span<const PredictionRecord> records, int num_bins) {
  const auto bins = reliability_bins(records, num_bins);
  double total_weight = 0.0;
  for (const auto& b : bins) total_weight += b.weight;
  double out = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    out += (b.weight / total_weight) * std::fabs(*b.mean_confidence - *b.accuracy);
  }
  return out;
}

std::optional<PairCounts> pair_counts(std::span<const PredictionRecord> records) {
  validate_records(records);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].confidence < records[b].confidence; });
  PairCounts out;
  double pos_total = 0.0;
  double neg_below = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0;
    double neg = 0.0;
    while (j < order.size() && records[order[j]].confidence == records[order[i]].confidence) {
      const auto& r = records[order[j]];
      (r.correct ? pos : neg) += r.weight;
      ++j;
    }
    out.wins += pos * neg_below;
    out.ties += pos * neg;
    neg_below += neg;
    pos_total += pos;
    i = j;
  }
  if (pos_total == 0.0 || neg_below == 0.0) return std::nullopt;
  out.total = pos_total * neg_below;
  return out;
}

std::optional<double> spr(std::span<const PredictionRecord> records) {
  const auto c = pair_counts(records);
  if (!c) return std::nullopt;
  return c->wins / c->total;
}

std::optional<double> auroc(std::span<const PredictionRecord> records) {
  const auto c = pair_counts(records);
  if (!c) return std::nullopt;
  return (c->wins + 0.5 * c->ties) / c->total;
}

CalibrationReport report(std::span<const PredictionRecord> records, int num_bins) {
  CalibrationReport out;
  out.accuracy = accuracy(records);
  out.mean_confidence = mean_confidence(records);
  out.ocg = ocg(records);
  out.ece = ece(records, num_bins);
  out.brier = brier(records);
  if (const auto c = pair_counts(records)) {
    out.spr = c->wins / c->total;
    out.auroc = (c->wins + 0.5 * c->ties) / c->total;
    const double tie_gap = *out.auroc - *out.spr - 0.5 * (c->ties / c->total);
    if (std::fabs(tie_gap) > 1e-12) throw Error("report: auroc - spr does not match the tie mass");
  }
  out.n = records.size();
  out.num_bins = num_bins;
  out.bins = reliability_bins(records, num_bins);
  if (std::fabs(out.ocg - (out.mean_confidence - out.accuracy)) > 1e-12) {
    throw Error("report: ocg is inconsistent with mean confidence and accuracy");
  }
  return out;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

}  // namespace

std::string report_to_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["accuracy"] = r.accuracy;
  j["mean_confidence"] = r.mean_confidence;
  j["ocg"] = r.ocg;
  j["ece"] = r.ece;
  j["brier"] = r.brier;
  j["spr"] = optional_json(r.spr);
  j["auroc"] = optional_json(r.auroc);
  j["num_bins"] = r.num_bins;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json row;
    row["lower"] = b.lower;
    row["upper"] = b.upper;
    row["mean_confidence"] = optional_json(b.mean_confidence);
    row["accuracy"] = optional_json(b.accuracy);
    row["count"] = b.count;
    bins.push_back(std::move(row));
  }
  j["bins"] = std::move(bins);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const CalibrationReport& r) {
  std::ostringstream out;
  out << "n,accuracy,mean_confidence,ocg,ece,brier,spr,auroc,num_bins\n";
  out << r.n << ',' << format_double(r.accuracy) << ',' << format_double(r.mean_confidence) << ','
      << format_double(r.ocg) << ',' << format_double(r.ece) << ',' << format_double(r.brier) << ','
      << optional_csv(r.spr) << ',' << optional_csv(r.auroc) << ',' << r.num_bins << '\n';
  return out.str();
}

std::string bins_to_csv(const CalibrationReport& r) {
  std::ostringstream out;
  out << "lower,upper,mean_confidence,accuracy,count\n";
  for (const auto& b : r.bins) {
    out << format_double(b.lower) << ',' << format_double(b.upper) << ',' << optional_csv(b.mean_confidence) << ','
        << optional_csv(b.accuracy) << ',' << b.count << '\n';
  }
  return out.str();
}

}  // namespace opdlab

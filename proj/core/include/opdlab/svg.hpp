#pragma once

#include <string>
#include <vector>

#include "opdlab/metrics.hpp"

namespace opdlab {

/// Reliability diagram: per-bin accuracy bars against the ideal diagonal.
std::string reliability_svg(const CalibrationReport& report, const std::string& title);

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Line chart of one or more series against step index.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label);

}  // namespace opdlab

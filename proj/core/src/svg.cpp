#include "opdlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace opdlab {

namespace {

constexpr double kWidth = 480;
constexpr double kHeight = 400;
constexpr double kLeft = 60;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
}

void axes(std::ostringstream& out, double y_min, double y_max, double x_max, const std::string& x_label,
          const std::string& y_label) {
  const double x0 = kLeft;
  const double y0 = kTop + kPlotH;
  out << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0 + kPlotW) << "\" y2=\""
      << num(y0) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(x0) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y0)
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double y = y0 - f * kPlotH;
    const double x = x0 + f * kPlotW;
    out << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
        << num(y_min + f * (y_max - y_min)) << "</text>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">" << num(f * x_max)
        << "</text>\n";
  }
  out << "<text x=\"" << num(x0 + kPlotW / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << num(kTop + kPlotH / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";
}

}  // namespace

std::string reliability_svg(const CalibrationReport& report, const std::string& title) {
  std::ostringstream out;
  open_svg(out, title);
  axes(out, 0.0, 1.0, 1.0, "confidence", "accuracy");
  const double y0 = kTop + kPlotH;
  for (const auto& b : report.bins) {
    if (!b.accuracy) continue;
    const double x = kLeft + b.lower * kPlotW;
    const double w = (b.upper - b.lower) * kPlotW;
    const double h = *b.accuracy * kPlotH;
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(y0 - h) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"#1f77b4\" fill-opacity=\"0.7\" stroke=\"white\"/>\n";
    const double gap_top = y0 - std::max(*b.accuracy, *b.mean_confidence) * kPlotH;
    const double gap_h = std::fabs(*b.accuracy - *b.mean_confidence) * kPlotH;
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(gap_top) << "\" width=\"" << num(w) << "\" height=\""
        << num(gap_h) << "\" fill=\"#d62728\" fill-opacity=\"0.25\"/>\n";
  }
  out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(kLeft + kPlotW) << "\" y2=\""
      << num(kTop) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  out << "<text x=\"" << num(kLeft + 8) << "\" y=\"" << num(kTop + 12) << "\">ECE " << num(report.ece) << "  OCG "
      << num(report.ocg) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label) {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t longest = 1;
  bool first = true;
  for (const auto& s : series) {
    longest = std::max(longest, s.values.size());
    for (const double v : s.values) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  std::ostringstream out;
  open_svg(out, title);
  axes(out, lo, hi, static_cast<double>(longest > 1 ? longest - 1 : 1), "step", y_label);
  const double denom = static_cast<double>(longest > 1 ? longest - 1 : 1);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      const double v = series[k].values[i];
      if (!std::isfinite(v)) continue;
      out << num(kLeft + (static_cast<double>(i) / denom) * kPlotW) << ','
          << num(kTop + kPlotH - (v - lo) / (hi - lo) * kPlotH) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << num(kLeft + kPlotW - 4) << "\" y=\"" << num(kTop + 14 + 14 * static_cast<double>(k))
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(series[k].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace opdlab

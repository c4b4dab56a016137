#include "cli/thresholds.hpp"

#include "opdlab/common.hpp"

namespace opdlab::cli {

Thresholds Thresholds::from_config(const KeyValueConfig& c) {
  c.reject_unknown({"ocg_band", "accuracy_band", "opd_min_ocg", "opd_min_confidence", "proposition_tolerance"});
  Thresholds t;
  t.ocg_band = c.get_double("ocg_band", t.ocg_band);
  t.accuracy_band = c.get_double("accuracy_band", t.accuracy_band);
  t.opd_min_ocg = c.get_double("opd_min_ocg", t.opd_min_ocg);
  t.opd_min_confidence = c.get_double("opd_min_confidence", t.opd_min_confidence);
  t.proposition_tolerance = c.get_double("proposition_tolerance", t.proposition_tolerance);
  if (!(t.ocg_band >= 0.0) || !(t.accuracy_band >= 0.0) || !(t.proposition_tolerance >= 0.0)) {
    throw InvalidArgument("thresholds must be non-negative");
  }
  return t;
}

Thresholds Thresholds::load(const std::filesystem::path& path) { return from_config(KeyValueConfig::load(path)); }

KeyValueConfig Thresholds::to_config() const {
  KeyValueConfig c;
  c.set("ocg_band", format_double(ocg_band));
  c.set("accuracy_band", format_double(accuracy_band));
  c.set("opd_min_ocg", format_double(opd_min_ocg));
  c.set("opd_min_confidence", format_double(opd_min_confidence));
  c.set("proposition_tolerance", format_double(proposition_tolerance));
  return c;
}

}  // namespace opdlab::cli

#include "cli/manifest.hpp"

#include <set>

#include "opdlab/common.hpp"
#include "opdlab/config.hpp"
#include "opdlab/io.hpp"

namespace opdlab::cli {

void Manifest::apply_seed(std::uint64_t value) {
  seed = value;
  for (auto& run : runs) run.config.seed = value;
}

Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.source = path;
  m.text = read_text_file(path);
  const auto config = KeyValueConfig::parse(m.text, path.string());
  config.reject_unknown(
      {"world", "domain_b", "train", "seed", "k_list", "thresholds", "output", "emit_svg", "bins", "check"});
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const auto resolve = [&](const std::string& p) { return base / p; };

  m.world = WorldSpec::from_config(KeyValueConfig::load(resolve(config.require("world"))));
  if (config.contains("domain_b")) {
    m.domain_b = WorldSpec::from_config(KeyValueConfig::load(resolve(config.require("domain_b"))));
  }
  std::set<std::string> names;
  for (const auto& p : config.get_strings("train")) {
    const auto file = resolve(p);
    NamedTrainConfig run{file.stem().string(), TrainConfig::from_config(KeyValueConfig::load(file))};
    if (!names.insert(run.name).second) throw InvalidArgument(path.string() + ": duplicate run name " + run.name);
    m.runs.push_back(std::move(run));
  }
  if (m.runs.empty()) throw InvalidArgument(path.string() + ": at least one train config is required");
  if (config.contains("seed")) {
    const long long s = config.get_int("seed", 0);
    if (s < 0) throw InvalidArgument(path.string() + ": seed must be >= 0");
    m.apply_seed(static_cast<std::uint64_t>(s));
  }
  for (const long long k : config.get_ints("k_list")) {
    if (k < 1) throw InvalidArgument(path.string() + ": k_list entries must be >= 1");
    m.k_list.push_back(static_cast<int>(k));
  }
  if (config.contains("thresholds")) m.thresholds = resolve(config.require("thresholds"));
  if (config.contains("output")) m.output = resolve(config.require("output"));
  m.emit_svg = config.get_bool("emit_svg", false);
  m.bins = static_cast<int>(config.get_int("bins", 10));
  if (m.bins < 1) throw InvalidArgument(path.string() + ": bins must be >= 1");
  m.check = config.get_bool("check", true);
  return m;
}

}  // namespace opdlab::cli

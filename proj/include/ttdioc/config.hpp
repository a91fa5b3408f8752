#pragma once
// Run configuration files (JSON) and logging setup for the command-line tool.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ttdioc/costmodel.hpp"
#include "ttdioc/experiments.hpp"
#include "ttdioc/slidingwindow.hpp"

namespace ttdioc::util {

/// Malformed configuration. `key_path` names the offending entry, e.g.
/// "ttd.omega.step"; empty for document-level problems.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : std::runtime_error(key_path.empty() ? what : key_path + ": " + what), key_path(std::move(key_path)) {}
  std::string key_path;
};

struct SweepTargets {
  std::vector<double> ts{0.05, 0.1, 0.2};
  std::vector<int> horizon{40, 60, 80};
  std::vector<int> basis{1, 2, 3, 4};
  std::vector<int> orders{0, 1, 2, 3, 4};
};

/// A single forward instance for `solve-forward`.
struct ForwardCase {
  Eigen::VectorXd x0;
  Eigen::VectorXd xn;  // empty means the origin
  double t_start = 0.0;
};

struct RunConfig {
  std::string profile = "thetam1";
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  experiments::BenchmarkSetup setup;
  slidingwindow::SlidingWindowConfig kf;
  SweepTargets sweep;
  ForwardCase forward;
  std::string solution;  // IocSolution file for `validate`

  cost::TruthProfile truth() const { return cost::TruthProfile::parse(profile); }
};

/// Defaults for a benchmark tag ("sys1", "sys2", "spring1").
RunConfig default_run_config(std::string_view system);

/// Parses a JSON document. Every key is optional except "system"; unknown
/// keys and ill-typed values raise ConfigError with their key path.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, including defaults. Parsing the output
/// reproduces the same configuration.
std::string run_config_to_json(const RunConfig& config);

/// Sets the global spdlog level from TTDIOC_LOG (error, warn, info, debug;
/// default warn). Unknown values fall back to the default with a warning.
void init_logging();

}  // namespace ttdioc::util

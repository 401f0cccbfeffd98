#pragma once
// Batch front end: problem configs, run pipelines, artifact files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gstop/snell.hpp"

namespace gstop::cli {

const char* engine_version();

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,        // regression failures, missing artifacts, internal errors
  kInvalidConfig = 2,
  kNotConverged = 3,
  kInternalFault = 4,  // e.g. a non-monotone ladder
};

/// Field-level configuration error; `field` is a dotted path like "grid.dx".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  std::string field;
};

enum class Kind { snell_finite, snell_infinite, dyadic, obstacle, oracle, regression };
std::string to_string(Kind k);
Kind kind_from_string(const std::string& s);

struct BandConfig {
  double sigma2_min = 0.0;
  double sigma2_max = 0.0;
  bool operator==(const BandConfig&) const = default;
};

struct GridConfig {
  double x0 = 0.0;
  double dx = 0.0;
  int half_width = 0;
  Boundary boundary = Boundary::reflecting;
  bool operator==(const GridConfig&) const = default;
};

/// "g_brownian" is the pure trinomial lattice with step dt. The others are
/// G-SDE coefficient built-ins run with `period` and `substeps` (0 = smallest
/// stable power of two).
struct DynamicsConfig {
  std::string type;
  double dt = 0.0;
  double period = 0.0;
  int substeps = 0;
  std::vector<double> params;           // affine: b0 b1 h0 h1 s0 s1; geometric: mu sigma
  std::vector<double> table_x, table_b, table_h, table_sigma;
  bool operator==(const DynamicsConfig&) const = default;
};

/// put/call: strike and rate (reward exp(-rate t) (K - x)^+ etc.);
/// constant: value; sequence: values; quadratic: value = x^2.
struct PayoffConfig {
  std::string type;
  double strike = 0.0;
  double rate = 0.0;
  double value = 0.0;
  std::vector<double> values;
  bool operator==(const PayoffConfig&) const = default;
};

struct IterationSettings {
  double tol = 1e-10;
  int max_iter = 1000;
  double discount = 1.0;
  int envelope_levels = 0;  // 0 skips the envelope comparison
  bool operator==(const IterationSettings&) const = default;
};

struct ProblemConfig {
  Kind kind = Kind::snell_finite;
  std::string sense = "sup";  // snell_finite only: sup or inf
  BandConfig band;
  GridConfig grid;
  DynamicsConfig dynamics;
  PayoffConfig payoff;
  int steps = 0;              // snell_finite, oracle
  int level_min = 0;          // dyadic
  int level_max = 0;
  int time_steps = 0;         // obstacle
  int obstacle_substeps = 0;  // obstacle, 0 = auto
  IterationSettings iteration;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool operator==(const ProblemConfig&) const = default;
};

/// Parses and validates. Regression configs need only kind and output_dir.
ProblemConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProblemConfig& c);
ProblemConfig load_config(const std::filesystem::path& path);

Kernel build_kernel(const ProblemConfig& c);
TransitionSpec build_transition(const ProblemConfig& c);
PayoffSpec build_payoff(const ProblemConfig& c);

/// output_dir resolved against $GSTOP_OUTPUT_ROOT when relative and set.
std::filesystem::path resolve_output_dir(const ProblemConfig& c);

struct RegressionCase {
  std::string name;
  bool passed = false;
  double observed = 0.0;
  double expected = 0.0;
};
std::vector<RegressionCase> regression_suite();

struct RunOutcome {
  int exit_code = kOk;
  std::filesystem::path dir;
  nlohmann::json report;
  std::string message;
};

/// Runs the configured pipeline and writes config.json, value.csv, region.csv,
/// report.json and manifest.json into the output directory.
RunOutcome run(const ProblemConfig& c, const std::string& config_text);
/// Full front door: load, validate, run; maps errors to exit codes.
RunOutcome run_file(const std::filesystem::path& path);

/// Reads region.csv and config.json from a run directory and writes
/// boundary.csv (time,state).
std::filesystem::path emit_boundary(const std::filesystem::path& run_dir);

// Helpers shared with tests.
std::string format_double(double v);
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string sha256_hex(const std::string& data);

}  // namespace gstop::cli

#pragma once

// Batch runner behind the `ldp` executable: config parsing, dispatch and
// artifact writing. See docs/config.md for the file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ldp/estimators.hpp"
#include "ldp/weights.hpp"

namespace ldp::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kPreconditionError = 3,
  kCapExceeded = 4,
  kIoError = 5,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command {
  EstimateConstant,
  LdCurve,
  FitRate,
  CheckSummability,
  DetectEvent,
  VerifyShellBound,
  OracleCrosscheck,
  EmitPlotData,
};

std::string to_string(Command c);
Command command_from_string(const std::string& s);

struct RunConfig {
  Command command = Command::EstimateConstant;
  std::optional<std::uint64_t> seed;
  std::int64_t replicas = 1000;
  Method method = Method::NaiveMC;
  std::string out;
  std::string results;  // emit-plot-data input directory

  // [model]
  Model model = Model::M1;
  int d = 1;
  WeightModel law = WeightModel::gaussian(0.0, 1.0);
  Functional functional = Functional::Point;
  std::optional<int> lateral;

  // [estimate]
  std::vector<int> n;
  double epsilon = 0.1;
  double delta = 0.25;
  Side side = Side::Lower;
  std::optional<double> center;
  std::optional<double> center_stderr;
  std::vector<int> center_grid;
  int center_replicas = 200;
  std::string tilt = "shells";  // shells | path
  std::vector<double> tilt_grid;
  std::int64_t pilot = 1000;
  std::vector<std::pair<int, double>> points;  // fit-rate (n, log p)
  std::string input;                           // fit-rate data.csv

  // [summability]
  FSpec f = FSpec::constant(1.0);
  int n_max = 60;
  SummabilityForm form = SummabilityForm::LowerTailM1;

  // [shell]
  int N = 6;
  double M = 4.0;

  // [event]
  std::string event;
  std::string params;
  int window_level = 0;  // Model 1 cone level
  int window_half = 0;   // Model 2 box [-h, h]^d

  // [oracle]
  int max_length = 0;  // 0: any self-avoiding path in the window

  ModelSpec model_spec() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses the line-oriented key=value format. Throws ConfigError. `keys`,
/// when given, receives the "section.key" names that were set.
RunConfig parse_config(const std::string& text,
                       std::vector<std::string>* keys = nullptr);
/// Canonical text that parses back to an equal config.
std::string serialize_config(const RunConfig& c);
/// Command-specific required keys and value ranges. Throws ConfigError.
void validate(const RunConfig& c);

struct RunOutcome {
  int exit_code = kOk;
  std::string message;
  std::vector<std::filesystem::path> artifacts;
};

/// Executes the config and writes data.csv, result.json and manifest.json
/// (tidy.csv for emit-plot-data) into `out_dir`. Never throws.
RunOutcome run(const RunConfig& config, const std::filesystem::path& out_dir);

/// Joins the tidy rows of every run below `results` into one table.
/// Returns the CSV text. Throws IoError on a missing or corrupt manifest.
std::string emit_plot_data(const std::filesystem::path& results);

/// Fixed tidy-table columns.
const std::vector<std::string>& tidy_columns();

}  // namespace ldp::cli

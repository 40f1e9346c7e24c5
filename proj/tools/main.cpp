#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"

namespace cli = ldp::cli;

int main(int argc, char** argv) {
  CLI::App app{"ldp: lattice passage large-deviation experiments"};
  std::string command;
  std::string config_path;
  std::string out;
  std::string results;
  std::uint64_t seed = 0;
  app.add_option("command", command,
                 "estimate-constant | ld-curve | fit-rate | check-summability | "
                 "detect-event | verify-shell-bound | oracle-crosscheck | "
                 "emit-plot-data")
      ->required();
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--out", out, "output directory (overrides [run] out)");
  auto* seed_opt = app.add_option("--seed", seed, "seed (overrides [run] seed)");
  app.add_option("--results", results,
                 "results directory for emit-plot-data (overrides [run] results)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }

  cli::RunConfig config;
  try {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) {
        std::cerr << "i/o error: cannot read " << config_path << "\n";
        return cli::kIoError;
      }
      std::ostringstream text;
      text << f.rdbuf();
      std::vector<std::string> keys;
      config = cli::parse_config(text.str(), &keys);
      const auto cmd = cli::command_from_string(command);
      const bool has_command =
          std::find(keys.begin(), keys.end(), "run.command") != keys.end();
      if (has_command && config.command != cmd) {
        throw cli::ConfigError("command '" + command +
                               "' does not match [run] command '" +
                               cli::to_string(config.command) + "'");
      }
      config.command = cmd;
    } else {
      config.command = cli::command_from_string(command);
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfigError;
  }
  if (*seed_opt) config.seed = seed;
  if (!out.empty()) config.out = out;
  if (!results.empty()) config.results = results;
  if (config.out.empty()) {
    std::cerr << "config error: no output directory ([run] out or --out)\n";
    return cli::kConfigError;
  }

  const cli::RunOutcome r = cli::run(config, config.out);
  (r.exit_code == 0 ? std::cout : std::cerr) << r.message << "\n";
  return r.exit_code;
}

#include <CLI11.hpp>

#include <iostream>

#include "gstop/cli.hpp"

namespace cli = gstop::cli;

namespace {

int report(const cli::RunOutcome& out) {
  if (!out.message.empty()) std::cerr << "gstop: " << out.message << '\n';
  if (!out.dir.empty()) {
    std::cout << out.dir.string() << '\n';
    if (out.report.contains("root_value")) std::cout << "root_value " << cli::format_double(out.report["root_value"].get<double>()) << '\n';
    std::cout << "status " << out.report.value("status", "?") << '\n';
  }
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust optimal stopping under volatility ambiguity"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the pipeline described by a JSON config");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  std::string regress_out = "regression";
  auto* regress = app.add_subcommand("regress", "Run the built-in regression suite");
  regress->add_option("--out", regress_out, "Output directory (relative to GSTOP_OUTPUT_ROOT if set)");

  std::string run_dir;
  auto* boundary = app.add_subcommand("emit-boundary", "Write boundary.csv from a run directory");
  boundary->add_option("run-dir", run_dir, "Directory produced by 'run'")->required();

  auto* version = app.add_subcommand("version", "Print the engine version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cli::kInvalidConfig;
  }

  try {
    if (*run) return report(cli::run_file(config_path));
    if (*regress) {
      cli::ProblemConfig c;
      c.kind = cli::Kind::regression;
      c.output_dir = regress_out;
      const auto out = cli::run(c, "");
      for (const auto& rc : out.report["details"]["cases"])
        std::cout << (rc["passed"].get<bool>() ? "PASS " : "FAIL ") << rc["name"].get<std::string>() << '\n';
      return report(out);
    }
    if (*boundary) {
      std::cout << cli::emit_boundary(run_dir).string() << '\n';
      return cli::kOk;
    }
    if (*version) {
      std::cout << cli::engine_version() << '\n';
      return cli::kOk;
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << "gstop: invalid config: " << e.what() << '\n';
    return cli::kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "gstop: " << e.what() << '\n';
    return cli::kFailure;
  }
  return cli::kFailure;
}

// Command line front end: scenario validation and batch execution.
//
// Exit codes: 0 success, 1 embedded check failed, 2 configuration error,
// 3 numerical blow-up, 4 I/O error, 5 domain escape.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hybens/scenario.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw hybens::IoError("cannot open scenario file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_command(const std::string& file, const std::string& scenario_name,
                const std::string& out_dir, bool dry_run) {
  std::string text;
  if (!scenario_name.empty()) {
    text = hybens::builtin_scenario_text(scenario_name);
  } else {
    text = read_file(file);
  }
  const hybens::ScenarioConfig config = hybens::parse_scenario(text);

  hybens::RunOptions options;
  options.dry_run = dry_run;
  if (!out_dir.empty()) options.output_directory = out_dir;

  if (dry_run) {
    const hybens::RunResult result = hybens::run_scenario(config, options);
    if (result.exit_code == 0) {
      std::cout << hybens::serialize_scenario(config);
    } else {
      std::cerr << result.error << "\n";
    }
    return result.exit_code;
  }

  const hybens::RunResult result = hybens::run_scenario(config, options);
  for (const auto& [key, value] : result.metrics) {
    std::cout << key << " = " << value << "\n";
  }
  for (const std::string& line : result.check_lines) std::cout << line << "\n";
  if (!result.error.empty()) std::cerr << result.error << "\n";
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "hybrid-ensembles: configuration-space ensemble simulator for classical, "
      "quantum, and mixed quantum-classical systems"};
  app.require_subcommand(1);

  std::string file, scenario_name, out_dir;
  bool dry_run = false;

  CLI::App* run = app.add_subcommand(
      "run",
      "Run a scenario file or built-in scenario. Exit codes: 0 success, "
      "1 embedded check failed, 2 config error, 3 numerical blow-up, "
      "4 I/O error, 5 domain escape.");
  auto* file_opt = run->add_option("file", file, "scenario file");
  run->add_option("--scenario", scenario_name, "built-in scenario name")
      ->excludes(file_opt);
  run->add_option("--out", out_dir, "output directory (overrides [outputs])");
  run->add_flag("--dry-run", dry_run, "validate, print the resolved config, write nothing");

  std::string validate_file;
  CLI::App* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  validate->add_option("file", validate_file, "scenario file")->required();

  CLI::App* list = app.add_subcommand("list-scenarios", "List built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      std::cout << hybens::list_scenarios();
      return 0;
    }
    if (validate->parsed()) {
      hybens::parse_scenario(read_file(validate_file));
      std::cout << "ok\n";
      return 0;
    }
    if (run->parsed()) {
      if (file.empty() && scenario_name.empty()) {
        std::cerr << "error reason=config detail=run needs a file or --scenario\n";
        return 2;
      }
      return run_command(file, scenario_name, out_dir, dry_run);
    }
  } catch (const hybens::IoError& e) {
    std::cerr << "error reason=io detail=" << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error reason=config detail=" << e.what() << "\n";
    return 2;
  }
  return 0;
}

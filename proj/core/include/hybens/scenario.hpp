#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybens/gravity.hpp"
#include "hybens/measurement.hpp"
#include "hybens/observables.hpp"

namespace hybens {

// What a scenario does after building grid, Hamiltonian and initial data.
enum class ProtocolKind {
  evolve,                // plain time evolution plus requested outputs
  position_measurement,  // pointer-model protocol and report
  scattering,            // gravitational scattering report (plus G=0 control)
  galilean_boost,        // boosted versus translated comparison
  separability,          // quantum phase transform versus control
  backreaction,          // coupled versus uncoupled classical marginal
  peres_terno,           // oscillator means versus the classical ODE oracle
};

// One embedded assertion: metric must stay below max (or above min).
struct ScenarioCheck {
  std::string metric;
  bool is_max = true;
  double bound = 0.0;
  int line = 0;
};

// Fully validated scenario description.
struct ScenarioConfig {
  std::string name;
  std::string description;

  std::vector<Axis> axes;
  std::vector<Sector> sectors;

  HamiltonianSpec::Kind hamiltonian_type = HamiltonianSpec::Kind::classical;
  double mass = 1.0;
  double mass_quantum = 1.0;
  double mass_classical = 1.0;
  double hbar = 1.0;
  double gravity_G = 0.0;
  double gravity_softening = 0.0;
  double coupling_kick = 0.0;
  double window_start = 0.0;
  double window_length = 0.0;
  PotentialSpec potential;

  GaussianSpec initial_state;  // full-grid peaks (unused by some protocols)
  GaussianSpec target;         // scattering: quantum peaks
  GaussianSpec projectile;     // scattering: classical peak

  IntegratorConfig integrator;
  long record_every = 0;

  ProtocolKind protocol = ProtocolKind::evolve;
  double boost_velocity = 0.0;     // galilean_boost
  double phase_linear = 0.0;       // separability
  double phase_quadratic = 0.0;

  // position_measurement protocol
  double meas_kick = 0.0;
  double pointer_sigma = 0.0;
  double pointer_center = 0.0;
  long pre_steps = 0;
  long post_steps = 0;

  std::string output_directory = "out";
  long snapshot_stride = 0;
  std::vector<std::string> observables;

  std::vector<ScenarioCheck> checks;

  GridPtr make_grid() const { return Grid::make(axes); }
  HamiltonianSpec make_hamiltonian() const;
  int axis_index(const std::string& name) const;
};

// Parses and validates the flat INI-style scenario format. Throws
// ConfigError with a "<line>: <message> (<code>)" diagnostic on the first
// offending line.
ScenarioConfig parse_scenario(const std::string& text);

// Canonical re-emission; parse(serialize(parse(t))) == parse(t).
std::string serialize_scenario(const ScenarioConfig& config);

struct RunOptions {
  std::optional<std::string> output_directory;  // overrides [outputs]
  bool dry_run = false;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 1 check failed, 2 config, 3 blow-up, 4 io, 5 escape
  std::map<std::string, double> metrics;
  std::vector<std::string> check_lines;  // one PASS/FAIL line per check
  std::string error;                     // machine-readable on failure
};

// Executes the scenario pipeline and writes declared outputs. Exceptions
// are mapped to exit codes inside the result; nothing is thrown for
// scenario-level failures.
RunResult run_scenario(const ScenarioConfig& config, const RunOptions& options);

// Built-in scenarios.
std::vector<std::string> builtin_scenario_names();
const std::string& builtin_scenario_text(const std::string& name);
std::string list_scenarios();

}  // namespace hybens

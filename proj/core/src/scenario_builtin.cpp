#include <array>
#include <map>
#include <sstream>

#include "hybens/scenario.hpp"

namespace hybens {

namespace {

struct Builtin {
  const char* name;
  const char* description;
  const char* text;
};

const char kFreeQuantumGaussian[] = R"(
[scenario]
name = "free_quantum_gaussian"
description = "Free quantum Gaussian: spreading law plus norm/energy conservation"

[grid]
axis0 = { name = "x", min = -12, max = 12, count = 256, boundary = "periodic", sector = "quantum" }

[hamiltonian]
type = "quantum"
mass = 1
hbar = 1

[initial_state]
peak0 = { mean = [0], sigma = [0.75] }

[integrator]
scheme = "rk4"
dt = auto
steps = 1000

[outputs]
directory = "out/free_quantum_gaussian"
record_every = 100
observables = ["norm", "energy", "mean_x", "var_x"]

[check]
norm_drift = { max = 1e-9 }
energy_drift_rel = { max = 1e-6 }
variance_law_rel_err = { max = 0.005 }
)";

const char kClassicalFree[] = R"(
[scenario]
name = "classical_free"
description = "Free classical ensemble transported at p/m"

[grid]
axis0 = { name = "x", min = -12, max = 12, count = 256, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "classical"
mass = 1

[initial_state]
peak0 = { mean = [-4], sigma = [0.6], momentum = [1] }

[integrator]
scheme = "rk4"
dt = auto
steps = 500

[outputs]
directory = "out/classical_free"
record_every = 50
observables = ["norm", "mean_x", "mom_x"]

[check]
transport_error_frac = { max = 1e-4 }
norm_drift = { max = 1e-9 }
)";

const char kPeresTerno[] = R"(
[scenario]
name = "coupled_oscillators_peres_terno"
description = "Linearly coupled hybrid oscillators: means track the classical ODE system"

[grid]
axis0 = { name = "q", min = -6, max = 6, count = 128, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -6, max = 6, count = 128, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "hybrid"
mass_quantum = 1
mass_classical = 1
hbar = 1
potential = { type = "linear_coupling", lambda = 0.2, quantum_axis = "q", classical_axis = "x", k_quantum = 1, k_classical = 1 }

[initial_state]
peak0 = { mean = [0.5, 0], sigma = [1, 1] }

[integrator]
scheme = "rk4"
dt = auto
steps = 2200

[protocol]
type = "peres_terno"

[outputs]
directory = "out/coupled_oscillators_peres_terno"
record_every = 20

[check]
peres_rel_err = { max = 1e-3 }
)";

const char kPositionMeasurement[] = R"(
[scenario]
name = "position_measurement"
description = "Impulsive position measurement of a quantum Gaussian by a classical pointer"

[grid]
axis0 = { name = "q", min = -4, max = 4, count = 128, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -2.2767857142857144, max = 2.2767857142857144, count = 256, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "hybrid_measurement"
mass_quantum = 1
mass_classical = 5
hbar = 1
kick = 4

[initial_state]
peak0 = { mean = [0], sigma = [0.125] }

[integrator]
scheme = "rk4"
dt = auto
steps = 0

[protocol]
type = "position_measurement"

[measurement]
kick = 4
pointer_sigma = 0
pointer_center = 0

[outputs]
directory = "out/position_measurement"

[check]
coherence_after = { max = 0.01 }
pointer_l1_err = { max = 1e-3 }
rho_diag_l1_err = { max = 1e-3 }
sigma_transfer_rel_err = { max = 0.01 }
norm_change = { max = 1e-6 }
)";

const char kGravitySingle[] = R"(
[scenario]
name = "gravity_scattering_single"
description = "Classical projectile deflected by a single-peak quantum target"

[grid]
axis0 = { name = "q", min = -8, max = 8, count = 128, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -8, max = 8, count = 128, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "gravity_hybrid"
mass_quantum = 1
mass_classical = 20
hbar = 0.2
G = 0.02
softening = 0.5

[target]
peak0 = { mean = [-0.5], sigma = [0.35] }

[projectile]
peak0 = { mean = [5], sigma = [0.35], momentum = [-40] }

[integrator]
scheme = "rk4"
dt = auto
steps = 1500

[protocol]
type = "scattering"

[outputs]
directory = "out/gravity_scattering_single"
record_every = 30

[check]
initial_cov_ratio = { max = 1e-3 }
coupled_max_cov_ratio = { min = 0.01 }
norm_drift = { max = 1e-6 }
)";

const char kGravityTwoPeak[] = R"(
[scenario]
name = "gravity_scattering_two_peak"
description = "Two-peak quantum target: conditional projectile distributions distinguish the branches"

[grid]
axis0 = { name = "q", min = -8, max = 8, count = 128, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -8, max = 8, count = 128, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "gravity_hybrid"
mass_quantum = 1
mass_classical = 20
hbar = 0.2
G = 0.02
softening = 0.5

[target]
peak0 = { weight = 0.5, mean = [-2], sigma = [0.3] }
peak1 = { weight = 0.5, mean = [0.5], sigma = [0.3] }

[projectile]
peak0 = { mean = [5], sigma = [0.35], momentum = [-40] }

[integrator]
scheme = "rk4"
dt = auto
steps = 1500

[protocol]
type = "scattering"

[outputs]
directory = "out/gravity_scattering_two_peak"
record_every = 30

[check]
conditional_contrast = { min = 0.1 }
control_max_cov_ratio = { max = 1e-6 }
initial_cov_ratio = { max = 1e-3 }
)";

const char kGalileanBoost[] = R"(
[scenario]
name = "galilean_boost_check"
description = "Boosted initial data evolves into the translated unboosted solution"

[grid]
axis0 = { name = "q", min = -8, max = 8, count = 128, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -8, max = 8, count = 128, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "gravity_hybrid"
mass_quantum = 1
mass_classical = 2
hbar = 0.5
G = 0.5
softening = 0.5

[initial_state]
peak0 = { mean = [-1, 1.5], sigma = [0.45, 0.45] }

[integrator]
scheme = "rk4"
dt = auto
steps = 400

[protocol]
type = "galilean_boost"
velocity = 0.5

[outputs]
directory = "out/galilean_boost_check"

[check]
boost_l1_err = { max = 1e-3 }
)";

const char kSeparability[] = R"(
[scenario]
name = "separability_check"
description = "Quantum-sector phase transform leaves the classical marginal invariant"

[grid]
axis0 = { name = "q", min = -7, max = 7, count = 96, boundary = "clamped", sector = "quantum" }
axis1 = { name = "x", min = -7, max = 7, count = 96, boundary = "clamped", sector = "classical" }

[hamiltonian]
type = "hybrid"
mass_quantum = 1
mass_classical = 1.5
hbar = 1
potential = { type = "harmonic", axis = "q", k = 1 }
potential1 = { type = "harmonic", axis = "x", k = 0.5 }

[initial_state]
peak0 = { mean = [0.8, -0.5], sigma = [0.8, 0.8] }

[integrator]
scheme = "rk4"
dt = auto
steps = 600

[protocol]
type = "separability"
phase_linear = 0.7
phase_quadratic = 0.3

[outputs]
directory = "out/separability_check"

[check]
separability_l1 = { max = 1e-8 }
)";

const std::array<Builtin, 8> kBuiltins{{
    {"free_quantum_gaussian",
     "free quantum Gaussian: spreading law, norm and energy conservation",
     kFreeQuantumGaussian},
    {"classical_free", "free classical ensemble transported at p/m", kClassicalFree},
    {"coupled_oscillators_peres_terno",
     "linearly coupled hybrid oscillators versus the classical ODE oracle", kPeresTerno},
    {"position_measurement",
     "impulsive position measurement with pointer and decoherence diagnostics",
     kPositionMeasurement},
    {"gravity_scattering_single",
     "classical projectile deflected by a single-peak quantum target", kGravitySingle},
    {"gravity_scattering_two_peak",
     "two-peak quantum target producing branch-dependent scattering", kGravityTwoPeak},
    {"galilean_boost_check",
     "boosted initial data matches the translated unboosted run", kGalileanBoost},
    {"separability_check",
     "quantum phase transform leaves the classical marginal unchanged", kSeparability},
}};

}  // namespace

std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> names;
  for (const Builtin& b : kBuiltins) names.emplace_back(b.name);
  return names;
}

const std::string& builtin_scenario_text(const std::string& name) {
  for (const Builtin& b : kBuiltins) {
    if (name == b.name) {
      static std::map<std::string, std::string> cache;
      auto [it, inserted] = cache.try_emplace(name, b.text);
      return it->second;
    }
  }
  throw ConfigError("unknown built-in scenario '" + name + "'");
}

std::string list_scenarios() {
  std::ostringstream os;
  for (const Builtin& b : kBuiltins) {
    os << b.name << " - " << b.description << "\n";
  }
  return os.str();
}

}  // namespace hybens

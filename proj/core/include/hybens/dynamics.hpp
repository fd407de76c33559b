#pragma once

#include <span>
#include <string>
#include <vector>

#include "hybens/hamiltonian.hpp"

namespace hybens {

enum class Scheme { rk4, heun };

struct IntegratorConfig {
  Scheme scheme = Scheme::rk4;
  double dt = 0.0;  // <= 0: pick stable_dt() from the initial state
  long steps = 0;
  long renormalize_every = 0;  // 0 = never; drift stays visible by default
  bool monitor_norm = true;
  bool monitor_energy = true;
  bool monitor_means = false;  // per-axis means/momenta each step

  void validate() const {
    if (steps < 0) throw ConfigError("integrator steps must be >= 0");
    if (renormalize_every < 0) throw ConfigError("renormalize_every must be >= 0");
  }
};

// Per-axis mean series recorded when monitor_means is on.
struct AxisMeans {
  std::vector<double> coordinate;  // <x_a>
  std::vector<double> momentum;    // integral of P dS/dx_a
};

struct Trajectory {
  std::vector<EnsembleState> snapshots;
  std::vector<long> snapshot_steps;

  // One entry per step (including step 0).
  std::vector<long> step;
  std::vector<double> t;
  std::vector<double> norm;
  std::vector<double> energy;
  std::vector<double> clamped_mass;  // probability removed by the P >= 0 clamp
  std::vector<AxisMeans> means;      // [axis], empty unless monitor_means

  const EnsembleState& initial() const { return snapshots.front(); }
  const EnsembleState& final() const { return snapshots.back(); }
};

// One explicit step of the field Hamilton equations
//   dP/dt = delta_S,  dS/dt = -delta_P,
// applied simultaneously to (P, S). P is clamped at zero afterwards; the
// removed mass is reported through clamped_mass when given. Throws
// BlowUpError (step index 0) if the result is not finite.
EnsembleState step(const HamiltonianSpec& spec, const EnsembleState& state,
                   double dt, Scheme scheme, double* clamped_mass = nullptr);

// Repeated stepping with per-step monitors. Snapshots are recorded at step
// 0, every `record_every` steps (when > 0), and at the final step.
Trajectory evolve(const HamiltonianSpec& spec, EnsembleState state,
                  const IntegratorConfig& config, long record_every);

// Exact impulsive position measurement: both fields are replaced by their
// values at (q, x - K q). P samples in density mode, S in action mode.
EnsembleState impulsive_position_measurement(const EnsembleState& state, double K,
                                             int quantum_axis, int classical_axis);

// Step-size heuristic: 0.2 times the smallest of the quantum bound
// 2 m h^2 / hbar, the advection bound h / max|dS/m|, and the acceleration
// bound sqrt(m h / max|dV|), capped for degenerate free cases.
double stable_dt(const HamiltonianSpec& spec, const EnsembleState& state);

// Strang-split Schroedinger evolution of psi on fully periodic 1D/2D grids
// (spectral kinetic step, pointwise potential step). Used as an independent
// oracle for pure quantum sectors; refuses other grids.
ComplexField split_step_oracle(const ComplexField& psi0, std::span<const double> masses,
                               double hbar, const Field& V, double dt, long steps);

}  // namespace hybens

#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "hybens/dynamics.hpp"

namespace hybens {

// P-weighted expectation values.
double expectation(const EnsembleState& state, const Field& f);
double expectation(const EnsembleState& state,
                   const std::function<double(std::span<const double>)>& f);

double mean_coordinate(const EnsembleState& state, int axis);
double coordinate_variance(const EnsembleState& state, int axis);
double coordinate_covariance(const EnsembleState& state, int axis_a, int axis_b);

// Local momentum density P dS/dx_a and its integral.
Field momentum_density(const EnsembleState& state, int axis);
double momentum_mean(const EnsembleState& state, int axis);

// A functional of (P, S) with analytic functional derivatives.
class FunctionalSpec {
 public:
  enum class Kind {
    position_moment,
    potential_expectation,
    momentum_functional,
    hamiltonian,
    custom_p_weighted,
  };

  static FunctionalSpec position_moment(int axis, int power);
  static FunctionalSpec potential_expectation(PotentialSpec V);
  static FunctionalSpec momentum_functional(int axis);
  static FunctionalSpec hamiltonian(HamiltonianSpec spec);
  static FunctionalSpec custom_p_weighted(
      std::function<double(std::span<const double>)> f);

  Kind kind() const { return kind_; }
  double value(const EnsembleState& state) const;
  Field derivative_P(const EnsembleState& state) const;
  Field derivative_S(const EnsembleState& state) const;

 private:
  Kind kind_ = Kind::position_moment;
  int axis_ = 0;
  int power_ = 1;
  PotentialSpec potential_;
  std::vector<HamiltonianSpec> hamiltonian_;  // 0 or 1 entry
  std::function<double(std::span<const double>)> custom_;
};

// integral of [dA/dP dB/dS - dA/dS dB/dP] with analytic derivatives.
double functional_poisson_bracket(const FunctionalSpec& A, const FunctionalSpec& B,
                                  const EnsembleState& state);

// Same bracket with both derivative pairs taken by cellwise central
// differences of the functional values; small grids only (refuses > 10^4).
double functional_poisson_bracket_numerical(const FunctionalSpec& A,
                                            const FunctionalSpec& B,
                                            const EnsembleState& state);

// First-order translation generated by the momentum functional versus an
// actual shift of the fields by eps (eps must not exceed a tenth of the
// axis spacing). The bracket sides are -eps dP, -eps dS; the shift sides
// are f(x - eps) - f(x) sampled by interpolation.
struct GeneratorCheck {
  Field dP_bracket, dP_shift, dS_bracket, dS_shift;
};
GeneratorCheck translation_generator_check(const EnsembleState& state, int axis,
                                           double eps);

// Residuals of the generalized Ehrenfest relations on uniformly spaced
// trajectory snapshots (centered time differences):
//   r1_a = d<x_a>/dt - <dS/dx_a> / m_a
//   r2_a = d<p_a>/dt + <dV/dx_a>
// Evaluated at interior snapshots; returns one series per axis.
struct EhrenfestSeries {
  std::vector<double> t;
  std::vector<std::vector<double>> r1;  // [axis][snapshot]
  std::vector<std::vector<double>> r2;
};
EhrenfestSeries ehrenfest_residuals(const Trajectory& traj, const HamiltonianSpec& spec);

// Evolves `initial` and its quantum-sector phase transform S += f(q) under
// an uncoupled Hamiltonian and returns the largest L1 distance between the
// classical marginals over recorded times. Throws UsageError when the
// potential couples the sectors.
double separability_check(const EnsembleState& initial,
                          const std::function<double(std::span<const double>)>& phase,
                          const HamiltonianSpec& spec_uncoupled,
                          const IntegratorConfig& config, long record_every);

// Linearly-coupled hybrid oscillator benchmark: evolves the ensemble and
// compares the four means (<q>, <x>, <p_q>, <p_x>) against the classical
// 4D linear system integrated by a fine fixed-step RK4 oracle.
struct PeresTernoParams {
  double mass_quantum = 1.0;
  double mass_classical = 1.0;
  double hbar = 1.0;
  double k_quantum = 1.0;
  double k_classical = 1.0;
  double lambda = 0.0;
  GridPtr grid;                   // axis 0 = quantum, axis 1 = classical
  GaussianSpec initial;
  IntegratorConfig integrator;
  long record_every = 1;
  PotentialSpec potential_override;  // optional; must stay linear
  bool use_override = false;
};

struct PeresTernoReport {
  std::vector<double> t;
  std::array<std::vector<double>, 4> numeric;  // <q>, <x>, <p_q>, <p_x>
  std::array<std::vector<double>, 4> oracle;
  double max_rel_deviation = 0.0;
};

PeresTernoReport peres_terno_benchmark(const PeresTernoParams& params);

// L1 distance between two densities on the same grid.
double l1_distance(const Field& a, const Field& b);

}  // namespace hybens

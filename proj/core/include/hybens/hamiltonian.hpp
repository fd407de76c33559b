#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hybens/state.hpp"

namespace hybens {

enum class Sector { classical, quantum };

// One additive term of a potential energy density on configuration space.
struct PotentialTerm {
  enum class Kind { harmonic, linear_coupling, softened_gravity, polynomial };
  Kind kind = Kind::harmonic;
  int axis_a = 0;
  int axis_b = 0;                    // second axis for coupling terms
  double strength = 0.0;             // k, lambda, or G*m*M
  double center_a = 0.0;
  double center_b = 0.0;
  double softening = 0.0;            // softened_gravity only
  std::vector<double> coefficients;  // polynomial only
};

// Potential descriptor: a sum of named terms. The single-variant factory
// functions cover the forms used by the scenarios; terms compose with +.
class PotentialSpec {
 public:
  PotentialSpec() = default;

  static PotentialSpec none() { return PotentialSpec(); }
  static PotentialSpec from_terms(std::vector<PotentialTerm> terms);
  static PotentialSpec harmonic(int axis, double k, double center = 0.0);
  static PotentialSpec linear_coupling(double lambda, int axis_q, int axis_c,
                                       double center_q = 0.0, double center_c = 0.0);
  static PotentialSpec softened_gravity(double G, double m, double M,
                                        double softening, int axis_q, int axis_c);
  static PotentialSpec polynomial(int axis, std::vector<double> coefficients);

  PotentialSpec operator+(const PotentialSpec& other) const;

  const std::vector<PotentialTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  // True when no term involves two distinct axes (V = sum of per-axis parts).
  bool separable() const;
  bool couples(int axis_a, int axis_b) const;

  void validate(const Grid& grid) const;
  Field evaluate_on(const GridPtr& grid) const;

 private:
  std::vector<PotentialTerm> terms_;
};

// Impulsive or windowed position-measurement coupling kappa(t) q d/dx.
struct MeasurementCoupling {
  double total_kick = 0.0;  // K = integral of kappa over the window
  int quantum_axis = 0;
  int classical_axis = 1;
  double window_start = 0.0;
  double window_length = 0.0;  // 0 = impulsive only; never active in evaluate

  double kappa_at(double t) const {
    if (window_length <= 0.0) return 0.0;
    return (t >= window_start && t < window_start + window_length)
               ? total_kick / window_length
               : 0.0;
  }
};

// Declarative ensemble Hamiltonian: sector assignment, masses, hbar values,
// potential, and optional measurement coupling. Specs are immutable
// descriptions; all operations on them are pure.
class HamiltonianSpec {
 public:
  enum class Kind { classical, quantum, hybrid, hybrid_measurement, gravity_hybrid };

  static HamiltonianSpec classical(double mass, PotentialSpec V);
  static HamiltonianSpec quantum(double mass, double hbar, PotentialSpec V);
  static HamiltonianSpec hybrid(double mass_quantum, double mass_classical,
                                double hbar, PotentialSpec V,
                                std::vector<Sector> sectors);
  static HamiltonianSpec with_measurement(HamiltonianSpec base, double total_kick,
                                          int quantum_axis, int classical_axis,
                                          double window_start = 0.0,
                                          double window_length = 0.0);
  static HamiltonianSpec gravity_hybrid(double mass_quantum, double mass_classical,
                                        double hbar, double G, double softening,
                                        std::vector<Sector> sectors);

  Kind kind() const { return kind_; }
  const PotentialSpec& potential() const { return potential_; }
  bool has_measurement() const { return measurement_.total_kick != 0.0; }
  const MeasurementCoupling& measurement() const { return measurement_; }
  double hbar() const { return hbar_; }
  double gravity_G() const { return gravity_G_; }
  double gravity_softening() const { return gravity_softening_; }
  double mass_quantum() const { return mass_quantum_; }
  double mass_classical() const { return mass_classical_; }
  const std::vector<Sector>& sectors() const { return sectors_; }

  // Per-axis masses and hbar values (0 on classical axes) for a grid.
  // Throws UsageError when the axis partition does not fit the grid.
  struct Layout {
    std::vector<double> mass;
    std::vector<double> hbar;
    std::vector<int> quantum_axes;
  };
  Layout layout_for(const Grid& grid) const;

 private:
  Kind kind_ = Kind::classical;
  double mass_quantum_ = 1.0;
  double mass_classical_ = 1.0;
  double hbar_ = 0.0;
  double gravity_G_ = 0.0;
  double gravity_softening_ = 0.0;
  PotentialSpec potential_;
  std::vector<Sector> sectors_;  // empty = all axes share one sector
  MeasurementCoupling measurement_;
};

// ---- Hamiltonian functionals ----------------------------------------------
//
// The discrete energy is
//   H = sum_i w_i P_i [ V_i + sum_a (dS)_a,i^2 / 2 m_a ]
//     + sum_{quantum a} (hbar_a^2 / 2 m_a) * F_a(sqrt P)
//     + kappa(t) sum_i w_i P_i q_i (dS)_x,i
// with F_a the face-difference Fisher sum along axis a. delta_P and delta_S
// below are the exact discrete gradients of this functional, so the
// homogeneity identity H = integrate(P * delta_P) and discrete conservation
// laws hold to roundoff rather than to stencil accuracy.

double evaluate(const HamiltonianSpec& spec, const EnsembleState& state);

// delta H / delta P: kinetic density + V + quantum potential (+ measurement).
Field delta_P(const HamiltonianSpec& spec, const EnsembleState& state);

// delta H / delta S: minus the discrete divergence of the probability flux,
// built from the exact adjoint of the gradient stencil.
Field delta_S(const HamiltonianSpec& spec, const EnsembleState& state);

// Q = -(hbar^2/2m) L sqrt(P) / sqrt(P) summed over the given axes, with the
// relative P-floor applied to the denominator. L matches the operator whose
// exact variational source is the face-difference Fisher sum: compact
// interior rows, wrapped on periodic axes, and 2(R1-R0)/h^2 end rows on
// clamped axes.
Field quantum_potential(const Field& P, double hbar, double mass,
                        std::span<const int> quantum_axes);

enum class Which { P, S };

// Central-difference functional derivative oracle, cell by cell:
//   (H[f + d e_c] - H[f - d e_c]) / (2 d w_c).
// O(N^2); refuses grids above 10^4 points.
Field numerical_functional_derivative(const HamiltonianSpec& spec,
                                      const EnsembleState& state, Which which);

// Both sides of the homogeneity identity: (H, integrate(P * delta_P)).
std::pair<double, double> homogeneity_energy(const HamiltonianSpec& spec,
                                             const EnsembleState& state);

}  // namespace hybens

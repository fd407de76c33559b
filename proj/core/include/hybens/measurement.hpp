#pragma once

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include "hybens/dynamics.hpp"

namespace hybens {

// Discretized conditional density operator rho[q, q'] over a 1D quantum
// basis: Hermitian, positive semidefinite, unit trace in the discrete sense
// sum_q rho[q,q] w_q = 1 over the included classical slices.
struct ConditionalDensityOperator {
  int n = 0;
  double q0 = 0.0;
  double dq = 0.0;
  std::vector<std::complex<double>> rho;  // row-major n x n
  std::vector<double> weights;            // per-basis-point quadrature weight
  double excluded_mass = 0.0;             // probability in skipped slices

  std::complex<double> at(int i, int j) const {
    return rho[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
               static_cast<std::size_t>(j)];
  }
  double trace() const;
  double purity() const;  // tr(rho^2) in the discrete sense
};

// Assembles rho = sum_x w_x P(x) |psi_x><psi_x| over classical slices whose
// marginal mass exceeds the relative floor; the trace is renormalized over
// the included slices and the excluded mass reported. Requires exactly one
// quantum axis (the position basis of the operator).
ConditionalDensityOperator conditional_density_operator(
    const EnsembleState& state, double hbar, std::span<const int> classical_axes);

// L1 norm of the off-diagonal entries over the L1 norm of the diagonal.
double coherence_metric(const ConditionalDensityOperator& rho);

// Full position-measurement protocol on a 2-axis (quantum, classical) grid.
struct MeasurementProtocolConfig {
  GridPtr grid;                 // axis `quantum_axis` = q, axis `classical_axis` = x
  int quantum_axis = 0;
  int classical_axis = 1;
  double hbar = 1.0;
  double mass_quantum = 1.0;
  double mass_classical = 1.0;
  GaussianSpec quantum_initial;  // over the quantum axis only (1D peaks)
  double pointer_sigma = 0.0;    // widened to 2 cells when smaller
  double pointer_center = 0.0;   // x0
  double kick = 1.0;             // K
  long pre_steps = 0;            // optional free segments around the kick
  long post_steps = 0;
  IntegratorConfig integrator;
};

struct MeasurementReport {
  Field pointer_before;  // classical marginals
  Field pointer_after;
  ConditionalDensityOperator rho_before;
  ConditionalDensityOperator rho_after;
  double coherence_before = 0.0;
  double coherence_after = 0.0;
  double norm_before = 0.0;
  double norm_after = 0.0;
  double kick = 0.0;
  double pointer_center = 0.0;
  double pointer_sigma_used = 0.0;
  // Inferred-value map: q estimate for each classical grid point.
  std::vector<double> inferred_q;
  EnsembleState state_before;
  EnsembleState state_after;
};

// Builds the product state P(q,x,0) = g(x - x0) P_Q(q), applies the
// impulsive kick (plus optional free evolution segments), and collects the
// before/after diagnostics. Throws DomainEscapeError when the image
// x0 + K q of the quantum support does not fit in the pointer axis.
MeasurementReport run_position_measurement(const MeasurementProtocolConfig& config);

// Serializes marginal CSVs, rho real/imag CSVs, and summary.txt into dir.
void write_report(const MeasurementReport& report, const std::filesystem::path& dir);

}  // namespace hybens

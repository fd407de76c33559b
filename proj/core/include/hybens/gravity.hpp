#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "hybens/dynamics.hpp"

namespace hybens {

// hbar_com = sqrt(m/(m+M)) hbar, hbar_rel = sqrt(M/(m+M)) hbar. Their
// squares add up to hbar^2 exactly.
std::pair<double, double> rescaled_planck_constants(double m, double M, double hbar);

// Center-of-mass / relative coordinates for a 2-axis (q, x) state:
// xbar = (m q + M x)/(m+M), r = x - q. Unit Jacobian; P is resampled in
// density mode and S in action mode on the target grid.
EnsembleState com_transform(const EnsembleState& lab, double m, double M,
                            GridPtr com_grid);
EnsembleState lab_from_com(const EnsembleState& com, double m, double M,
                           GridPtr lab_grid);

// Clamped grid covering the bounding box of the lab domain's image, with
// comparable resolution.
GridPtr default_com_grid(const GridPtr& lab_grid, double m, double M);

// Energy bookkeeping of the hybrid gravitational Hamiltonian in
// center-of-mass coordinates: free com motion (i), relative motion in the
// softened potential (ii), and the intrinsic cross term (iii).
struct ComDecomposition {
  double term_i = 0.0;
  double term_ii = 0.0;
  double term_iii = 0.0;
  double hbar_com = 0.0;
  double hbar_rel = 0.0;
  double total = 0.0;
};

ComDecomposition evaluate_com_decomposition(const EnsembleState& com_state, double m,
                                            double M, double hbar, double G,
                                            double softening);

// Gravitational scattering scenario: classical projectile against a one- or
// two-peak quantum target under softened Newtonian attraction.
struct ScatteringConfig {
  GridPtr grid;  // axis 0 = quantum target q, axis 1 = classical projectile x
  double mass_quantum = 1.0;
  double mass_classical = 10.0;
  double hbar = 1.0;
  double G = 1.0;
  double softening = 0.0;  // <= 0: 4 cells of the classical axis
  GaussianSpec target;      // 1D peaks over q
  GaussianSpec projectile;  // single 1D peak over x, with momentum
  IntegratorConfig integrator;
  long record_every = 0;
  bool include_control = true;  // also run the G = 0 twin
};

struct ScatteringReport {
  std::vector<double> t;
  std::vector<double> covariance;       // cov(q, x)(t)
  std::vector<double> sigma_q, sigma_x;
  std::vector<double> mean_q, mean_x;
  std::vector<double> mass_peak_a, mass_peak_b;  // two-peak bookkeeping
  double closest_approach = 0.0;
  double closest_approach_time = 0.0;
  // Conditional classical distributions given the target peak regions, at
  // the final time, and their L1 contrast.
  Field conditional_given_a;
  Field conditional_given_b;
  double conditional_contrast = 0.0;
  bool two_peak = false;
  double softening_used = 0.0;
  // G = 0 control run diagnostics.
  bool has_control = false;
  double control_max_cov_ratio = 0.0;  // max |cov| / (sigma_q sigma_x)
  double coupled_max_cov_ratio = 0.0;
  double initial_cov_ratio = 0.0;
  // Conservation monitors of the coupled run.
  double norm_drift = 0.0;
  double energy_drift_rel = 0.0;
};

ScatteringReport run_scattering(const ScatteringConfig& config);

void write_report(const ScatteringReport& report, const std::filesystem::path& dir);

}  // namespace hybens

#pragma once

#include <span>
#include <vector>

#include "hybens/grid.hpp"

namespace hybens {

// The dynamical state: probability density P and conjugate action field S
// over a shared grid, at time t. States are snapshots; evolution produces
// new states.
struct EnsembleState {
  Field P;
  Field S;
  double t = 0.0;

  const GridPtr& grid() const { return P.grid(); }
};

// One Gaussian component of an initial state: per-axis mean, standard
// deviation and phase slope (momentum). Momenta add p * coordinate to S.
struct GaussianPeak {
  std::vector<double> mean;
  std::vector<double> sigma;
  std::vector<double> momentum;  // may be empty = all zero
  double weight = 1.0;
};

// Initial-state description: one peak, or a positive-weight mixture.
struct GaussianSpec {
  std::vector<GaussianPeak> peaks;

  static GaussianSpec single(std::vector<double> mean, std::vector<double> sigma,
                             std::vector<double> momentum = {});
  void validate(const Grid& grid) const;  // throws ConfigError
};

// Relative floor applied wherever P appears in a denominator or log:
// eps = kPFloorRelative * max(P).
inline constexpr double kPFloorRelative = 1e-12;

// Builds a normalized (P, S) state from Gaussian data. Peaks must fit in
// the domain with at least 4 sigma of margin per axis.
EnsembleState make_state(const GridPtr& grid, const GaussianSpec& spec, double t0);

// Rescales P to unit total probability; S and t are untouched.
EnsembleState normalize(EnsembleState state);

// psi = sqrt(P) * exp(i S / hbar), pointwise.
ComplexField to_wavefunction(const EnsembleState& state, double hbar);

// Integrates P over all axes not listed, returning a density on the
// sub-grid formed by `classical_axes` (kept in their original order).
Field classical_marginal(const EnsembleState& state, std::span<const int> classical_axes);

// Marginal mass of the classical slice at `classical_idx` (indices along
// classical_axes), i.e. the discrete P(x) at that point.
double slice_mass(const EnsembleState& state, std::span<const int> classical_axes,
                  std::span<const int> classical_idx);

// Conditional wave function psi(q|x) over the quantum sub-grid at a fixed
// classical grid point, unit-normalized over q. Throws
// UndefinedConditionalError when the slice carries no probability mass
// (P(x) at or below the slice floor).
ComplexField conditional_wavefunction(const EnsembleState& state,
                                      std::span<const int> classical_axes,
                                      std::span<const int> classical_idx,
                                      double hbar);

// Complement of `axes` within the grid's rank, in increasing order.
std::vector<int> complement_axes(const Grid& grid, std::span<const int> axes);

}  // namespace hybens

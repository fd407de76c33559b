#include "hybens/state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hybens {

GaussianSpec GaussianSpec::single(std::vector<double> mean, std::vector<double> sigma,
                                  std::vector<double> momentum) {
  GaussianSpec spec;
  spec.peaks.push_back({std::move(mean), std::move(sigma), std::move(momentum), 1.0});
  return spec;
}

void GaussianSpec::validate(const Grid& grid) const {
  if (peaks.empty()) throw ConfigError("initial state has no Gaussian peaks");
  double wsum = 0.0;
  for (const GaussianPeak& pk : peaks) {
    if (!(pk.weight > 0.0)) throw ConfigError("peak weights must be positive");
    wsum += pk.weight;
    const std::size_t rank = static_cast<std::size_t>(grid.rank());
    if (pk.mean.size() != rank || pk.sigma.size() != rank) {
      throw ConfigError("peak mean/sigma must give one value per grid axis");
    }
    if (!pk.momentum.empty() && pk.momentum.size() != rank) {
      throw ConfigError("peak momentum must be empty or one value per axis");
    }
    for (int a = 0; a < grid.rank(); ++a) {
      const Axis& ax = grid.axis(a);
      const double s = pk.sigma[static_cast<std::size_t>(a)];
      const double mu = pk.mean[static_cast<std::size_t>(a)];
      if (!(s >= 2.0 * ax.spacing())) {
        throw ConfigError("peak sigma on axis '" + ax.name +
                          "' must span at least 2 grid cells");
      }
      if (mu - 4.0 * s < ax.min || mu + 4.0 * s > ax.max) {
        throw ConfigError("peak on axis '" + ax.name +
                          "' does not fit in the domain with 4 sigma margin");
      }
    }
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw ConfigError("peak weights must sum to 1");
  }
}

namespace {

// Unnormalized Gaussian factor of one peak at the given coordinates.
double peak_density(const GaussianPeak& pk, std::span<const double> coords) {
  double arg = 0.0;
  double norm = 1.0;
  for (std::size_t a = 0; a < coords.size(); ++a) {
    const double d = (coords[a] - pk.mean[a]) / pk.sigma[a];
    arg += 0.5 * d * d;
    norm /= pk.sigma[a] * std::sqrt(2.0 * std::numbers::pi);
  }
  return norm * std::exp(-arg);
}

double peak_action(const GaussianPeak& pk, std::span<const double> coords) {
  if (pk.momentum.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t a = 0; a < coords.size(); ++a) {
    s += pk.momentum[a] * coords[a];
  }
  return s;
}

bool equal_momenta(const GaussianSpec& spec) {
  for (std::size_t k = 1; k < spec.peaks.size(); ++k) {
    const auto& p0 = spec.peaks[0].momentum;
    const auto& pk = spec.peaks[k].momentum;
    const std::size_t n = std::max(p0.size(), pk.size());
    for (std::size_t a = 0; a < n; ++a) {
      const double v0 = a < p0.size() ? p0[a] : 0.0;
      const double vk = a < pk.size() ? pk[a] : 0.0;
      if (v0 != vk) return false;
    }
  }
  return true;
}

}  // namespace

EnsembleState make_state(const GridPtr& grid, const GaussianSpec& spec, double t0) {
  spec.validate(*grid);

  Field P(grid);
  Field S(grid);
  const bool shared_momentum = equal_momenta(spec);

  std::array<double, 4> coords{};
  const int rank = grid->rank();
  for (std::int64_t p = 0; p < grid->size(); ++p) {
    const auto idx = grid->unflatten(p);
    for (int a = 0; a < rank; ++a) {
      coords[static_cast<std::size_t>(a)] = grid->coord(a, idx[static_cast<std::size_t>(a)]);
    }
    const std::span<const double> c(coords.data(), static_cast<std::size_t>(rank));

    double density = 0.0;
    double weighted_action = 0.0;
    for (const GaussianPeak& pk : spec.peaks) {
      const double d = pk.weight * peak_density(pk, c);
      density += d;
      if (!shared_momentum) weighted_action += d * peak_action(pk, c);
    }
    P[p] = density;
    if (shared_momentum) {
      // All peaks carry one phase slope; use the exact linear action.
      S[p] = peak_action(spec.peaks[0], c);
    } else {
      S[p] = density > 0.0 ? weighted_action / density : 0.0;
    }
  }

  EnsembleState state{std::move(P), std::move(S), t0};
  return normalize(std::move(state));
}

EnsembleState normalize(EnsembleState state) {
  const double total = integrate(state.P);
  if (!(total > 0.0)) {
    throw InvalidStateError("cannot normalize: total probability is not positive");
  }
  const double inv = 1.0 / total;
  for (double& v : state.P.values()) v *= inv;
  return state;
}

ComplexField to_wavefunction(const EnsembleState& state, double hbar) {
  if (!(hbar > 0.0)) throw UsageError("to_wavefunction: hbar must be positive");
  ComplexField psi;
  psi.grid = state.grid();
  psi.values.resize(static_cast<std::size_t>(state.P.size()));
  for (std::int64_t i = 0; i < state.P.size(); ++i) {
    const double amp = std::sqrt(std::max(state.P[i], 0.0));
    const double phase = state.S[i] / hbar;
    psi.values[static_cast<std::size_t>(i)] =
        std::complex<double>(amp * std::cos(phase), amp * std::sin(phase));
  }
  return psi;
}

std::vector<int> complement_axes(const Grid& grid, std::span<const int> axes) {
  std::vector<bool> used(static_cast<std::size_t>(grid.rank()), false);
  for (int a : axes) {
    if (a < 0 || a >= grid.rank()) throw UsageError("axis index out of range");
    if (used[static_cast<std::size_t>(a)]) throw UsageError("duplicate axis index");
    used[static_cast<std::size_t>(a)] = true;
  }
  std::vector<int> rest;
  for (int a = 0; a < grid.rank(); ++a) {
    if (!used[static_cast<std::size_t>(a)]) rest.push_back(a);
  }
  return rest;
}

namespace {

// Integrates `f` over `sum_axes`, returning a field on the grid formed by
// the kept axes. Quadrature weights of the summed axes are applied.
Field partial_integral(const Field& f, std::span<const int> keep_axes,
                       std::span<const int> sum_axes) {
  const Grid& g = *f.grid();
  std::vector<Axis> kept;
  for (int a : keep_axes) kept.push_back(g.axis(a));
  GridPtr sub = Grid::make(kept);

  Field out(sub, 0.0);
  double volume = 1.0;
  for (int a : sum_axes) volume *= g.axis(a).spacing();

  for (std::int64_t p = 0; p < g.size(); ++p) {
    const auto idx = g.unflatten(p);
    double w = volume;
    for (int a : sum_axes) {
      w *= g.axis_weight(a, idx[static_cast<std::size_t>(a)]);
    }
    std::int64_t sub_flat = 0;
    std::int64_t stride = 1;
    for (int k = static_cast<int>(keep_axes.size()) - 1; k >= 0; --k) {
      sub_flat += static_cast<std::int64_t>(idx[static_cast<std::size_t>(keep_axes[static_cast<std::size_t>(k)])]) * stride;
      stride *= g.axis(keep_axes[static_cast<std::size_t>(k)]).count;
    }
    out[sub_flat] += w * f[p];
  }
  return out;
}

}  // namespace

Field classical_marginal(const EnsembleState& state, std::span<const int> classical_axes) {
  const Grid& g = *state.grid();
  if (classical_axes.empty() || static_cast<int>(classical_axes.size()) >= g.rank() + 1) {
    throw UsageError("classical_marginal: bad axis partition");
  }
  const std::vector<int> quantum = complement_axes(g, classical_axes);
  if (quantum.empty()) {
    throw UsageError("classical_marginal: partition leaves no quantum axes");
  }
  return partial_integral(state.P, classical_axes, quantum);
}

double slice_mass(const EnsembleState& state, std::span<const int> classical_axes,
                  std::span<const int> classical_idx) {
  const Grid& g = *state.grid();
  if (classical_idx.size() != classical_axes.size()) {
    throw UsageError("slice_mass: one index per classical axis required");
  }
  const std::vector<int> quantum = complement_axes(g, classical_axes);
  double volume = 1.0;
  for (int a : quantum) volume *= g.axis(a).spacing();

  // Walk the quantum sub-lattice at the fixed classical indices.
  std::int64_t fixed = 0;
  for (std::size_t k = 0; k < classical_axes.size(); ++k) {
    fixed += static_cast<std::int64_t>(classical_idx[k]) * g.stride(classical_axes[k]);
  }
  std::int64_t count = 1;
  for (int a : quantum) count *= g.axis(a).count;

  double mass = 0.0;
  std::vector<int> qidx(quantum.size(), 0);
  for (std::int64_t c = 0; c < count; ++c) {
    std::int64_t flat = fixed;
    double w = volume;
    std::int64_t rem = c;
    for (int k = static_cast<int>(quantum.size()) - 1; k >= 0; --k) {
      const int a = quantum[static_cast<std::size_t>(k)];
      const int n = g.axis(a).count;
      const int i = static_cast<int>(rem % n);
      rem /= n;
      flat += static_cast<std::int64_t>(i) * g.stride(a);
      w *= g.axis_weight(a, i);
    }
    mass += w * state.P[flat];
  }
  return mass;
}

ComplexField conditional_wavefunction(const EnsembleState& state,
                                      std::span<const int> classical_axes,
                                      std::span<const int> classical_idx,
                                      double hbar) {
  if (!(hbar > 0.0)) throw UsageError("conditional_wavefunction: hbar must be positive");
  const Grid& g = *state.grid();
  const std::vector<int> quantum = complement_axes(g, classical_axes);
  if (quantum.empty()) throw UsageError("conditional_wavefunction: no quantum axes");

  // Slice threshold: relative floor against the largest slice mass.
  Field marginal = classical_marginal(state, classical_axes);
  const double eps = kPFloorRelative * max_abs(marginal);
  const double mass = slice_mass(state, classical_axes, classical_idx);
  if (!(mass > eps)) {
    throw UndefinedConditionalError(
        "conditional undefined: classical slice carries no probability mass");
  }

  std::vector<Axis> qaxes;
  for (int a : quantum) qaxes.push_back(g.axis(a));
  GridPtr qgrid = Grid::make(qaxes);

  std::int64_t fixed = 0;
  for (std::size_t k = 0; k < classical_axes.size(); ++k) {
    fixed += static_cast<std::int64_t>(classical_idx[k]) * g.stride(classical_axes[k]);
  }

  ComplexField psi;
  psi.grid = qgrid;
  psi.values.resize(static_cast<std::size_t>(qgrid->size()));

  double norm2 = 0.0;
  for (std::int64_t q = 0; q < qgrid->size(); ++q) {
    const auto qi = qgrid->unflatten(q);
    std::int64_t flat = fixed;
    for (std::size_t k = 0; k < quantum.size(); ++k) {
      flat += static_cast<std::int64_t>(qi[k]) * g.stride(quantum[k]);
    }
    const double pc = std::max(state.P[flat], 0.0) / mass;
    const double amp = std::sqrt(pc);
    const double phase = state.S[flat] / hbar;
    psi.values[static_cast<std::size_t>(q)] =
        std::complex<double>(amp * std::cos(phase), amp * std::sin(phase));
    norm2 += std::norm(psi.values[static_cast<std::size_t>(q)]) *
             qgrid->quadrature_weight(q);
  }
  // Kill residual quadrature error so the conditional is exactly unit norm.
  const double scale = 1.0 / std::sqrt(norm2);
  for (auto& v : psi.values) v *= scale;
  return psi;
}

}  // namespace hybens

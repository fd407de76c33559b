#include "hybens/observables.hpp"

#include <algorithm>
#include <cmath>

namespace hybens {

double expectation(const EnsembleState& state, const Field& f) {
  if (!f.grid()->same_as(*state.grid())) {
    throw UsageError("expectation: field lives on a different grid");
  }
  return integrate(hadamard(state.P, f));
}

double expectation(const EnsembleState& state,
                   const std::function<double(std::span<const double>)>& f) {
  return expectation(state, evaluate_on_grid(state.grid(), f));
}

double mean_coordinate(const EnsembleState& state, int axis) {
  return expectation(state, coordinate_field(state.grid(), axis));
}

double coordinate_variance(const EnsembleState& state, int axis) {
  const Field x = coordinate_field(state.grid(), axis);
  const double mean = expectation(state, x);
  Field sq(state.grid());
  for (std::int64_t i = 0; i < sq.size(); ++i) {
    const double d = x[i] - mean;
    sq[i] = d * d;
  }
  return expectation(state, sq);
}

double coordinate_covariance(const EnsembleState& state, int axis_a, int axis_b) {
  const Field xa = coordinate_field(state.grid(), axis_a);
  const Field xb = coordinate_field(state.grid(), axis_b);
  const double ma = expectation(state, xa);
  const double mb = expectation(state, xb);
  Field cross(state.grid());
  for (std::int64_t i = 0; i < cross.size(); ++i) {
    cross[i] = (xa[i] - ma) * (xb[i] - mb);
  }
  return expectation(state, cross);
}

Field momentum_density(const EnsembleState& state, int axis) {
  return hadamard(state.P, gradient(state.S, axis));
}

double momentum_mean(const EnsembleState& state, int axis) {
  return integrate(momentum_density(state, axis));
}

// ---- FunctionalSpec --------------------------------------------------------

FunctionalSpec FunctionalSpec::position_moment(int axis, int power) {
  if (power < 1) throw UsageError("position moment power must be >= 1");
  FunctionalSpec f;
  f.kind_ = Kind::position_moment;
  f.axis_ = axis;
  f.power_ = power;
  return f;
}

FunctionalSpec FunctionalSpec::potential_expectation(PotentialSpec V) {
  FunctionalSpec f;
  f.kind_ = Kind::potential_expectation;
  f.potential_ = std::move(V);
  return f;
}

FunctionalSpec FunctionalSpec::momentum_functional(int axis) {
  FunctionalSpec f;
  f.kind_ = Kind::momentum_functional;
  f.axis_ = axis;
  return f;
}

FunctionalSpec FunctionalSpec::hamiltonian(HamiltonianSpec spec) {
  FunctionalSpec f;
  f.kind_ = Kind::hamiltonian;
  f.hamiltonian_.push_back(std::move(spec));
  return f;
}

FunctionalSpec FunctionalSpec::custom_p_weighted(
    std::function<double(std::span<const double>)> fn) {
  FunctionalSpec f;
  f.kind_ = Kind::custom_p_weighted;
  f.custom_ = std::move(fn);
  return f;
}

namespace {

Field power_field(const GridPtr& grid, int axis, int power) {
  Field x = coordinate_field(grid, axis);
  if (power == 1) return x;
  Field out(grid, 1.0);
  for (int k = 0; k < power; ++k) out = hadamard(out, x);
  return out;
}

}  // namespace

double FunctionalSpec::value(const EnsembleState& state) const {
  switch (kind_) {
    case Kind::position_moment:
      return expectation(state, power_field(state.grid(), axis_, power_));
    case Kind::potential_expectation:
      return expectation(state, potential_.evaluate_on(state.grid()));
    case Kind::momentum_functional:
      return momentum_mean(state, axis_);
    case Kind::hamiltonian:
      return evaluate(hamiltonian_.front(), state);
    case Kind::custom_p_weighted:
      return expectation(state, custom_);
  }
  throw UsageError("unreachable functional kind");
}

Field FunctionalSpec::derivative_P(const EnsembleState& state) const {
  switch (kind_) {
    case Kind::position_moment:
      return power_field(state.grid(), axis_, power_);
    case Kind::potential_expectation:
      return potential_.evaluate_on(state.grid());
    case Kind::momentum_functional:
      return gradient(state.S, axis_);
    case Kind::hamiltonian:
      return delta_P(hamiltonian_.front(), state);
    case Kind::custom_p_weighted:
      return evaluate_on_grid(state.grid(), custom_);
  }
  throw UsageError("unreachable functional kind");
}

Field FunctionalSpec::derivative_S(const EnsembleState& state) const {
  switch (kind_) {
    case Kind::position_moment:
    case Kind::potential_expectation:
    case Kind::custom_p_weighted:
      return Field(state.grid(), 0.0);
    case Kind::momentum_functional:
      // Exact discrete adjoint of integral P dS/dx_a with respect to S.
      return adjoint_divergence_term(state.P, axis_);
    case Kind::hamiltonian:
      return delta_S(hamiltonian_.front(), state);
  }
  throw UsageError("unreachable functional kind");
}

double functional_poisson_bracket(const FunctionalSpec& A, const FunctionalSpec& B,
                                  const EnsembleState& state) {
  const Field aP = A.derivative_P(state);
  const Field aS = A.derivative_S(state);
  const Field bP = B.derivative_P(state);
  const Field bS = B.derivative_S(state);
  Field integrand(state.grid());
  for (std::int64_t i = 0; i < integrand.size(); ++i) {
    integrand[i] = aP[i] * bS[i] - aS[i] * bP[i];
  }
  return integrate(integrand);
}

namespace {

// Cellwise central-difference derivatives of an arbitrary functional value.
Field numerical_derivative(const FunctionalSpec& F, const EnsembleState& state,
                           bool wrt_P) {
  const Grid& g = *state.grid();
  if (g.size() > 10000) {
    throw RefusalError("numerical functional derivative refused: grid larger than 10^4 points");
  }
  EnsembleState work{state.P, state.S, state.t};
  Field& target = wrt_P ? work.P : work.S;
  const double scale = max_abs(target);
  Field out(state.grid());
  for (std::int64_t c = 0; c < g.size(); ++c) {
    const double saved = target[c];
    const double delta =
        wrt_P ? std::max(1e-6 * std::max(std::abs(saved), 1e-2 * scale), 1e-12)
              : 0.01 * std::max(scale, 1.0);
    target[c] = saved + delta;
    const double plus = F.value(work);
    target[c] = saved - delta;
    const double minus = F.value(work);
    target[c] = saved;
    out[c] = (plus - minus) / (2.0 * delta * g.quadrature_weight(c));
  }
  return out;
}

}  // namespace

double functional_poisson_bracket_numerical(const FunctionalSpec& A,
                                            const FunctionalSpec& B,
                                            const EnsembleState& state) {
  const Field aP = numerical_derivative(A, state, true);
  const Field aS = numerical_derivative(A, state, false);
  const Field bP = numerical_derivative(B, state, true);
  const Field bS = numerical_derivative(B, state, false);
  Field integrand(state.grid());
  for (std::int64_t i = 0; i < integrand.size(); ++i) {
    integrand[i] = aP[i] * bS[i] - aS[i] * bP[i];
  }
  return integrate(integrand);
}

GeneratorCheck translation_generator_check(const EnsembleState& state, int axis,
                                           double eps) {
  const Grid& g = *state.grid();
  const double h = g.axis(axis).spacing();
  if (!(eps > 0.0) || eps > 0.1 * h) {
    throw UsageError("translation check requires 0 < eps <= 0.1 * spacing");
  }

  GeneratorCheck out{gradient(state.P, axis), Field(), gradient(state.S, axis), Field()};
  for (double& v : out.dP_bracket.values()) v *= -eps;
  for (double& v : out.dS_bracket.values()) v *= -eps;

  std::vector<double> disp(static_cast<std::size_t>(g.rank()), 0.0);
  disp[static_cast<std::size_t>(axis)] = -eps;
  const Field p_shifted = shift_interpolate(state.P, disp, SampleMode::density);
  const Field s_shifted = shift_interpolate(state.S, disp, SampleMode::action);
  out.dP_shift = linear_combination(1.0, p_shifted, -1.0, state.P);
  out.dS_shift = linear_combination(1.0, s_shifted, -1.0, state.S);
  return out;
}

EhrenfestSeries ehrenfest_residuals(const Trajectory& traj, const HamiltonianSpec& spec) {
  const std::size_t n = traj.snapshots.size();
  if (n < 3) throw UsageError("ehrenfest residuals need at least 3 snapshots");

  const double dt = traj.snapshots[1].t - traj.snapshots[0].t;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double step_dt = traj.snapshots[k + 1].t - traj.snapshots[k].t;
    if (std::abs(step_dt - dt) > 1e-9 * std::max(std::abs(dt), 1.0)) {
      throw UsageError("ehrenfest residuals require uniformly spaced snapshots");
    }
  }

  const Grid& g = *traj.snapshots.front().grid();
  const auto layout = spec.layout_for(g);
  const Field V = spec.potential().evaluate_on(traj.snapshots.front().grid());
  const int rank = g.rank();

  // Per-snapshot means.
  std::vector<std::vector<double>> xs(static_cast<std::size_t>(rank)),
      ps(static_cast<std::size_t>(rank)), vs(static_cast<std::size_t>(rank)),
      fs(static_cast<std::size_t>(rank));
  for (const EnsembleState& s : traj.snapshots) {
    for (int a = 0; a < rank; ++a) {
      const double m = layout.mass[static_cast<std::size_t>(a)];
      xs[static_cast<std::size_t>(a)].push_back(mean_coordinate(s, a));
      ps[static_cast<std::size_t>(a)].push_back(momentum_mean(s, a));
      vs[static_cast<std::size_t>(a)].push_back(momentum_mean(s, a) / m);
      fs[static_cast<std::size_t>(a)].push_back(expectation(s, gradient(V, a)));
    }
  }

  EhrenfestSeries out;
  out.r1.resize(static_cast<std::size_t>(rank));
  out.r2.resize(static_cast<std::size_t>(rank));
  for (std::size_t k = 1; k + 1 < n; ++k) {
    out.t.push_back(traj.snapshots[k].t);
    for (int a = 0; a < rank; ++a) {
      const auto& x = xs[static_cast<std::size_t>(a)];
      const auto& p = ps[static_cast<std::size_t>(a)];
      const double dxdt = (x[k + 1] - x[k - 1]) / (2.0 * dt);
      const double dpdt = (p[k + 1] - p[k - 1]) / (2.0 * dt);
      out.r1[static_cast<std::size_t>(a)].push_back(
          dxdt - vs[static_cast<std::size_t>(a)][k]);
      out.r2[static_cast<std::size_t>(a)].push_back(
          dpdt + fs[static_cast<std::size_t>(a)][k]);
    }
  }
  return out;
}

double l1_distance(const Field& a, const Field& b) {
  if (!a.grid()->same_as(*b.grid())) {
    throw UsageError("l1_distance: fields live on different grids");
  }
  Field diff(a.grid());
  for (std::int64_t i = 0; i < diff.size(); ++i) {
    diff[i] = std::abs(a[i] - b[i]);
  }
  return integrate(diff);
}

double separability_check(const EnsembleState& initial,
                          const std::function<double(std::span<const double>)>& phase,
                          const HamiltonianSpec& spec_uncoupled,
                          const IntegratorConfig& config, long record_every) {
  const Grid& g = *initial.grid();
  const auto layout = spec_uncoupled.layout_for(g);
  if (layout.quantum_axes.empty() ||
      layout.quantum_axes.size() == static_cast<std::size_t>(g.rank())) {
    throw UsageError("separability check needs both quantum and classical axes");
  }
  for (int qa : layout.quantum_axes) {
    for (int a = 0; a < g.rank(); ++a) {
      if (spec_uncoupled.potential().couples(qa, a)) {
        throw UsageError("separability check requires an uncoupled potential");
      }
    }
  }
  std::vector<int> classical = complement_axes(g, layout.quantum_axes);

  // Phase transform acts on the quantum coordinates only.
  EnsembleState transformed{initial.P, initial.S, initial.t};
  std::array<double, 4> qc{};
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const auto idx = g.unflatten(i);
    for (std::size_t k = 0; k < layout.quantum_axes.size(); ++k) {
      const int a = layout.quantum_axes[k];
      qc[k] = g.coord(a, idx[static_cast<std::size_t>(a)]);
    }
    transformed.S[i] += phase(std::span<const double>(qc.data(), layout.quantum_axes.size()));
  }

  const Trajectory base = evolve(spec_uncoupled, initial, config, record_every);
  const Trajectory moved = evolve(spec_uncoupled, transformed, config, record_every);

  double worst = 0.0;
  for (std::size_t k = 0; k < base.snapshots.size(); ++k) {
    const Field ma = classical_marginal(base.snapshots[k], classical);
    const Field mb = classical_marginal(moved.snapshots[k], classical);
    worst = std::max(worst, l1_distance(ma, mb));
  }
  return worst;
}

namespace {

// Fine fixed-step RK4 on the 4D linear oscillator system; step count is
// large enough that the oracle error sits at roundoff for desk-scale runs.
std::array<std::vector<double>, 4> linear_ode_oracle(
    const std::array<double, 4>& y0, std::span<const double> times, double m,
    double M, double kq, double kx, double lambda) {
  std::array<std::vector<double>, 4> out;
  auto deriv = [&](const std::array<double, 4>& y) {
    return std::array<double, 4>{
        y[2] / m, y[3] / M, -kq * y[0] - lambda * y[1], -kx * y[1] - lambda * y[0]};
  };
  std::array<double, 4> y = y0;
  double t = times.empty() ? 0.0 : times[0];
  for (std::size_t i = 0; i < 4; ++i) out[i].push_back(y[i]);

  for (std::size_t k = 1; k < times.size(); ++k) {
    const double span = times[k] - t;
    const long sub = std::max<long>(200, static_cast<long>(std::ceil(span / 1e-4)));
    const double h = span / static_cast<double>(sub);
    for (long s = 0; s < sub; ++s) {
      const auto k1 = deriv(y);
      std::array<double, 4> y2, y3, y4;
      for (int i = 0; i < 4; ++i) y2[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + 0.5 * h * k1[static_cast<std::size_t>(i)];
      const auto k2 = deriv(y2);
      for (int i = 0; i < 4; ++i) y3[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + 0.5 * h * k2[static_cast<std::size_t>(i)];
      const auto k3 = deriv(y3);
      for (int i = 0; i < 4; ++i) y4[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + h * k3[static_cast<std::size_t>(i)];
      const auto k4 = deriv(y4);
      for (int i = 0; i < 4; ++i) {
        y[static_cast<std::size_t>(i)] += h / 6.0 *
            (k1[static_cast<std::size_t>(i)] + 2.0 * k2[static_cast<std::size_t>(i)] +
             2.0 * k3[static_cast<std::size_t>(i)] + k4[static_cast<std::size_t>(i)]);
      }
    }
    t = times[k];
    for (std::size_t i = 0; i < 4; ++i) out[i].push_back(y[i]);
  }
  return out;
}

}  // namespace

PeresTernoReport peres_terno_benchmark(const PeresTernoParams& params) {
  if (!params.grid || params.grid->rank() != 2) {
    throw UsageError("Peres-Terno benchmark needs a 2D (quantum, classical) grid");
  }
  PotentialSpec V = PotentialSpec::harmonic(0, params.k_quantum) +
                    PotentialSpec::harmonic(1, params.k_classical) +
                    PotentialSpec::linear_coupling(params.lambda, 0, 1);
  if (params.use_override) {
    for (const PotentialTerm& t : params.potential_override.terms()) {
      if (t.kind != PotentialTerm::Kind::harmonic &&
          t.kind != PotentialTerm::Kind::linear_coupling) {
        throw UsageError("Peres-Terno benchmark requires a linear force law");
      }
    }
    V = params.potential_override;
  }
  const HamiltonianSpec spec = HamiltonianSpec::hybrid(
      params.mass_quantum, params.mass_classical, params.hbar, V,
      {Sector::quantum, Sector::classical});

  EnsembleState state = make_state(params.grid, params.initial, 0.0);
  const Trajectory traj = evolve(spec, state, params.integrator, params.record_every);

  PeresTernoReport report;
  for (const EnsembleState& s : traj.snapshots) {
    report.t.push_back(s.t);
    report.numeric[0].push_back(mean_coordinate(s, 0));
    report.numeric[1].push_back(mean_coordinate(s, 1));
    report.numeric[2].push_back(momentum_mean(s, 0));
    report.numeric[3].push_back(momentum_mean(s, 1));
  }

  const std::array<double, 4> y0{report.numeric[0][0], report.numeric[1][0],
                                 report.numeric[2][0], report.numeric[3][0]};
  report.oracle = linear_ode_oracle(y0, report.t, params.mass_quantum,
                                    params.mass_classical, params.k_quantum,
                                    params.k_classical, params.lambda);

  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    double scale = 0.0;
    for (double v : report.oracle[c]) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    for (std::size_t k = 0; k < report.t.size(); ++k) {
      worst = std::max(worst, std::abs(report.numeric[c][k] - report.oracle[c][k]) / scale);
    }
  }
  report.max_rel_deviation = worst;
  return report;
}

}  // namespace hybens

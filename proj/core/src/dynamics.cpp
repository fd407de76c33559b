#include "hybens/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>

namespace hybens {

namespace {

struct Rhs {
  Field dP;  // delta_S
  Field dS;  // -delta_P
};

Rhs rhs(const HamiltonianSpec& spec, const EnsembleState& state) {
  Rhs r{delta_S(spec, state), delta_P(spec, state)};
  for (double& v : r.dS.values()) v = -v;
  return r;
}

EnsembleState axpy_state(const EnsembleState& y, double a, const Rhs& k) {
  EnsembleState out{y.P, y.S, y.t + a};
  for (std::int64_t i = 0; i < out.P.size(); ++i) {
    out.P[i] += a * k.dP[i];
    out.S[i] += a * k.dS[i];
  }
  return out;
}

}  // namespace

EnsembleState step(const HamiltonianSpec& spec, const EnsembleState& state,
                   double dt, Scheme scheme, double* clamped_mass) {
  EnsembleState next{state.P, state.S, state.t + dt};

  if (dt != 0.0) {
    if (scheme == Scheme::rk4) {
      const Rhs k1 = rhs(spec, state);
      const Rhs k2 = rhs(spec, axpy_state(state, 0.5 * dt, k1));
      const Rhs k3 = rhs(spec, axpy_state(state, 0.5 * dt, k2));
      const Rhs k4 = rhs(spec, axpy_state(state, dt, k3));
      const double c = dt / 6.0;
      for (std::int64_t i = 0; i < next.P.size(); ++i) {
        next.P[i] += c * (k1.dP[i] + 2.0 * k2.dP[i] + 2.0 * k3.dP[i] + k4.dP[i]);
        next.S[i] += c * (k1.dS[i] + 2.0 * k2.dS[i] + 2.0 * k3.dS[i] + k4.dS[i]);
      }
    } else {
      const Rhs k1 = rhs(spec, state);
      const Rhs k2 = rhs(spec, axpy_state(state, dt, k1));
      const double c = 0.5 * dt;
      for (std::int64_t i = 0; i < next.P.size(); ++i) {
        next.P[i] += c * (k1.dP[i] + k2.dP[i]);
        next.S[i] += c * (k1.dS[i] + k2.dS[i]);
      }
    }
  }

  // Stencil undershoot can push P slightly negative; clamp and account.
  double clamped = 0.0;
  const Grid& g = *next.grid();
  for (std::int64_t i = 0; i < next.P.size(); ++i) {
    if (next.P[i] < 0.0) {
      clamped -= next.P[i] * g.quadrature_weight(i);
      next.P[i] = 0.0;
    }
  }
  if (clamped_mass) *clamped_mass = clamped;

  if (!all_finite(next.P)) throw BlowUpError("P", 0, next.t);
  if (!all_finite(next.S)) throw BlowUpError("S", 0, next.t);
  return next;
}

Trajectory evolve(const HamiltonianSpec& spec, EnsembleState state,
                  const IntegratorConfig& config, long record_every) {
  config.validate();
  const double dt = config.dt > 0.0 ? config.dt : stable_dt(spec, state);
  const int rank = state.grid()->rank();

  Trajectory traj;
  if (config.monitor_means) {
    traj.means.resize(static_cast<std::size_t>(rank));
  }

  auto monitor = [&](long n, const EnsembleState& s, double clamped) {
    traj.step.push_back(n);
    traj.t.push_back(s.t);
    traj.clamped_mass.push_back(clamped);
    traj.norm.push_back(config.monitor_norm ? integrate(s.P)
                                            : std::numeric_limits<double>::quiet_NaN());
    traj.energy.push_back(config.monitor_energy
                              ? evaluate(spec, s)
                              : std::numeric_limits<double>::quiet_NaN());
    if (config.monitor_means) {
      for (int a = 0; a < rank; ++a) {
        const Field coord = coordinate_field(s.grid(), a);
        const Field grad_s = gradient(s.S, a);
        traj.means[static_cast<std::size_t>(a)].coordinate.push_back(
            integrate(hadamard(s.P, coord)));
        traj.means[static_cast<std::size_t>(a)].momentum.push_back(
            integrate(hadamard(s.P, grad_s)));
      }
    }
  };

  monitor(0, state, 0.0);
  traj.snapshots.push_back(state);
  traj.snapshot_steps.push_back(0);

  for (long n = 1; n <= config.steps; ++n) {
    double clamped = 0.0;
    try {
      state = step(spec, state, dt, config.scheme, &clamped);
    } catch (const BlowUpError& e) {
      throw BlowUpError(e.field(), n, e.time());
    }
    if (config.renormalize_every > 0 && n % config.renormalize_every == 0) {
      state = normalize(std::move(state));
    }
    monitor(n, state, clamped);
    if ((record_every > 0 && n % record_every == 0) || n == config.steps) {
      traj.snapshots.push_back(state);
      traj.snapshot_steps.push_back(n);
    }
  }
  return traj;
}

EnsembleState impulsive_position_measurement(const EnsembleState& state, double K,
                                             int quantum_axis, int classical_axis) {
  const Grid& g = *state.grid();
  if (quantum_axis == classical_axis) {
    throw UsageError("measurement axes must be distinct");
  }
  if (K == 0.0) return state;

  // Sample position along the pointer axis is x - K q: displacement -K q.
  Field disp = coordinate_field(state.grid(), quantum_axis);
  for (double& v : disp.values()) v *= -K;

  std::vector<const Field*> per_axis(static_cast<std::size_t>(g.rank()), nullptr);
  per_axis[static_cast<std::size_t>(classical_axis)] = &disp;

  EnsembleState out{shift_interpolate(state.P, per_axis, SampleMode::density),
                    shift_interpolate(state.S, per_axis, SampleMode::action), state.t};
  // Interpolation can produce tiny negative densities.
  for (double& v : out.P.values()) v = std::max(v, 0.0);
  return out;
}

double stable_dt(const HamiltonianSpec& spec, const EnsembleState& state) {
  const Grid& g = *state.grid();
  const auto layout = spec.layout_for(g);
  const Field V = spec.potential().evaluate_on(state.grid());

  double bound = std::numeric_limits<double>::infinity();
  double vmax = 0.0;
  double min_length = std::numeric_limits<double>::infinity();

  for (int a = 0; a < g.rank(); ++a) {
    const double h = g.axis(a).spacing();
    const double m = layout.mass[static_cast<std::size_t>(a)];
    const double hb = layout.hbar[static_cast<std::size_t>(a)];
    min_length = std::min(min_length, g.axis(a).length());

    if (hb > 0.0) {
      bound = std::min(bound, 2.0 * m * h * h / hb);
    }
    const double speed = max_abs(gradient(state.S, a)) / m;
    vmax = std::max(vmax, speed);
    if (speed > 0.0) {
      bound = std::min(bound, h / speed);
    }
    const double force = max_abs(gradient(V, a));
    if (force > 0.0) {
      bound = std::min(bound, std::sqrt(m * h / force));
    }
  }
  if (spec.has_measurement() && spec.measurement().window_length > 0.0) {
    const MeasurementCoupling& mc = spec.measurement();
    const double kappa = std::abs(mc.total_kick) / mc.window_length;
    const double qmax = std::max(std::abs(g.axis(mc.quantum_axis).min),
                                 std::abs(g.axis(mc.quantum_axis).max));
    const double speed = kappa * qmax;
    vmax = std::max(vmax, speed);
    if (speed > 0.0) {
      bound = std::min(bound, g.axis(mc.classical_axis).spacing() / speed);
    }
  }

  // Hard cap covers free/uniform cases where every bound is infinite.
  const double cap = min_length / (100.0 * std::max(vmax, 1.0));
  const double dt = std::isfinite(bound) ? std::min(0.2 * bound, cap) : cap;
  return dt;
}

ComplexField split_step_oracle(const ComplexField& psi0, std::span<const double> masses,
                               double hbar, const Field& V, double dt, long steps) {
  const Grid& g = *psi0.grid;
  if (g.rank() > 2) {
    throw RefusalError("split-step oracle supports 1D and 2D grids only");
  }
  for (const Axis& ax : g.axes()) {
    if (ax.boundary != Boundary::periodic) {
      throw RefusalError("split-step oracle requires fully periodic grids");
    }
  }
  if (static_cast<int>(masses.size()) != g.rank()) {
    throw UsageError("split-step oracle: one mass per axis required");
  }
  if (!V.grid()->same_as(g)) {
    throw UsageError("split-step oracle: potential grid mismatch");
  }
  if (!(hbar > 0.0)) throw UsageError("split-step oracle: hbar must be positive");

  const std::int64_t n_total = g.size();
  const int n0 = g.axis(0).count;
  const int n1 = g.rank() == 2 ? g.axis(1).count : 1;

  // Half-step potential phase and full-step kinetic phase factors.
  std::vector<std::complex<double>> vphase(static_cast<std::size_t>(n_total));
  for (std::int64_t i = 0; i < n_total; ++i) {
    const double arg = -V[i] * 0.5 * dt / hbar;
    vphase[static_cast<std::size_t>(i)] = {std::cos(arg), std::sin(arg)};
  }
  auto wavenumber = [](int i, int n, double length) {
    const int k = i <= n / 2 ? i : i - n;
    return 2.0 * std::numbers::pi * k / length;
  };
  std::vector<std::complex<double>> kphase(static_cast<std::size_t>(n_total));
  for (std::int64_t i = 0; i < n_total; ++i) {
    const int i0 = static_cast<int>(i / n1);
    const int i1 = static_cast<int>(i % n1);
    double kin = 0.0;
    const double k0 = wavenumber(i0, n0, g.axis(0).length());
    kin += hbar * k0 * k0 / (2.0 * masses[0]);
    if (g.rank() == 2) {
      const double k1 = wavenumber(i1, n1, g.axis(1).length());
      kin += hbar * k1 * k1 / (2.0 * masses[1]);
    }
    const double arg = -kin * dt;
    kphase[static_cast<std::size_t>(i)] = {std::cos(arg), std::sin(arg)};
  }

  std::vector<std::complex<double>> data = psi0.values;
  auto* fft_data = reinterpret_cast<fftw_complex*>(data.data());

  // FFTW planning is not thread safe.
  static std::mutex plan_mutex;
  fftw_plan forward, backward;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    if (g.rank() == 1) {
      forward = fftw_plan_dft_1d(n0, fft_data, fft_data, FFTW_FORWARD, FFTW_ESTIMATE);
      backward = fftw_plan_dft_1d(n0, fft_data, fft_data, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
      forward = fftw_plan_dft_2d(n0, n1, fft_data, fft_data, FFTW_FORWARD, FFTW_ESTIMATE);
      backward = fftw_plan_dft_2d(n0, n1, fft_data, fft_data, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n_total);
  for (long s = 0; s < steps; ++s) {
    for (std::int64_t i = 0; i < n_total; ++i) {
      data[static_cast<std::size_t>(i)] *= vphase[static_cast<std::size_t>(i)];
    }
    fftw_execute(forward);
    for (std::int64_t i = 0; i < n_total; ++i) {
      data[static_cast<std::size_t>(i)] *= kphase[static_cast<std::size_t>(i)] * inv_n;
    }
    fftw_execute(backward);
    for (std::int64_t i = 0; i < n_total; ++i) {
      data[static_cast<std::size_t>(i)] *= vphase[static_cast<std::size_t>(i)];
    }
  }

  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  return ComplexField{psi0.grid, std::move(data)};
}

}  // namespace hybens

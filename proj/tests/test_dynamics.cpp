#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "hybens/dynamics.hpp"
#include "hybens/observables.hpp"

using namespace hybens;
using std::numbers::pi;

namespace {

GridPtr periodic_1d(int n, double lo, double hi) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::periodic}});
}

GridPtr clamped_1d(int n, double lo, double hi) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::clamped}});
}

double l2_distance(const ComplexField& a, const ComplexField& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    acc += std::norm(a.values[i] - b.values[i]) * a.grid->quadrature_weight(
               static_cast<std::int64_t>(i));
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("step with dt = 0 returns the state unchanged") {
  const auto g = clamped_1d(64, -6.0, 6.0);
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.8}, {0.4}), 0.0);
  const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::harmonic(0, 1.0));
  const EnsembleState next = step(spec, s, 0.0, Scheme::rk4);
  for (std::int64_t i = 0; i < s.P.size(); ++i) {
    CHECK(next.P[i] == s.P[i]);
    CHECK(next.S[i] == s.S[i]);
  }
}

TEST_CASE("classical free step transports the packet at p/m") {
  const auto g = clamped_1d(256, -10.0, 10.0);
  const double p = 1.2, m = 1.5;
  const EnsembleState s = make_state(g, GaussianSpec::single({-2.0}, {0.7}, {p}), 0.0);
  const auto spec = HamiltonianSpec::classical(m, PotentialSpec::none());
  const double dt = stable_dt(spec, s);
  const EnsembleState next = step(spec, s, dt, Scheme::rk4);
  // The first coordinate moment moves at exactly p/m in the semi-discrete
  // system; only rk4 roundoff remains.
  const double moved = mean_coordinate(next, 0) - mean_coordinate(s, 0);
  CHECK(moved == doctest::Approx(p / m * dt).epsilon(1e-10));
}

TEST_CASE("quantum free steps track the split-step oracle") {
  const int n = 256;
  const auto g = periodic_1d(n, -10.0, 10.0);
  const double hbar = 1.0, m = 1.0, sigma = 0.9;
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {sigma}), 0.0);
  const auto spec = HamiltonianSpec::quantum(m, hbar, PotentialSpec::none());
  const double dt = stable_dt(spec, s);

  const ComplexField psi0 = to_wavefunction(s, hbar);
  const long steps = 10;
  for (long k = 0; k < steps; ++k) s = step(spec, s, dt, Scheme::rk4);
  const std::vector<double> masses{m};
  const ComplexField oracle =
      split_step_oracle(psi0, masses, hbar, Field(g, 0.0), dt, steps);
  const ComplexField psi = to_wavefunction(s, hbar);
  CHECK(l2_distance(psi, oracle) < 1e-5);
}

TEST_CASE("evolve with zero steps returns only the initial state") {
  const auto g = clamped_1d(32, -4.0, 4.0);
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.6}), 0.0);
  const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
  IntegratorConfig cfg;
  cfg.steps = 0;
  const Trajectory traj = evolve(spec, s, cfg, 1);
  CHECK(traj.snapshots.size() == 1);
  CHECK(traj.snapshot_steps.front() == 0);
}

TEST_CASE("free quantum Gaussian follows the spreading law") {
  const int n = 256;
  const auto g = periodic_1d(n, -14.0, 14.0);
  const double hbar = 1.0, m = 1.0, s0 = 0.8;
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {s0}), 0.0);
  const auto spec = HamiltonianSpec::quantum(m, hbar, PotentialSpec::none());

  IntegratorConfig cfg;
  cfg.dt = stable_dt(spec, s);
  // Run until sigma(t) = 2 s0: t = sqrt(3) * 2 m s0^2 / hbar.
  const double t_final = std::sqrt(3.0) * 2.0 * m * s0 * s0 / hbar;
  cfg.steps = static_cast<long>(std::ceil(t_final / cfg.dt));
  const Trajectory traj = evolve(spec, s, cfg, 0);

  const EnsembleState& end = traj.snapshots.back();
  const double tau = hbar * end.t / (2.0 * m * s0 * s0);
  const double expected = s0 * s0 * (1.0 + tau * tau);
  CHECK(coordinate_variance(end, 0) == doctest::Approx(expected).epsilon(0.005));

  // Conservation along the way.
  for (double nrm : traj.norm) CHECK(std::abs(nrm - 1.0) < 1e-9);
  const double e0 = traj.energy.front();
  for (double e : traj.energy) CHECK(std::abs(e - e0) < 1e-6 * std::abs(e0));
}

TEST_CASE("classical harmonic ensemble at rest: center fixed, variance breathes") {
  const auto g = clamped_1d(256, -8.0, 8.0);
  const double k = 1.0, m = 1.0, s0 = 0.8;
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {s0}), 0.0);
  const auto spec = HamiltonianSpec::classical(m, PotentialSpec::harmonic(0, k));

  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  const double t_final = 0.3;  // before the quarter-period caustic
  cfg.steps = static_cast<long>(t_final / cfg.dt);
  const Trajectory traj = evolve(spec, s, cfg, 0);

  const EnsembleState& end = traj.snapshots.back();
  CHECK(std::abs(mean_coordinate(end, 0)) < 1e-9);
  // Characteristics: every sample moves as x0 cos(w t), so the variance is
  // s0^2 cos^2(w t) (frequency 2w oscillation).
  const double w = std::sqrt(k / m);
  const double expected = s0 * s0 * std::pow(std::cos(w * end.t), 2);
  CHECK(coordinate_variance(end, 0) == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("rk4 converges at fourth order") {
  const auto g = periodic_1d(64, -8.0, 8.0);
  const double hbar = 1.0, m = 1.0;
  const EnsembleState s0 = make_state(g, GaussianSpec::single({0.0}, {1.0}), 0.0);
  const auto spec = HamiltonianSpec::quantum(m, hbar, PotentialSpec::none());

  const double t_final = 0.512;
  auto terminal = [&](double dt) {
    EnsembleState s = s0;
    const long steps = static_cast<long>(std::round(t_final / dt));
    for (long k = 0; k < steps; ++k) s = step(spec, s, dt, Scheme::rk4);
    return s;
  };
  const EnsembleState coarse = terminal(8e-3);
  const EnsembleState fine = terminal(4e-3);
  const EnsembleState reference = terminal(1e-3);

  auto err = [&](const EnsembleState& a) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.P.size(); ++i) {
      acc = std::max(acc, std::abs(a.P[i] - reference.P[i]));
    }
    return acc;
  };
  const double ratio = err(coarse) / err(fine);
  CHECK(ratio > 16.0 * 0.75);
  CHECK(ratio < 16.0 * 1.25);
}

TEST_CASE("heun scheme also integrates (lower order)") {
  const auto g = periodic_1d(128, -10.0, 10.0);
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.9}), 0.0);
  const auto spec = HamiltonianSpec::quantum(1.0, 1.0, PotentialSpec::none());
  IntegratorConfig cfg;
  cfg.scheme = Scheme::heun;
  cfg.dt = 0.25 * stable_dt(spec, s);
  cfg.steps = 100;
  const Trajectory traj = evolve(spec, s, cfg, 0);
  CHECK(std::abs(traj.norm.back() - 1.0) < 1e-8);
}

TEST_CASE("decoupling limit: separable evolution stays a product") {
  const int nq = 64, nx = 64;
  const auto joint = Grid::make({Axis{"q", -7.0, 7.0, nq, Boundary::clamped},
                                 Axis{"x", -7.0, 7.0, nx, Boundary::clamped}});
  const auto gq = Grid::make({Axis{"q", -7.0, 7.0, nq, Boundary::clamped}});
  const auto gx = Grid::make({Axis{"x", -7.0, 7.0, nx, Boundary::clamped}});

  const double hbar = 1.0, m = 1.0, M = 1.7;
  const PotentialSpec vq = PotentialSpec::harmonic(0, 1.0);
  const PotentialSpec vx = PotentialSpec::harmonic(1, 0.5);

  const auto hybrid = HamiltonianSpec::hybrid(m, M, hbar, vq + vx,
                                              {Sector::quantum, Sector::classical});
  const auto quantum_only = HamiltonianSpec::quantum(m, hbar, PotentialSpec::harmonic(0, 1.0));
  const auto classical_only =
      HamiltonianSpec::classical(M, PotentialSpec::harmonic(0, 0.5));

  EnsembleState sj = make_state(joint, GaussianSpec::single({0.6, -0.4}, {0.8, 0.9}), 0.0);
  EnsembleState sq = make_state(gq, GaussianSpec::single({0.6}, {0.8}), 0.0);
  EnsembleState sx = make_state(gx, GaussianSpec::single({-0.4}, {0.9}), 0.0);

  IntegratorConfig cfg;
  cfg.dt = 2e-3;
  cfg.steps = 400;
  const Trajectory tj = evolve(hybrid, sj, cfg, 0);
  const Trajectory tq = evolve(quantum_only, sq, cfg, 0);
  const Trajectory tx = evolve(classical_only, sx, cfg, 0);

  // Joint P versus the outer product of the single-sector factors, in L1.
  const EnsembleState& end = tj.snapshots.back();
  const Field& pq = tq.snapshots.back().P;
  const Field& px = tx.snapshots.back().P;
  Field product(joint);
  for (int i = 0; i < nq; ++i) {
    for (int j = 0; j < nx; ++j) {
      const std::vector<int> idx{i, j};
      product[joint->flatten(idx)] = pq[i] * px[j];
    }
  }
  CHECK(l1_distance(end.P, product) < 1e-6);
}

TEST_CASE("impulsive position measurement") {
  const auto g = Grid::make({Axis{"q", -4.0, 4.0, 96, Boundary::clamped},
                             Axis{"x", -4.0, 4.0, 96, Boundary::clamped}});
  GaussianSpec spec = GaussianSpec::single({0.0, 0.0}, {0.5, 0.3});
  const EnsembleState s = make_state(g, spec, 0.0);

  SUBCASE("K = 0 is the identity") {
    const EnsembleState out = impulsive_position_measurement(s, 0.0, 0, 1);
    for (std::int64_t i = 0; i < s.P.size(); ++i) CHECK(out.P[i] == s.P[i]);
  }
  SUBCASE("K then -K recovers the state within interpolation error") {
    const double K = 1.5;
    const EnsembleState kicked = impulsive_position_measurement(s, K, 0, 1);
    const EnsembleState back = impulsive_position_measurement(kicked, -K, 0, 1);
    CHECK(l1_distance(back.P, s.P) < 1e-3);
  }
  SUBCASE("probability is conserved within interpolation error") {
    const EnsembleState kicked = impulsive_position_measurement(s, 1.5, 0, 1);
    CHECK(std::abs(integrate(kicked.P) - integrate(s.P)) < 1e-6);
  }
  SUBCASE("same axis for both sectors is rejected") {
    CHECK_THROWS_AS(impulsive_position_measurement(s, 1.0, 0, 0), UsageError);
  }
}

TEST_CASE("stable_dt") {
  SUBCASE("quantum bound: 0.2 * 2 m h^2 / hbar") {
    const auto g = periodic_1d(8, 0.0, 0.8);  // spacing exactly 0.1
    EnsembleState s{Field(g, 1.0), Field(g, 0.0), 0.0};
    s = normalize(std::move(s));
    const auto spec = HamiltonianSpec::quantum(1.0, 1.0, PotentialSpec::none());
    CHECK(stable_dt(spec, s) == doctest::Approx(0.004).epsilon(1e-12));
  }
  SUBCASE("degenerate free classical case returns the hard cap") {
    const auto g = periodic_1d(64, 0.0, 2.0);
    EnsembleState s{Field(g, 1.0), Field(g, 0.0), 0.0};
    s = normalize(std::move(s));
    const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
    CHECK(stable_dt(spec, s) == doctest::Approx(2.0 / 100.0).epsilon(1e-12));
  }
  SUBCASE("doubling the spacing quadruples the quantum bound") {
    const auto g1 = periodic_1d(16, 0.0, 1.6);  // h = 0.1
    const auto g2 = periodic_1d(16, 0.0, 3.2);  // h = 0.2
    EnsembleState s1{Field(g1, 1.0), Field(g1, 0.0), 0.0};
    EnsembleState s2{Field(g2, 1.0), Field(g2, 0.0), 0.0};
    const auto spec = HamiltonianSpec::quantum(1.0, 1.0, PotentialSpec::none());
    CHECK(stable_dt(spec, s2) == doctest::Approx(4.0 * stable_dt(spec, s1)).epsilon(1e-12));
  }
}

TEST_CASE("blow-up raises a structured error naming field and step") {
  const auto g = clamped_1d(32, -4.0, 4.0);
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.8}), 0.0);
  s.S[16] = 1e308;  // forces an overflow in |dS|^2 within one step
  const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 3;
  try {
    evolve(spec, s, cfg, 0);
    FAIL("expected BlowUpError");
  } catch (const BlowUpError& e) {
    CHECK(e.step() >= 1);
    CHECK((e.field() == "P" || e.field() == "S"));
  }
}

TEST_CASE("split-step oracle") {
  SUBCASE("plane wave rotates at the dispersion frequency") {
    const int n = 64;
    const double L = 4.0;
    const auto g = periodic_1d(n, 0.0, L);
    const double hbar = 1.0, m = 1.0;
    const int mode = 3;
    const double k = 2.0 * pi * mode / L;
    ComplexField psi;
    psi.grid = g;
    psi.values.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      psi.values[static_cast<std::size_t>(i)] = std::polar(1.0, k * g->coord(0, i));
    }
    const double dt = 1e-3;
    const long steps = 100;
    const std::vector<double> masses{m};
    const ComplexField out =
        split_step_oracle(psi, masses, hbar, Field(g, 0.0), dt, steps);
    const double phase = -hbar * k * k / (2.0 * m) * dt * static_cast<double>(steps);
    for (int i = 0; i < n; ++i) {
      const std::complex<double> expect =
          std::polar(1.0, k * g->coord(0, i) + phase);
      CHECK(std::abs(out.values[static_cast<std::size_t>(i)] - expect) < 1e-10);
    }
  }
  SUBCASE("norm is conserved to 1e-12 over 1e4 steps") {
    const int n = 64;
    const auto g = periodic_1d(n, -8.0, 8.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}), 0.0);
    ComplexField psi = to_wavefunction(s, 1.0);
    const Field v = evaluate_on_grid(
        g, [](std::span<const double> x) { return 0.3 * x[0] * x[0]; });
    const std::vector<double> masses{1.0};
    const ComplexField out = split_step_oracle(psi, masses, 1.0, v, 5e-4, 10000);
    double norm = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      norm += std::norm(out.values[i]) * g->quadrature_weight(static_cast<std::int64_t>(i));
    }
    CHECK(std::abs(norm - 1.0) < 1e-12);
  }
  SUBCASE("free Gaussian spreading law is reproduced") {
    const int n = 512;
    const auto g = periodic_1d(n, -16.0, 16.0);
    const double hbar = 1.0, m = 1.0, s0 = 1.0;
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {s0}), 0.0);
    ComplexField psi = to_wavefunction(s, hbar);
    const double t_final = 2.0;
    const double dt = 1e-3;
    const std::vector<double> masses{m};
    const ComplexField out = split_step_oracle(psi, masses, hbar, Field(g, 0.0), dt,
                                               static_cast<long>(t_final / dt));
    // Discrete variance of |psi|^2.
    double mean = 0.0, var = 0.0, norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = std::norm(out.values[static_cast<std::size_t>(i)]) *
                       g->quadrature_weight(i);
      norm += w;
      mean += w * g->coord(0, i);
    }
    mean /= norm;
    for (int i = 0; i < n; ++i) {
      const double w = std::norm(out.values[static_cast<std::size_t>(i)]) *
                       g->quadrature_weight(i);
      const double d = g->coord(0, i) - mean;
      var += w * d * d;
    }
    var /= norm;
    const double tau = hbar * t_final / (2.0 * m * s0 * s0);
    const double expected = s0 * s0 * (1.0 + tau * tau);
    CHECK(var == doctest::Approx(expected).epsilon(1e-6));
  }
  SUBCASE("clamped grids are refused") {
    const auto g = clamped_1d(32, 0.0, 1.0);
    ComplexField psi;
    psi.grid = g;
    psi.values.assign(32, {1.0, 0.0});
    const std::vector<double> masses{1.0};
    CHECK_THROWS_AS(split_step_oracle(psi, masses, 1.0, Field(g, 0.0), 1e-3, 1),
                    RefusalError);
  }
}

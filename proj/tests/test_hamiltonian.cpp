#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hybens/hamiltonian.hpp"

using namespace hybens;
using std::numbers::pi;

namespace {

GridPtr periodic_1d(int n, double lo, double hi) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::periodic}});
}

GridPtr clamped_1d(int n, double lo, double hi) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::clamped}});
}

EnsembleState uniform_state(const GridPtr& g) {
  EnsembleState s{Field(g, 1.0), Field(g, 0.0), 0.0};
  return normalize(std::move(s));
}

// Max relative disagreement of two fields against the larger field's scale,
// restricted to cells where P exceeds the given relative support floor.
double rel_disagreement(const Field& a, const Field& b, const Field& P,
                        double support_floor) {
  const double scale = std::max(max_abs(a), max_abs(b));
  const double pmax = max_abs(P);
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (P[i] > support_floor * pmax) {
      worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("evaluate: classical uniform free ensemble has zero energy") {
  const auto g = periodic_1d(64, 0.0, 2.0);
  const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
  CHECK(evaluate(spec, uniform_state(g)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("evaluate: quantum Gaussian Fisher energy is hbar^2/(8 m sigma^2)") {
  // High resolution: the face-difference Fisher sum carries an O(h^2/sigma^2)
  // truncation term, so hitting 1e-6 relative needs sigma ~ 500 cells.
  const int n = 8192;
  const auto g = clamped_1d(n, -8.0, 8.0);
  const double sigma = 1.0, hbar = 0.7, m = 1.3;
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {sigma}), 0.0);
  const auto spec = HamiltonianSpec::quantum(m, hbar, PotentialSpec::none());
  const double expected = hbar * hbar / (8.0 * m * sigma * sigma);
  CHECK(evaluate(spec, s) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("evaluate: plane-wave action gives p^2/2m") {
  const auto g = clamped_1d(256, -8.0, 8.0);
  const double p = 1.4, m = 2.0;
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}, {p}), 0.0);
  const auto spec = HamiltonianSpec::classical(m, PotentialSpec::none());
  CHECK(evaluate(spec, s) == doctest::Approx(p * p / (2.0 * m)).epsilon(1e-9));
}

TEST_CASE("evaluate is invariant under constant action offsets") {
  const auto g = clamped_1d(128, -6.0, 6.0);
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.8}, {0.5}), 0.0);
  const auto spec =
      HamiltonianSpec::quantum(1.0, 1.0, PotentialSpec::harmonic(0, 0.7));
  const double e0 = evaluate(spec, s);
  EnsembleState shifted = s;
  for (double& v : shifted.S.values()) v += 17.5;
  CHECK(evaluate(spec, shifted) == doctest::Approx(e0).epsilon(1e-12));
}

TEST_CASE("hybrid with hbar = 0 evaluates as a two-particle classical ensemble") {
  const auto g = Grid::make({Axis{"q", -6.0, 6.0, 48, Boundary::clamped},
                             Axis{"x", -6.0, 6.0, 48, Boundary::clamped}});
  GaussianSpec init = GaussianSpec::single({0.5, -0.5}, {0.8, 0.9}, {0.3, -0.2});
  const EnsembleState s = make_state(g, init, 0.0);
  const PotentialSpec V = PotentialSpec::harmonic(0, 1.0) + PotentialSpec::harmonic(1, 0.5);

  const auto hybrid0 = HamiltonianSpec::hybrid(1.0, 1.0, 0.0, V,
                                               {Sector::quantum, Sector::classical});
  const auto classical = HamiltonianSpec::classical(1.0, V);
  CHECK(evaluate(hybrid0, s) == doctest::Approx(evaluate(classical, s)).epsilon(1e-13));

  const Field dp_h = delta_P(hybrid0, s);
  const Field dp_c = delta_P(classical, s);
  for (std::int64_t i = 0; i < dp_h.size(); ++i) {
    CHECK(dp_h[i] == doctest::Approx(dp_c[i]).epsilon(1e-12));
  }
}

TEST_CASE("delta_S trivial cases") {
  SUBCASE("zero action gives zero flux divergence for every variant") {
    const auto g = clamped_1d(96, -6.0, 6.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.8}), 0.0);
    for (const auto& spec :
         {HamiltonianSpec::classical(1.0, PotentialSpec::harmonic(0, 1.0)),
          HamiltonianSpec::quantum(1.0, 0.7, PotentialSpec::none())}) {
      const Field ds = delta_S(spec, s);
      CHECK(max_abs(ds) == 0.0);
    }
  }
  SUBCASE("uniform density with linear action on a periodic axis") {
    const auto g = periodic_1d(64, 0.0, 4.0);
    EnsembleState s = uniform_state(g);
    // S = p x is not periodic, but with uniform P the discrete flux is
    // constant along the interior; use a genuinely periodic linear phase
    // instead: S with constant gradient only exists as p x, so check the
    // interior away from the seam.
    const double p = 0.8;
    for (std::int64_t i = 0; i < g->size(); ++i) {
      s.S[i] = p * g->coord(0, static_cast<int>(i));
    }
    const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
    const Field ds = delta_S(spec, s);
    for (int i = 2; i < g->axis(0).count - 2; ++i) {
      CHECK(std::abs(ds[i]) < 1e-12);
    }
  }
}

TEST_CASE("analytic functional derivatives match the numerical oracle") {
  const auto g = clamped_1d(32, -4.0, 4.0);
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.9}, {0.6}), 0.0);

  SUBCASE("classical: delta_P exact for the linear-in-P functional") {
    const auto spec = HamiltonianSpec::classical(1.5, PotentialSpec::harmonic(0, 0.8));
    const Field analytic = delta_P(spec, s);
    const Field numeric = numerical_functional_derivative(spec, s, Which::P);
    CHECK(rel_disagreement(analytic, numeric, s.P, 0.0) < 1e-8);
  }
  SUBCASE("delta_S is exact for any spec (H quadratic in S)") {
    for (const auto& spec :
         {HamiltonianSpec::classical(1.5, PotentialSpec::harmonic(0, 0.8)),
          HamiltonianSpec::quantum(0.9, 0.8, PotentialSpec::none())}) {
      const Field analytic = delta_S(spec, s);
      const Field numeric = numerical_functional_derivative(spec, s, Which::S);
      CHECK(rel_disagreement(analytic, numeric, s.P, 0.0) < 1e-8);
    }
  }
  SUBCASE("quantum: delta_P matches away from the density floor") {
    const auto spec = HamiltonianSpec::quantum(1.1, 0.8, PotentialSpec::none());
    const Field analytic = delta_P(spec, s);
    const Field numeric = numerical_functional_derivative(spec, s, Which::P);
    CHECK(rel_disagreement(analytic, numeric, s.P, 1e-6) < 1e-5);
  }
  SUBCASE("example: Gaussian P with linear S gives -(p/m) dP/dx") {
    const double p = 0.6, m = 1.0;
    const auto spec = HamiltonianSpec::classical(m, PotentialSpec::none());
    const Field ds = delta_S(spec, s);
    // Exact agreement with the numerical functional derivative everywhere.
    const Field numeric = numerical_functional_derivative(spec, s, Which::S);
    CHECK(rel_disagreement(ds, numeric, s.P, 0.0) < 1e-8);
    // Away from the one-sided boundary rows the adjoint form reduces to the
    // plain central-difference divergence, so ds = -(p/m) dP/dx exactly.
    const Field grad_p = gradient(s.P, 0);
    const double scale = max_abs(ds);
    for (int i = 3; i < g->axis(0).count - 3; ++i) {
      CHECK(std::abs(ds[i] + p / m * grad_p[i]) < 1e-12 * scale);
    }
  }
  SUBCASE("linearity: scaling the potential scales delta_P's potential part") {
    const auto one = HamiltonianSpec::classical(1.0, PotentialSpec::harmonic(0, 1.0));
    const auto three = HamiltonianSpec::classical(1.0, PotentialSpec::harmonic(0, 3.0));
    EnsembleState rest = s;
    for (double& v : rest.S.values()) v = 0.0;
    const Field d1 = numerical_functional_derivative(one, rest, Which::P);
    const Field d3 = numerical_functional_derivative(three, rest, Which::P);
    for (std::int64_t i = 0; i < d1.size(); ++i) {
      CHECK(d3[i] == doctest::Approx(3.0 * d1[i]).epsilon(1e-8));
    }
  }
}

TEST_CASE("delta_P pointwise forms") {
  SUBCASE("classical at rest: delta_P equals the potential") {
    const auto g = clamped_1d(64, -4.0, 4.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.7}), 0.0);
    const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::harmonic(0, 2.0));
    const Field dp = delta_P(spec, s);
    for (std::int64_t i = 0; i < dp.size(); ++i) {
      const double x = g->coord(0, static_cast<int>(i));
      CHECK(dp[i] == doctest::Approx(x * x).epsilon(1e-12));
    }
  }
  SUBCASE("uniform quantum density has zero quantum potential") {
    const auto g = periodic_1d(64, 0.0, 2.0);
    const auto spec = HamiltonianSpec::quantum(1.0, 1.0, PotentialSpec::none());
    const Field dp = delta_P(spec, uniform_state(g));
    CHECK(max_abs(dp) < 1e-12);
  }
}

TEST_CASE("quantum_potential") {
  SUBCASE("uniform density gives zero") {
    const auto g = clamped_1d(64, 0.0, 1.0);
    const std::vector<int> axes{0};
    const Field q = quantum_potential(Field(g, 0.37), 1.0, 1.0, axes);
    CHECK(max_abs(q) == 0.0);
  }
  SUBCASE("Gaussian matches the closed form near the peak") {
    const int n = 1024;
    const auto g = clamped_1d(n, -8.0, 8.0);
    const double sigma = 1.0, hbar = 1.0, m = 1.0;
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {sigma}), 0.0);
    const std::vector<int> axes{0};
    const Field q = quantum_potential(s.P, hbar, m, axes);
    // Q(x) = (hbar^2 / 4 m sigma^2) (1 - (x-mu)^2 / (2 sigma^2)).
    double max_err = 0.0, scale = 0.0;
    for (std::int64_t i = 0; i < q.size(); ++i) {
      const double x = g->coord(0, static_cast<int>(i));
      if (std::abs(x) < 3.0 * sigma) {
        const double exact = hbar * hbar / (4.0 * m * sigma * sigma) *
                             (1.0 - x * x / (2.0 * sigma * sigma));
        max_err = std::max(max_err, std::abs(q[i] - exact));
        scale = std::max(scale, std::abs(exact));
      }
    }
    CHECK(max_err / scale < 1e-4);
  }
  SUBCASE("doubling hbar^2 doubles Q") {
    const auto g = clamped_1d(128, -6.0, 6.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.8}), 0.0);
    const std::vector<int> axes{0};
    const Field q1 = quantum_potential(s.P, 1.0, 1.0, axes);
    const Field q2 = quantum_potential(s.P, std::sqrt(2.0), 1.0, axes);
    for (std::int64_t i = 0; i < q1.size(); ++i) {
      CHECK(q2[i] == doctest::Approx(2.0 * q1[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("numerical functional derivative refuses large grids") {
  const auto g = Grid::make({Axis{"q", -1.0, 1.0, 128, Boundary::clamped},
                             Axis{"x", -1.0, 1.0, 128, Boundary::clamped}});
  EnsembleState s = uniform_state(g);
  const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
  CHECK_THROWS_AS(numerical_functional_derivative(spec, s, Which::P), RefusalError);
}

TEST_CASE("homogeneity identity") {
  SUBCASE("classical smooth state: exact to roundoff") {
    const auto g = clamped_1d(96, -5.0, 5.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.4}, {0.8}, {0.9}), 0.0);
    const auto spec = HamiltonianSpec::classical(1.2, PotentialSpec::harmonic(0, 0.6));
    const auto [lhs, rhs] = homogeneity_energy(spec, s);
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::abs(lhs));
  }
  SUBCASE("quantum Gaussian: within 1e-6 (floor-affected tails negligible)") {
    const auto g = clamped_1d(128, -8.0, 8.0);
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}, {0.4}), 0.0);
    const auto spec = HamiltonianSpec::quantum(1.0, 0.9, PotentialSpec::harmonic(0, 0.5));
    const auto [lhs, rhs] = homogeneity_energy(spec, s);
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::abs(lhs));
  }
  SUBCASE("uniform free state: both sides vanish") {
    const auto g = periodic_1d(32, 0.0, 1.0);
    const auto spec = HamiltonianSpec::classical(1.0, PotentialSpec::none());
    const auto [lhs, rhs] = homogeneity_energy(spec, uniform_state(g));
    CHECK(std::abs(lhs) < 1e-14);
    CHECK(std::abs(rhs) < 1e-14);
  }
}

TEST_CASE("measurement coupling enters all three functionals consistently") {
  const auto g = Grid::make({Axis{"q", -3.0, 3.0, 24, Boundary::clamped},
                             Axis{"x", -3.0, 3.0, 24, Boundary::clamped}});
  const EnsembleState s = make_state(
      g, GaussianSpec::single({0.3, -0.2}, {0.6, 0.7}, {0.2, 0.4}), 0.05);
  const auto base = HamiltonianSpec::hybrid(1.0, 2.0, 0.8, PotentialSpec::none(),
                                            {Sector::quantum, Sector::classical});
  // Window [0, 0.1] is active at t = 0.05.
  const auto spec = HamiltonianSpec::with_measurement(base, 0.5, 0, 1, 0.0, 0.1);

  const Field dp = delta_P(spec, s);
  const Field dp_num = numerical_functional_derivative(spec, s, Which::P);
  CHECK(rel_disagreement(dp, dp_num, s.P, 1e-6) < 1e-5);

  const Field ds = delta_S(spec, s);
  const Field ds_num = numerical_functional_derivative(spec, s, Which::S);
  CHECK(rel_disagreement(ds, ds_num, s.P, 0.0) < 1e-8);

  // Outside the window the coupling vanishes.
  EnsembleState late = s;
  late.t = 0.5;
  const auto [lhs, rhs] = homogeneity_energy(spec, late);
  CHECK(evaluate(spec, late) == doctest::Approx(evaluate(base, late)).epsilon(1e-13));
  CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(std::abs(lhs), 1.0));
}

TEST_CASE("sector partition must match the grid") {
  const auto g = clamped_1d(32, -1.0, 1.0);
  const auto spec = HamiltonianSpec::hybrid(1.0, 2.0, 1.0, PotentialSpec::none(),
                                            {Sector::quantum, Sector::classical});
  EnsembleState s = uniform_state(g);
  CHECK_THROWS_AS(evaluate(spec, s), UsageError);
}

TEST_CASE("potential validation") {
  const auto g = clamped_1d(32, -1.0, 1.0);
  CHECK_THROWS_AS(PotentialSpec::harmonic(3, 1.0).evaluate_on(g), ConfigError);
  CHECK_THROWS_AS(PotentialSpec::softened_gravity(1.0, 1.0, 1.0, 0.0, 0, 1), ConfigError);
  CHECK(PotentialSpec::none().separable());
  CHECK(PotentialSpec::harmonic(0, 1.0).separable());
  CHECK_FALSE(PotentialSpec::linear_coupling(0.5, 0, 1).separable());
  CHECK(PotentialSpec::linear_coupling(0.5, 0, 1).couples(0, 1));
  CHECK_FALSE(PotentialSpec::linear_coupling(0.0, 0, 1).couples(0, 1));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "hybens/state.hpp"

using namespace hybens;
using std::numbers::pi;

namespace {

GridPtr grid_1d(int n, double lo, double hi) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::clamped}});
}

GridPtr grid_qx(int nq = 48, int nx = 48) {
  return Grid::make({Axis{"q", -6.0, 6.0, nq, Boundary::clamped},
                     Axis{"x", -6.0, 6.0, nx, Boundary::clamped}});
}

}  // namespace

TEST_CASE("make_state: single Gaussian basics") {
  const auto g = grid_1d(128, -8.0, 8.0);
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}), 0.0);

  CHECK(std::abs(integrate(s.P) - 1.0) < 1e-9);
  for (std::int64_t i = 0; i < s.S.size(); ++i) CHECK(s.S[i] == 0.0);
  // Symmetry about the mean.
  const int n = g->axis(0).count;
  for (int i = 0; i < n / 2; ++i) {
    CHECK(s.P[i] == doctest::Approx(s.P[n - 1 - i]).epsilon(1e-12));
  }
}

TEST_CASE("make_state: phase slope carries momentum") {
  const auto g = grid_1d(128, -8.0, 8.0);
  const double p = 0.75;
  const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}, {p}), 0.0);
  // integral P dS/dx = p (dS/dx is exactly p on a clamped grid).
  const Field grad_s = gradient(s.S, 0);
  const double mom = integrate(hadamard(s.P, grad_s));
  CHECK(mom == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("make_state: two equal peaks split the mass evenly") {
  const auto g = grid_1d(256, -10.0, 10.0);
  GaussianSpec spec;
  spec.peaks.push_back({{-3.0}, {0.5}, {}, 0.5});
  spec.peaks.push_back({{3.0}, {0.5}, {}, 0.5});
  const EnsembleState s = make_state(g, spec, 0.0);

  double lower = 0.0, upper = 0.0;
  for (std::int64_t i = 0; i < s.P.size(); ++i) {
    const double w = g->quadrature_weight(i) * s.P[i];
    (g->coord(0, static_cast<int>(i)) < 0.0 ? lower : upper) += w;
  }
  CHECK(std::abs(lower - 0.5) < 1e-9);
  CHECK(std::abs(upper - 0.5) < 1e-9);
}

TEST_CASE("make_state rejects bad input") {
  const auto g = grid_1d(64, -2.0, 2.0);
  // Peak too close to the edge (needs 4 sigma margin).
  CHECK_THROWS_AS(make_state(g, GaussianSpec::single({1.5}, {0.5}), 0.0), ConfigError);
  // Sigma below two cells.
  CHECK_THROWS_AS(make_state(g, GaussianSpec::single({0.0}, {0.01}), 0.0), ConfigError);
  // Weights must sum to one.
  GaussianSpec spec;
  spec.peaks.push_back({{-0.5}, {0.3}, {}, 0.6});
  spec.peaks.push_back({{0.5}, {0.3}, {}, 0.6});
  CHECK_THROWS_AS(make_state(g, spec, 0.0), ConfigError);
}

TEST_CASE("normalize") {
  const auto g = grid_1d(64, -4.0, 4.0);
  EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {0.6}), 0.0);

  SUBCASE("already normalized state is unchanged within 1e-15") {
    EnsembleState again = normalize(s);
    for (std::int64_t i = 0; i < s.P.size(); ++i) {
      CHECK(std::abs(again.P[i] - s.P[i]) <= 1e-15 * std::abs(s.P[i]));
    }
  }
  SUBCASE("scaling by 7 is undone") {
    EnsembleState scaled = s;
    for (double& v : scaled.P.values()) v *= 7.0;
    const EnsembleState back = normalize(scaled);
    for (std::int64_t i = 0; i < s.P.size(); ++i) {
      CHECK(back.P[i] == doctest::Approx(s.P[i]).epsilon(1e-13));
    }
  }
  SUBCASE("all-zero density is invalid") {
    EnsembleState zero{Field(g, 0.0), Field(g, 0.0), 0.0};
    CHECK_THROWS_AS(normalize(zero), InvalidStateError);
  }
}

TEST_CASE("to_wavefunction") {
  const auto g = grid_1d(128, -8.0, 8.0);
  SUBCASE("zero action gives a real nonnegative wave function") {
    const EnsembleState s = make_state(g, GaussianSpec::single({0.0}, {1.0}), 0.0);
    const ComplexField psi = to_wavefunction(s, 1.0);
    for (std::int64_t i = 0; i < s.P.size(); ++i) {
      CHECK(psi.values[static_cast<std::size_t>(i)].imag() == 0.0);
      CHECK(psi.values[static_cast<std::size_t>(i)].real() >= 0.0);
      CHECK(psi.values[static_cast<std::size_t>(i)].real() ==
            doctest::Approx(std::sqrt(s.P[i])));
    }
  }
  SUBCASE("|psi|^2 = P pointwise and integrates to one") {
    const EnsembleState s =
        make_state(g, GaussianSpec::single({0.5}, {0.8}, {0.4}), 0.0);
    const ComplexField psi = to_wavefunction(s, 0.7);
    Field p2(g);
    for (std::int64_t i = 0; i < s.P.size(); ++i) {
      p2[i] = std::norm(psi.values[static_cast<std::size_t>(i)]);
      CHECK(p2[i] == doctest::Approx(s.P[i]).epsilon(1e-14));
    }
    CHECK(std::abs(integrate(p2) - 1.0) < 1e-9);
  }
  SUBCASE("plane-wave phase packet overlaps the direct construction") {
    const double hbar = 1.0, p = 1.3, sigma = 1.0;
    const EnsembleState s =
        make_state(g, GaussianSpec::single({0.0}, {sigma}, {p}), 0.0);
    const ComplexField psi = to_wavefunction(s, hbar);
    // Oracle: standard Gaussian packet with momentum p, same discrete norm.
    std::vector<std::complex<double>> oracle(static_cast<std::size_t>(g->size()));
    double norm2 = 0.0;
    for (std::int64_t i = 0; i < g->size(); ++i) {
      const double x = g->coord(0, static_cast<int>(i));
      const double amp = std::exp(-x * x / (4.0 * sigma * sigma));
      oracle[static_cast<std::size_t>(i)] =
          std::polar(amp, p * x / hbar);
      norm2 += std::norm(oracle[static_cast<std::size_t>(i)]) * g->quadrature_weight(i);
    }
    for (auto& z : oracle) z /= std::sqrt(norm2);
    std::complex<double> overlap = 0.0;
    for (std::int64_t i = 0; i < g->size(); ++i) {
      overlap += std::conj(oracle[static_cast<std::size_t>(i)]) *
                 psi.values[static_cast<std::size_t>(i)] * g->quadrature_weight(i);
    }
    CHECK(std::abs(overlap) > 1.0 - 1e-10);
  }
}

TEST_CASE("classical_marginal") {
  const auto g = grid_qx();
  SUBCASE("product state returns the classical factor") {
    const EnsembleState s = make_state(
        g, GaussianSpec::single({0.0, 1.0}, {0.8, 0.9}), 0.0);
    const std::vector<int> classical{1};
    const Field marg = classical_marginal(s, classical);
    CHECK(std::abs(integrate(marg) - 1.0) < 1e-9);
    // Compare against the directly constructed classical Gaussian.
    const Grid& cg = *marg.grid();
    double max_rel = 0.0;
    for (int j = 0; j < cg.axis(0).count; ++j) {
      const double x = cg.coord(0, j);
      const double exact = std::exp(-(x - 1.0) * (x - 1.0) / (2.0 * 0.81)) /
                           (0.9 * std::sqrt(2.0 * pi));
      if (exact > 1e-8) {
        max_rel = std::max(max_rel, std::abs(marg[j] - exact) / exact);
      }
    }
    CHECK(max_rel < 1e-6);
  }
  SUBCASE("uniform density has a uniform marginal") {
    EnsembleState s{Field(g, 1.0), Field(g, 0.0), 0.0};
    s = normalize(std::move(s));
    const std::vector<int> classical{1};
    const Field marg = classical_marginal(s, classical);
    for (std::int64_t j = 1; j < marg.size(); ++j) {
      CHECK(marg[j] == doctest::Approx(marg[0]).epsilon(1e-12));
    }
  }
  SUBCASE("bad axis partition is rejected") {
    const EnsembleState s = make_state(
        g, GaussianSpec::single({0.0, 0.0}, {0.8, 0.8}), 0.0);
    const std::vector<int> all{0, 1};
    CHECK_THROWS_AS(classical_marginal(s, all), UsageError);
    const std::vector<int> dup{1, 1};
    CHECK_THROWS_AS(classical_marginal(s, dup), UsageError);
  }
}

TEST_CASE("conditional_wavefunction") {
  const auto g = grid_qx(64, 48);
  const std::vector<int> classical{1};

  SUBCASE("product state: conditional independent of the slice") {
    const EnsembleState s = make_state(
        g, GaussianSpec::single({0.3, -0.5}, {0.7, 0.8}, {0.2, 0.0}), 0.0);
    const std::vector<int> ca{1};
    const std::vector<int> i1{10};
    const std::vector<int> i2{30};
    const ComplexField psi1 = conditional_wavefunction(s, ca, i1, 1.0);
    const ComplexField psi2 = conditional_wavefunction(s, ca, i2, 1.0);
    // Equal up to a q-independent phase: compare |<psi1|psi2>| with 1.
    std::complex<double> overlap = 0.0;
    for (std::int64_t i = 0; i < psi1.grid->size(); ++i) {
      overlap += std::conj(psi1.values[static_cast<std::size_t>(i)]) *
                 psi2.values[static_cast<std::size_t>(i)] *
                 psi1.grid->quadrature_weight(i);
    }
    CHECK(std::abs(overlap) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("conditionals are unit normalized") {
    const EnsembleState s = make_state(
        g, GaussianSpec::single({0.0, 0.0}, {0.7, 0.8}), 0.0);
    const std::vector<int> idx{24};
    const ComplexField psi = conditional_wavefunction(s, classical, idx, 1.0);
    double norm2 = 0.0;
    for (std::int64_t i = 0; i < psi.grid->size(); ++i) {
      norm2 += std::norm(psi.values[static_cast<std::size_t>(i)]) *
               psi.grid->quadrature_weight(i);
    }
    CHECK(std::abs(norm2 - 1.0) < 1e-9);
  }
  SUBCASE("two-peak conditional reproduces the slice's peak ratio") {
    GaussianSpec spec;
    spec.peaks.push_back({{-2.0, 0.0}, {0.6, 0.8}, {}, 0.25});
    spec.peaks.push_back({{2.0, 0.0}, {0.6, 0.8}, {}, 0.75});
    const EnsembleState s = make_state(g, spec, 0.0);
    const std::vector<int> idx{24};
    const ComplexField psi = conditional_wavefunction(s, classical, idx, 1.0);

    // Slice-and-normalize oracle straight from P.
    const Grid& qg = *psi.grid;
    double lower = 0.0, upper = 0.0, lower_o = 0.0, upper_o = 0.0;
    const double mass = slice_mass(s, classical, idx);
    for (int i = 0; i < qg.axis(0).count; ++i) {
      const std::vector<int> joint{i, 24};
      const double pv = s.P[g->flatten(joint)] / mass;
      const double cv = std::norm(psi.values[static_cast<std::size_t>(i)]);
      const double w = qg.quadrature_weight(i);
      if (qg.coord(0, i) < 0.0) {
        lower += cv * w;
        lower_o += pv * w;
      } else {
        upper += cv * w;
        upper_o += pv * w;
      }
    }
    CHECK(lower / upper == doctest::Approx(lower_o / upper_o).epsilon(1e-9));
    CHECK(lower / upper == doctest::Approx(0.25 / 0.75).epsilon(5e-3));
  }
  SUBCASE("empty slice raises the undefined-conditional error") {
    EnsembleState s = make_state(g, GaussianSpec::single({0.0, 0.0}, {0.6, 0.6}), 0.0);
    // Zero out one classical slice entirely.
    const int dead = 2;
    for (int i = 0; i < g->axis(0).count; ++i) {
      const std::vector<int> joint{i, dead};
      s.P[g->flatten(joint)] = 0.0;
    }
    const std::vector<int> idx{dead};
    CHECK_THROWS_AS(conditional_wavefunction(s, classical, idx, 1.0),
                    UndefinedConditionalError);
  }
}

TEST_CASE("round trips and consistency invariants") {
  const auto g = grid_qx();
  GaussianSpec spec;
  spec.peaks.push_back({{-1.0, 0.5}, {0.7, 0.6}, {0.3, -0.1}, 0.5});
  spec.peaks.push_back({{1.5, -0.5}, {0.6, 0.9}, {0.3, -0.1}, 0.5});
  const EnsembleState s = make_state(g, spec, 0.0);

  SUBCASE("|to_wavefunction|^2 recovers P to machine precision") {
    const ComplexField psi = to_wavefunction(s, 0.6);
    for (std::int64_t i = 0; i < s.P.size(); ++i) {
      CHECK(std::norm(psi.values[static_cast<std::size_t>(i)]) ==
            doctest::Approx(s.P[i]).epsilon(1e-13));
    }
  }
  SUBCASE("classical_marginal commutes with normalize") {
    EnsembleState scaled = s;
    for (double& v : scaled.P.values()) v *= 3.0;
    const std::vector<int> classical{1};
    const Field a = classical_marginal(normalize(scaled), classical);
    Field b = classical_marginal(scaled, classical);
    const double total = integrate(b);
    for (double& v : b.values()) v /= total;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
  SUBCASE("conditional reassembly recovers P on supported slices") {
    const std::vector<int> classical{1};
    const Field marg = classical_marginal(s, classical);
    const double eps = kPFloorRelative * max_abs(marg);
    for (int j = 0; j < g->axis(1).count; j += 5) {
      const std::vector<int> idx{j};
      const double mass = slice_mass(s, classical, idx);
      if (!(mass > eps)) continue;
      const ComplexField psi = conditional_wavefunction(s, classical, idx, 1.0);
      for (int i = 0; i < g->axis(0).count; ++i) {
        const std::vector<int> joint{i, j};
        const double rebuilt = std::norm(psi.values[static_cast<std::size_t>(i)]) * mass;
        const double original = s.P[g->flatten(joint)];
        if (original > 1e-12 * max_abs(s.P)) {
          CHECK(rebuilt == doctest::Approx(original).epsilon(1e-10));
        }
      }
    }
  }
}

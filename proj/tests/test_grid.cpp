#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hybens/field_io.hpp"
#include "hybens/grid.hpp"

using namespace hybens;
using std::numbers::pi;

namespace {

GridPtr periodic_1d(int n, double lo = 0.0, double hi = 1.0) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::periodic}});
}

GridPtr clamped_1d(int n, double lo = -1.0, double hi = 1.0) {
  return Grid::make({Axis{"x", lo, hi, n, Boundary::clamped}});
}

Field fill(const GridPtr& g, const std::function<double(std::span<const double>)>& fn) {
  return evaluate_on_grid(g, fn);
}

}  // namespace

TEST_CASE("axis and grid validation") {
  CHECK_THROWS_AS(Grid::make({Axis{"x", 1.0, 0.0, 16, Boundary::clamped}}), ConfigError);
  CHECK_THROWS_AS(Grid::make({Axis{"x", 0.0, 1.0, 4, Boundary::clamped}}), ConfigError);
  CHECK_THROWS_AS(Grid::make({}), ConfigError);
  CHECK_THROWS_AS(Grid::make(std::vector<Axis>(5, Axis{"x", 0.0, 1.0, 8, Boundary::clamped})),
                  ConfigError);

  const auto g = Grid::make({Axis{"a", 0.0, 1.0, 8, Boundary::periodic},
                             Axis{"b", 0.0, 2.0, 16, Boundary::clamped}});
  CHECK(g->size() == 128);
  CHECK(g->axis(0).spacing() == doctest::Approx(1.0 / 8));
  CHECK(g->axis(1).spacing() == doctest::Approx(2.0 / 15));
  CHECK(g->cell_volume() == doctest::Approx((1.0 / 8) * (2.0 / 15)));
  CHECK_THROWS_AS(g->axis(2), UsageError);
}

TEST_CASE("gradient of a constant field is identically zero") {
  for (auto boundary : {Boundary::periodic, Boundary::clamped}) {
    const auto g = Grid::make({Axis{"x", -2.0, 3.0, 32, boundary}});
    const Field c(g, 4.25);
    const Field gr = gradient(c, 0);
    for (std::int64_t i = 0; i < gr.size(); ++i) CHECK(gr[i] == 0.0);
  }
}

TEST_CASE("gradient is exact on linear fields over clamped axes") {
  const auto g = clamped_1d(32, -1.0, 2.0);
  const double a = 1.7;
  const Field f = fill(g, [a](std::span<const double> x) { return a * x[0] + 0.3; });
  const Field gr = gradient(f, 0);
  for (std::int64_t i = 0; i < gr.size(); ++i) {
    CHECK(gr[i] == doctest::Approx(a).epsilon(1e-13));
  }
}

TEST_CASE("gradient of sine matches the analytic derivative within the Taylor bound") {
  const int n = 256;
  const double L = 2.0;
  const auto g = periodic_1d(n, 0.0, L);
  const double k = 2.0 * pi / L;
  const Field f = fill(g, [k](std::span<const double> x) { return std::sin(k * x[0]); });
  const Field gr = gradient(f, 0);
  const double h = g->axis(0).spacing();
  double max_err = 0.0;
  for (int i = 0; i < n; ++i) {
    const double exact = k * std::cos(k * g->coord(0, i));
    max_err = std::max(max_err, std::abs(gr[i] - exact));
  }
  // Central differences: error = (h^2/6) f''' + O(h^4), |f'''| <= k^3.
  CHECK(max_err < k * k * k * h * h / 6.0 * 1.1);
  CHECK(max_err > 0.0);
}

TEST_CASE("divergence basics") {
  const auto g = Grid::make({Axis{"x", -1.0, 1.0, 24, Boundary::clamped},
                             Axis{"y", -1.0, 1.0, 24, Boundary::clamped}});
  SUBCASE("zero components give a zero field") {
    std::vector<Field> comp{Field(g, 0.0), Field(g, 0.0)};
    const std::vector<int> axes{0, 1};
    const Field d = divergence(comp, axes);
    for (std::int64_t i = 0; i < d.size(); ++i) CHECK(d[i] == 0.0);
  }
  SUBCASE("single-axis divergence equals the gradient") {
    const Field f = fill(g, [](std::span<const double> x) {
      return std::exp(-x[0] * x[0] - 0.5 * x[1] * x[1]);
    });
    const std::vector<Field> comp{f};
    const std::vector<int> axes{0};
    const Field d = divergence(comp, axes);
    const Field gr = gradient(f, 0);
    for (std::int64_t i = 0; i < d.size(); ++i) CHECK(d[i] == gr[i]);
  }
  SUBCASE("rotational field is divergence free") {
    const Field fx = fill(g, [](std::span<const double> x) { return -x[1]; });
    const Field fy = fill(g, [](std::span<const double> x) { return x[0]; });
    const std::vector<Field> comp{fx, fy};
    const std::vector<int> axes{0, 1};
    const Field d = divergence(comp, axes);
    for (std::int64_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i]) < 1e-12);
  }
  SUBCASE("mismatched component and axis lists are rejected") {
    const std::vector<Field> comp{Field(g, 0.0)};
    const std::vector<int> axes{0, 1};
    CHECK_THROWS_AS(divergence(comp, axes), UsageError);
  }
}

TEST_CASE("laplacian basics") {
  SUBCASE("constant gives zero") {
    const auto g = clamped_1d(16);
    const Field lap = laplacian(Field(g, 3.0));
    for (std::int64_t i = 0; i < lap.size(); ++i) CHECK(lap[i] == 0.0);
  }
  SUBCASE("x^2 gives exactly 2 including the one-sided ends") {
    const auto g = clamped_1d(16, 0.0, 3.0);
    const Field f = fill(g, [](std::span<const double> x) { return x[0] * x[0]; });
    const Field lap = laplacian(f);
    for (std::int64_t i = 0; i < lap.size(); ++i) {
      CHECK(lap[i] == doctest::Approx(2.0).epsilon(1e-11));
    }
  }
  SUBCASE("2D Gaussian matches the analytic laplacian") {
    const int n = 128;
    const auto g = Grid::make({Axis{"x", -3.0, 3.0, n, Boundary::clamped},
                               Axis{"y", -3.0, 3.0, n, Boundary::clamped}});
    const double s = 24.0 * g->axis(0).spacing();  // sigma spans >= 10 cells
    const Field f = fill(g, [s](std::span<const double> x) {
      return std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * s * s));
    });
    const Field lap = laplacian(f);
    double max_err = 0.0, max_ref = 0.0;
    for (std::int64_t i = 0; i < lap.size(); ++i) {
      const auto idx = g->unflatten(i);
      const double x = g->coord(0, idx[0]);
      const double y = g->coord(1, idx[1]);
      const double r2 = x * x + y * y;
      const double exact =
          std::exp(-r2 / (2.0 * s * s)) * (r2 / (s * s) - 2.0) / (s * s);
      max_err = std::max(max_err, std::abs(lap[i] - exact));
      max_ref = std::max(max_ref, std::abs(exact));
    }
    CHECK(max_err / max_ref < 1e-3);
  }
}

TEST_CASE("integrate") {
  SUBCASE("constant over the domain gives the measure") {
    const auto g = Grid::make({Axis{"x", 0.0, 2.0, 16, Boundary::periodic},
                               Axis{"y", 0.0, 3.0, 32, Boundary::clamped}});
    CHECK(integrate(Field(g, 1.0)) == doctest::Approx(6.0).epsilon(1e-14));
  }
  SUBCASE("normalized Gaussian integrates to one") {
    const int n = 256;
    const auto g = clamped_1d(n, -8.0, 8.0);
    const double s = 1.0;  // sigma = 16 cells, domain = +-8 sigma
    const Field f = fill(g, [s](std::span<const double> x) {
      return std::exp(-x[0] * x[0] / (2.0 * s * s)) / (s * std::sqrt(2.0 * pi));
    });
    CHECK(std::abs(integrate(f) - 1.0) < 1e-9);
  }
  SUBCASE("linearity") {
    const auto g = clamped_1d(64);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field f(g), h(g), sum(g);
    for (std::int64_t i = 0; i < f.size(); ++i) {
      f[i] = u(rng);
      h[i] = u(rng);
      sum[i] = f[i] + h[i];
    }
    CHECK(integrate(sum) ==
          doctest::Approx(integrate(f) + integrate(h)).epsilon(1e-14));
  }
  SUBCASE("discrete divergence theorem on periodic grids") {
    const auto g = periodic_1d(128, 0.0, 2.0);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field f(g);
    for (std::int64_t i = 0; i < f.size(); ++i) f[i] = u(rng);
    const double total = integrate(gradient(f, 0));
    CHECK(std::abs(total) < 1e-12 * max_abs(f));
  }
}

TEST_CASE("stencils converge at second order") {
  auto max_gradient_error = [](int n) {
    const auto g = periodic_1d(n, 0.0, 2.0);
    const double k = 2.0 * pi / 2.0;
    const Field f = evaluate_on_grid(
        g, [k](std::span<const double> x) { return std::sin(k * x[0]); });
    const Field gr = gradient(f, 0);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      err = std::max(err, std::abs(gr[i] - k * std::cos(k * g->coord(0, i))));
    }
    return err;
  };
  const double coarse = max_gradient_error(64);
  const double fine = max_gradient_error(128);
  CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("shift_interpolate") {
  SUBCASE("zero displacement is the identity, bit-exact") {
    const auto g = clamped_1d(64);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field f(g);
    for (std::int64_t i = 0; i < f.size(); ++i) f[i] = u(rng);
    const std::vector<double> disp{0.0};
    const Field shifted = shift_interpolate(f, disp, SampleMode::density);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(shifted[i] == f[i]);
  }
  SUBCASE("one-cell displacement on a periodic axis permutes values exactly") {
    const int n = 32;
    const auto g = periodic_1d(n, 0.0, 1.0);
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field f(g);
    for (std::int64_t i = 0; i < f.size(); ++i) f[i] = u(rng);
    const std::vector<double> disp{g->axis(0).spacing()};
    const Field shifted = shift_interpolate(f, disp, SampleMode::density);
    for (int i = 0; i < n; ++i) {
      CHECK(shifted[i] == f[(i + 1) % n]);
    }
  }
  SUBCASE("half-cell shift of a smooth Gaussian matches the analytic shift") {
    const int n = 256;
    const auto g = clamped_1d(n, -4.0, 4.0);
    const double h = g->axis(0).spacing();
    const double s = 12.0 * h;
    auto gauss = [s](double x) { return std::exp(-x * x / (2.0 * s * s)); };
    const Field f = fill(g, [&](std::span<const double> x) { return gauss(x[0]); });
    const double d = 0.5 * h;
    const std::vector<double> disp{-d};  // sample at x - d: the +d translate
    const Field shifted = shift_interpolate(f, disp, SampleMode::density);
    double max_err = 0.0;
    for (int i = 4; i < n - 4; ++i) {
      max_err = std::max(max_err, std::abs(shifted[i] - gauss(g->coord(0, i) - d)));
    }
    CHECK(max_err < 1e-4);
  }
  SUBCASE("density mode zeroes out-of-domain samples, action mode clamps") {
    const auto g = clamped_1d(16, 0.0, 1.0);
    const Field f = fill(g, [](std::span<const double> x) { return 1.0 + x[0]; });
    const std::vector<double> disp{-0.5};  // samples below the domain near the left edge
    const Field dens = shift_interpolate(f, disp, SampleMode::density);
    const Field act = shift_interpolate(f, disp, SampleMode::action);
    CHECK(dens[0] == 0.0);
    CHECK(act[0] == doctest::Approx(1.0));  // nearest edge value
  }
}

TEST_CASE("field CSV round trip is bit exact") {
  const auto g = Grid::make({Axis{"q", -1.5, 2.5, 8, Boundary::periodic},
                             Axis{"x", 0.0, 1.0, 9, Boundary::clamped}});
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(g);
  for (std::int64_t i = 0; i < f.size(); ++i) f[i] = u(rng) * std::pow(10.0, i % 7 - 3);

  std::stringstream ss;
  write_field_csv(ss, f);
  const Field back = read_field_csv(ss);
  REQUIRE(back.grid()->same_as(*g));
  for (std::int64_t i = 0; i < f.size(); ++i) CHECK(back[i] == f[i]);

  // And the header carries the axis metadata.
  std::stringstream ss2;
  write_field_csv(ss2, f);
  std::string line;
  std::getline(ss2, line);
  CHECK(line.find("# axis0=q min=-1.5 max=2.5 count=8 boundary=p") == 0);
}

#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hybens/errors.hpp"

namespace hybens {

enum class Boundary { periodic, clamped };

// One direction of a rectangular configuration-space lattice. A periodic
// axis identifies max with min and has spacing (max-min)/count; a clamped
// axis includes both endpoints and has spacing (max-min)/(count-1).
struct Axis {
  std::string name = "x";
  double min = 0.0;
  double max = 1.0;
  int count = 8;
  Boundary boundary = Boundary::clamped;

  double spacing() const {
    return boundary == Boundary::periodic ? (max - min) / count
                                          : (max - min) / (count - 1);
  }
  double length() const { return max - min; }
  double coord(int i) const { return min + i * spacing(); }

  void validate() const;  // throws ConfigError on bad bounds/count
};

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

// Product lattice of 1 to 4 axes. Storage is row-major: the last axis is
// the fastest-varying index.
class Grid {
 public:
  static GridPtr make(std::vector<Axis> axes);

  int rank() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int a) const { return axes_[check_axis(a)]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::int64_t size() const { return size_; }
  std::int64_t stride(int a) const { return strides_[check_axis(a)]; }
  double cell_volume() const { return cell_volume_; }

  // Trapezoid end-point factor of axis a at index i: 1/2 at the two ends of
  // a clamped axis, otherwise 1.
  double axis_weight(int a, int i) const {
    const Axis& ax = axes_[a];
    if (ax.boundary == Boundary::clamped && (i == 0 || i == ax.count - 1)) {
      return 0.5;
    }
    return 1.0;
  }

  // Quadrature weight of one lattice point: cell volume times the product
  // of axis factors. Riemann sum with these weights is the trapezoid rule
  // along clamped axes and the periodic rectangle rule along periodic ones.
  double quadrature_weight(std::int64_t flat) const;

  std::array<int, 4> unflatten(std::int64_t flat) const;
  std::int64_t flatten(std::span<const int> idx) const;
  double coord(int a, int i) const { return axes_[a].coord(i); }

  bool same_as(const Grid& other) const;

 private:
  explicit Grid(std::vector<Axis> axes);
  int check_axis(int a) const {
    if (a < 0 || a >= rank()) {
      throw UsageError("axis index " + std::to_string(a) +
                       " out of range for rank-" + std::to_string(rank()) +
                       " grid");
    }
    return a;
  }

  std::vector<Axis> axes_;
  std::array<std::int64_t, 4> strides_{};
  std::int64_t size_ = 0;
  double cell_volume_ = 1.0;
};

// Real scalar samples over a grid. Fields are plain values; operations on
// them return new fields and never mutate inputs.
class Field {
 public:
  Field() = default;
  explicit Field(GridPtr grid, double fill = 0.0);
  Field(GridPtr grid, std::vector<double> values);

  const GridPtr& grid() const { return grid_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }
  double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

struct ComplexField {
  GridPtr grid;
  std::vector<std::complex<double>> values;
};

// ---- Discrete differential operators (second order) ----------------------
//
// Interior points use central differences. Periodic axes wrap. Clamped axes
// use one-sided second-order stencils at the ends, so linear fields
// differentiate exactly everywhere and quadratics under laplacian().

Field gradient(const Field& f, int axis);
Field divergence(std::span<const Field> components, std::span<const int> axes);
Field laplacian(const Field& f);

// Negative adjoint divergence: for flux F along `axis` returns the field
//   out_j = (1/w_j) sum_i w_i G[i][j] F_i
// where G is the gradient stencil matrix and w the quadrature weights. On a
// periodic axis this is exactly -d(F)/dx with the same central stencil; on
// clamped axes the boundary rows are the exact discrete adjoint. Summing a
// field times this operator integrates by parts with zero remainder, which
// is what makes the evolution conserve total probability to roundoff.
Field adjoint_divergence_term(const Field& flux, int axis);

double integrate(const Field& f);

// ---- Interpolation --------------------------------------------------------

enum class SampleMode {
  density,  // out-of-domain samples on clamped axes read as 0
  action,   // out-of-domain samples clamp to the nearest edge value
};

// Samples f at per-point index-space positions frac_idx[axis][point] using
// tensor-product Catmull-Rom interpolation. Periodic axes wrap; clamped
// axes replicate edge values for stencil taps and treat samples strictly
// outside [0, count-1] per the mode.
Field sample_at(const Field& f,
                const std::vector<std::vector<double>>& frac_idx,
                SampleMode mode);

// Same, but the sample positions enumerate the points of `out_grid` (one
// fractional source index array per source axis, out_grid->size() entries).
Field sample_onto(const Field& f, GridPtr out_grid,
                  const std::vector<std::vector<double>>& frac_idx,
                  SampleMode mode);

// Samples f at position (coordinate + displacement). Displacements are
// given per axis as fields on the same grid; a null entry means zero
// displacement along that axis. Zero displacement reproduces f bit-exactly.
Field shift_interpolate(const Field& f,
                        std::span<const Field* const> displacement,
                        SampleMode mode);

// Constant per-axis displacement convenience overload.
Field shift_interpolate(const Field& f, std::span<const double> displacement,
                        SampleMode mode);

// ---- Small field helpers ---------------------------------------------------

Field hadamard(const Field& a, const Field& b);  // pointwise product
Field linear_combination(double ca, const Field& a, double cb, const Field& b);
double max_abs(const Field& f);
bool all_finite(const Field& f);

// Fills a field with fn evaluated at each point's coordinates.
Field coordinate_field(const GridPtr& grid, int axis);
Field evaluate_on_grid(const GridPtr& grid,
                       const std::function<double(std::span<const double>)>& fn);

// Iterates all 1D lines along `axis`, calling fn(base, stride, count).
void for_each_line(const Grid& g, int axis,
                   const std::function<void(std::int64_t, std::int64_t, int)>& fn);

}  // namespace hybens

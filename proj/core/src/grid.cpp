#include "hybens/grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "hybens/parallel.hpp"

namespace hybens {

void Axis::validate() const {
  if (!(max > min)) {
    throw ConfigError("axis '" + name + "': max must exceed min");
  }
  if (count < 8) {
    throw ConfigError("axis '" + name + "': count must be at least 8");
  }
  if (!std::isfinite(min) || !std::isfinite(max)) {
    throw ConfigError("axis '" + name + "': non-finite bounds");
  }
  if (!(spacing() > 0.0)) {
    throw ConfigError("axis '" + name + "': non-positive spacing");
  }
}

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  size_ = 1;
  cell_volume_ = 1.0;
  for (const Axis& ax : axes_) {
    size_ *= ax.count;
    cell_volume_ *= ax.spacing();
  }
  // Row-major: stride of the last axis is 1.
  std::int64_t s = 1;
  for (int a = rank() - 1; a >= 0; --a) {
    strides_[static_cast<std::size_t>(a)] = s;
    s *= axes_[static_cast<std::size_t>(a)].count;
  }
}

GridPtr Grid::make(std::vector<Axis> axes) {
  if (axes.empty() || axes.size() > 4) {
    throw ConfigError("grid must have between 1 and 4 axes");
  }
  for (const Axis& ax : axes) ax.validate();
  return GridPtr(new Grid(std::move(axes)));
}

double Grid::quadrature_weight(std::int64_t flat) const {
  double w = cell_volume_;
  for (int a = 0; a < rank(); ++a) {
    const Axis& ax = axes_[static_cast<std::size_t>(a)];
    if (ax.boundary != Boundary::clamped) continue;
    const int i = static_cast<int>((flat / strides_[static_cast<std::size_t>(a)]) % ax.count);
    if (i == 0 || i == ax.count - 1) w *= 0.5;
  }
  return w;
}

std::array<int, 4> Grid::unflatten(std::int64_t flat) const {
  std::array<int, 4> idx{};
  for (int a = 0; a < rank(); ++a) {
    idx[static_cast<std::size_t>(a)] = static_cast<int>(
        (flat / strides_[static_cast<std::size_t>(a)]) % axes_[static_cast<std::size_t>(a)].count);
  }
  return idx;
}

std::int64_t Grid::flatten(std::span<const int> idx) const {
  std::int64_t flat = 0;
  for (int a = 0; a < rank(); ++a) {
    flat += static_cast<std::int64_t>(idx[static_cast<std::size_t>(a)]) *
            strides_[static_cast<std::size_t>(a)];
  }
  return flat;
}

bool Grid::same_as(const Grid& other) const {
  if (rank() != other.rank()) return false;
  for (int a = 0; a < rank(); ++a) {
    const Axis& x = axes_[static_cast<std::size_t>(a)];
    const Axis& y = other.axes_[static_cast<std::size_t>(a)];
    if (x.min != y.min || x.max != y.max || x.count != y.count ||
        x.boundary != y.boundary) {
      return false;
    }
  }
  return true;
}

Field::Field(GridPtr grid, double fill)
    : grid_(std::move(grid)),
      values_(static_cast<std::size_t>(grid_->size()), fill) {}

Field::Field(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (static_cast<std::int64_t>(values_.size()) != grid_->size()) {
    throw UsageError("field value count does not match grid size");
  }
}

void for_each_line(const Grid& g, int axis,
                   const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  const std::int64_t stride = g.stride(axis);
  const int n = g.axis(axis).count;
  const std::int64_t lines = g.size() / n;
  for (std::int64_t line = 0; line < lines; ++line) {
    const std::int64_t base = (line / stride) * stride * n + line % stride;
    fn(base, stride, n);
  }
}

namespace {

// Runs kernel(base, stride, n) over every line along `axis`, in parallel.
template <class Kernel>
void lines_parallel(const Grid& g, int axis, const Kernel& kernel) {
  const std::int64_t stride = g.stride(axis);
  const int n = g.axis(axis).count;
  const std::int64_t lines = g.size() / n;
  parallel_for(static_cast<std::size_t>(lines), [&](std::size_t b, std::size_t e) {
    for (std::size_t line = b; line < e; ++line) {
      const std::int64_t l = static_cast<std::int64_t>(line);
      const std::int64_t base = (l / stride) * stride * n + l % stride;
      kernel(base, stride, n);
    }
  });
}

}  // namespace

Field gradient(const Field& f, int axis) {
  const Grid& g = *f.grid();
  const Axis& ax = g.axis(axis);
  const double inv2h = 1.0 / (2.0 * ax.spacing());
  Field out(f.grid());
  const double* src = f.values().data();
  double* dst = out.values().data();

  if (ax.boundary == Boundary::periodic) {
    lines_parallel(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
      for (int i = 0; i < n; ++i) {
        const int ip = i + 1 < n ? i + 1 : 0;
        const int im = i > 0 ? i - 1 : n - 1;
        dst[base + i * s] = (src[base + ip * s] - src[base + im * s]) * inv2h;
      }
    });
  } else {
    lines_parallel(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
      dst[base] = (-3.0 * src[base] + 4.0 * src[base + s] - src[base + 2 * s]) * inv2h;
      for (int i = 1; i + 1 < n; ++i) {
        dst[base + i * s] = (src[base + (i + 1) * s] - src[base + (i - 1) * s]) * inv2h;
      }
      const std::int64_t last = base + static_cast<std::int64_t>(n - 1) * s;
      dst[last] = (3.0 * src[last] - 4.0 * src[last - s] + src[last - 2 * s]) * inv2h;
    });
  }
  return out;
}

Field divergence(std::span<const Field> components, std::span<const int> axes) {
  if (components.size() != axes.size() || components.empty()) {
    throw UsageError("divergence: one component field per axis required");
  }
  const Grid& g = *components[0].grid();
  for (const Field& c : components) {
    if (!c.grid()->same_as(g)) {
      throw UsageError("divergence: components live on different grids");
    }
  }
  Field out = gradient(components[0], axes[0]);
  for (std::size_t k = 1; k < components.size(); ++k) {
    Field gk = gradient(components[k], axes[k]);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += gk[i];
  }
  return out;
}

Field laplacian(const Field& f) {
  const Grid& g = *f.grid();
  Field out(f.grid());
  double* dst = out.values().data();
  const double* src = f.values().data();

  for (int a = 0; a < g.rank(); ++a) {
    const Axis& ax = g.axis(a);
    const double invh2 = 1.0 / (ax.spacing() * ax.spacing());
    if (ax.boundary == Boundary::periodic) {
      lines_parallel(g, a, [&](std::int64_t base, std::int64_t s, int n) {
        for (int i = 0; i < n; ++i) {
          const int ip = i + 1 < n ? i + 1 : 0;
          const int im = i > 0 ? i - 1 : n - 1;
          dst[base + i * s] += (src[base + ip * s] - 2.0 * src[base + i * s] +
                                src[base + im * s]) * invh2;
        }
      });
    } else {
      lines_parallel(g, a, [&](std::int64_t base, std::int64_t s, int n) {
        // One-sided second-order second derivative at the ends.
        dst[base] += (2.0 * src[base] - 5.0 * src[base + s] +
                      4.0 * src[base + 2 * s] - src[base + 3 * s]) * invh2;
        for (int i = 1; i + 1 < n; ++i) {
          dst[base + i * s] += (src[base + (i + 1) * s] - 2.0 * src[base + i * s] +
                                src[base + (i - 1) * s]) * invh2;
        }
        const std::int64_t last = base + static_cast<std::int64_t>(n - 1) * s;
        dst[last] += (2.0 * src[last] - 5.0 * src[last - s] +
                      4.0 * src[last - 2 * s] - src[last - 3 * s]) * invh2;
      });
    }
  }
  return out;
}

Field adjoint_divergence_term(const Field& flux, int axis) {
  const Grid& g = *flux.grid();
  const Axis& ax = g.axis(axis);
  const double inv2h = 1.0 / (2.0 * ax.spacing());
  Field out(flux.grid());
  const double* src = flux.values().data();
  double* dst = out.values().data();

  if (ax.boundary == Boundary::periodic) {
    // Central stencil is antisymmetric under the uniform weights, so the
    // adjoint form reduces to -dF/dx with the same stencil.
    lines_parallel(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
      for (int i = 0; i < n; ++i) {
        const int ip = i + 1 < n ? i + 1 : 0;
        const int im = i > 0 ? i - 1 : n - 1;
        dst[base + i * s] = (src[base + im * s] - src[base + ip * s]) * inv2h;
      }
    });
    return out;
  }

  // Clamped: scatter w_i * G[i][j] * F_i into j, then divide by w_j. Only
  // the along-axis trapezoid factor matters; volume and transverse factors
  // cancel between the two weights.
  lines_parallel(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    auto wt = [n](int i) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; };
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    {  // row 0: (-3 f0 + 4 f1 - f2) / 2h
      const double v = wt(0) * src[base] * inv2h;
      acc[0] += -3.0 * v;
      acc[1] += 4.0 * v;
      acc[2] += -1.0 * v;
    }
    for (int i = 1; i + 1 < n; ++i) {
      const double v = wt(i) * src[base + i * s] * inv2h;
      acc[static_cast<std::size_t>(i + 1)] += v;
      acc[static_cast<std::size_t>(i - 1)] -= v;
    }
    {  // row n-1: (3 f_{n-1} - 4 f_{n-2} + f_{n-3}) / 2h
      const double v = wt(n - 1) * src[base + static_cast<std::int64_t>(n - 1) * s] * inv2h;
      acc[static_cast<std::size_t>(n - 1)] += 3.0 * v;
      acc[static_cast<std::size_t>(n - 2)] += -4.0 * v;
      acc[static_cast<std::size_t>(n - 3)] += 1.0 * v;
    }
    for (int j = 0; j < n; ++j) {
      dst[base + j * s] = acc[static_cast<std::size_t>(j)] / wt(j);
    }
  });
  return out;
}

double integrate(const Field& f) {
  const Grid& g = *f.grid();
  bool any_clamped = false;
  for (const Axis& ax : g.axes()) {
    if (ax.boundary == Boundary::clamped) any_clamped = true;
  }
  const double* v = f.values().data();
  const std::int64_t n = f.size();
  double sum = 0.0;
  if (!any_clamped) {
    for (std::int64_t i = 0; i < n; ++i) sum += v[i];
    return sum * g.cell_volume();
  }
  for (std::int64_t i = 0; i < n; ++i) {
    sum += v[i] * g.quadrature_weight(i);
  }
  return sum;
}

namespace {

inline void catmull_rom_weights(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

}  // namespace

Field sample_at(const Field& f,
                const std::vector<std::vector<double>>& frac_idx,
                SampleMode mode) {
  return sample_onto(f, f.grid(), frac_idx, mode);
}

Field sample_onto(const Field& f, GridPtr out_grid,
                  const std::vector<std::vector<double>>& frac_idx,
                  SampleMode mode) {
  const Grid& g = *f.grid();
  const int rank = g.rank();
  if (static_cast<int>(frac_idx.size()) != rank) {
    throw UsageError("sample_onto: one fractional-index array per source axis required");
  }
  for (const auto& u : frac_idx) {
    if (static_cast<std::int64_t>(u.size()) != out_grid->size()) {
      throw UsageError("sample_onto: fractional-index array has wrong length");
    }
  }

  Field out(std::move(out_grid));
  const double* src = f.values().data();
  double* dst = out.values().data();

  parallel_for(static_cast<std::size_t>(out.size()), [&](std::size_t pb, std::size_t pe) {
    int tap[4][4];
    double w[4][4];
    for (std::size_t p = pb; p < pe; ++p) {
      bool outside_zero = false;
      for (int a = 0; a < rank; ++a) {
        const Axis& ax = g.axis(a);
        const int n = ax.count;
        double u = frac_idx[static_cast<std::size_t>(a)][p];
        if (ax.boundary == Boundary::periodic) {
          u = std::fmod(u, static_cast<double>(n));
          if (u < 0.0) u += static_cast<double>(n);
          const int base = static_cast<int>(std::floor(u));
          const double t = u - base;
          catmull_rom_weights(t, w[a]);
          for (int k = 0; k < 4; ++k) {
            int idx = (base - 1 + k) % n;
            if (idx < 0) idx += n;
            tap[a][k] = idx;
          }
        } else {
          if (u < 0.0 || u > static_cast<double>(n - 1)) {
            if (mode == SampleMode::density) {
              outside_zero = true;
              break;
            }
            u = std::clamp(u, 0.0, static_cast<double>(n - 1));
          }
          int base = static_cast<int>(std::floor(u));
          if (base > n - 2) base = n - 2;
          const double t = u - base;
          catmull_rom_weights(t, w[a]);
          for (int k = 0; k < 4; ++k) {
            tap[a][k] = std::clamp(base - 1 + k, 0, n - 1);
          }
        }
      }
      if (outside_zero) {
        dst[p] = 0.0;
        continue;
      }
      // Tensor-product gather over 4^rank taps.
      double acc = 0.0;
      int combo[4] = {0, 0, 0, 0};
      const int total = 1 << (2 * rank);  // 4^rank
      for (int c = 0; c < total; ++c) {
        double weight = 1.0;
        std::int64_t flat = 0;
        for (int a = 0; a < rank; ++a) {
          const int k = combo[a];
          weight *= w[a][k];
          flat += static_cast<std::int64_t>(tap[a][k]) * g.stride(a);
        }
        acc += weight * src[flat];
        for (int a = rank - 1; a >= 0; --a) {
          if (++combo[a] < 4) break;
          combo[a] = 0;
        }
      }
      dst[p] = acc;
    }
  });
  return out;
}

Field shift_interpolate(const Field& f,
                        std::span<const Field* const> displacement,
                        SampleMode mode) {
  const Grid& g = *f.grid();
  const int rank = g.rank();
  if (static_cast<int>(displacement.size()) != rank) {
    throw UsageError("shift_interpolate: one displacement entry per axis required");
  }
  bool all_null = true;
  for (const Field* d : displacement) {
    if (d != nullptr) {
      all_null = false;
      if (!d->grid()->same_as(g)) {
        throw UsageError("shift_interpolate: displacement on a different grid");
      }
      if (!all_finite(*d)) {
        throw UsageError("shift_interpolate: non-finite displacement");
      }
    }
  }
  if (all_null) return f;

  std::vector<std::vector<double>> frac(static_cast<std::size_t>(rank));
  for (int a = 0; a < rank; ++a) {
    auto& u = frac[static_cast<std::size_t>(a)];
    u.resize(static_cast<std::size_t>(g.size()));
    const double inv_h = 1.0 / g.axis(a).spacing();
    const std::int64_t stride = g.stride(a);
    const int n = g.axis(a).count;
    const Field* d = displacement[static_cast<std::size_t>(a)];
    for (std::int64_t p = 0; p < g.size(); ++p) {
      const int i = static_cast<int>((p / stride) % n);
      u[static_cast<std::size_t>(p)] =
          d ? static_cast<double>(i) + (*d)[p] * inv_h : static_cast<double>(i);
    }
  }
  return sample_at(f, frac, mode);
}

Field shift_interpolate(const Field& f, std::span<const double> displacement,
                        SampleMode mode) {
  const Grid& g = *f.grid();
  if (static_cast<int>(displacement.size()) != g.rank()) {
    throw UsageError("shift_interpolate: one displacement per axis required");
  }
  std::vector<Field> fields;
  std::vector<const Field*> ptrs(displacement.size(), nullptr);
  fields.reserve(displacement.size());
  for (std::size_t a = 0; a < displacement.size(); ++a) {
    if (displacement[a] != 0.0) {
      fields.emplace_back(f.grid(), displacement[a]);
      ptrs[a] = &fields.back();
    }
  }
  return shift_interpolate(f, ptrs, mode);
}

Field hadamard(const Field& a, const Field& b) {
  Field out(a.grid());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Field linear_combination(double ca, const Field& a, double cb, const Field& b) {
  Field out(a.grid());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
  return out;
}

double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Field& f) {
  for (double v : f.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Field coordinate_field(const GridPtr& grid, int axis) {
  const Grid& g = *grid;
  const Axis& ax = g.axis(axis);
  const std::int64_t stride = g.stride(axis);
  Field out(grid);
  for (std::int64_t p = 0; p < g.size(); ++p) {
    out[p] = ax.coord(static_cast<int>((p / stride) % ax.count));
  }
  return out;
}

Field evaluate_on_grid(const GridPtr& grid,
                       const std::function<double(std::span<const double>)>& fn) {
  const Grid& g = *grid;
  Field out(grid);
  std::array<double, 4> coords{};
  for (std::int64_t p = 0; p < g.size(); ++p) {
    const auto idx = g.unflatten(p);
    for (int a = 0; a < g.rank(); ++a) {
      coords[static_cast<std::size_t>(a)] = g.coord(a, idx[static_cast<std::size_t>(a)]);
    }
    out[p] = fn(std::span<const double>(coords.data(), static_cast<std::size_t>(g.rank())));
  }
  return out;
}

}  // namespace hybens

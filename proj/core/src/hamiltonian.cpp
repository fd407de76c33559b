#include "hybens/hamiltonian.hpp"

#include <algorithm>
#include <cmath>

namespace hybens {

// ---- PotentialSpec ---------------------------------------------------------

PotentialSpec PotentialSpec::from_terms(std::vector<PotentialTerm> terms) {
  PotentialSpec spec;
  spec.terms_ = std::move(terms);
  return spec;
}

PotentialSpec PotentialSpec::harmonic(int axis, double k, double center) {
  PotentialSpec spec;
  PotentialTerm t;
  t.kind = PotentialTerm::Kind::harmonic;
  t.axis_a = axis;
  t.strength = k;
  t.center_a = center;
  spec.terms_.push_back(std::move(t));
  return spec;
}

PotentialSpec PotentialSpec::linear_coupling(double lambda, int axis_q, int axis_c,
                                             double center_q, double center_c) {
  PotentialSpec spec;
  PotentialTerm t;
  t.kind = PotentialTerm::Kind::linear_coupling;
  t.axis_a = axis_q;
  t.axis_b = axis_c;
  t.strength = lambda;
  t.center_a = center_q;
  t.center_b = center_c;
  spec.terms_.push_back(std::move(t));
  return spec;
}

PotentialSpec PotentialSpec::softened_gravity(double G, double m, double M,
                                              double softening, int axis_q, int axis_c) {
  if (!(softening > 0.0)) {
    throw ConfigError("softened gravity requires a positive softening length");
  }
  PotentialSpec spec;
  PotentialTerm t;
  t.kind = PotentialTerm::Kind::softened_gravity;
  t.axis_a = axis_q;
  t.axis_b = axis_c;
  t.strength = G * m * M;
  t.softening = softening;
  spec.terms_.push_back(std::move(t));
  return spec;
}

PotentialSpec PotentialSpec::polynomial(int axis, std::vector<double> coefficients) {
  PotentialSpec spec;
  PotentialTerm t;
  t.kind = PotentialTerm::Kind::polynomial;
  t.axis_a = axis;
  t.coefficients = std::move(coefficients);
  spec.terms_.push_back(std::move(t));
  return spec;
}

PotentialSpec PotentialSpec::operator+(const PotentialSpec& other) const {
  PotentialSpec sum = *this;
  sum.terms_.insert(sum.terms_.end(), other.terms_.begin(), other.terms_.end());
  return sum;
}

bool PotentialSpec::separable() const {
  for (const PotentialTerm& t : terms_) {
    if ((t.kind == PotentialTerm::Kind::linear_coupling ||
         t.kind == PotentialTerm::Kind::softened_gravity) &&
        t.strength != 0.0) {
      return false;
    }
  }
  return true;
}

bool PotentialSpec::couples(int axis_a, int axis_b) const {
  for (const PotentialTerm& t : terms_) {
    if ((t.kind == PotentialTerm::Kind::linear_coupling ||
         t.kind == PotentialTerm::Kind::softened_gravity) &&
        t.strength != 0.0) {
      if ((t.axis_a == axis_a && t.axis_b == axis_b) ||
          (t.axis_a == axis_b && t.axis_b == axis_a)) {
        return true;
      }
    }
  }
  return false;
}

void PotentialSpec::validate(const Grid& grid) const {
  for (const PotentialTerm& t : terms_) {
    if (t.axis_a < 0 || t.axis_a >= grid.rank()) {
      throw ConfigError("potential term references axis " + std::to_string(t.axis_a) +
                        " outside the grid");
    }
    const bool two_axis = t.kind == PotentialTerm::Kind::linear_coupling ||
                          t.kind == PotentialTerm::Kind::softened_gravity;
    if (two_axis && (t.axis_b < 0 || t.axis_b >= grid.rank() || t.axis_b == t.axis_a)) {
      throw ConfigError("potential coupling term needs two distinct grid axes");
    }
    if (!std::isfinite(t.strength) || !std::isfinite(t.center_a) ||
        !std::isfinite(t.center_b)) {
      throw ConfigError("potential term has non-finite parameters");
    }
    for (double c : t.coefficients) {
      if (!std::isfinite(c)) throw ConfigError("polynomial coefficient not finite");
    }
  }
}

Field PotentialSpec::evaluate_on(const GridPtr& grid) const {
  validate(*grid);
  const Grid& g = *grid;
  Field out(grid, 0.0);
  for (const PotentialTerm& t : terms_) {
    const std::int64_t sa = g.stride(t.axis_a);
    const int na = g.axis(t.axis_a).count;
    switch (t.kind) {
      case PotentialTerm::Kind::harmonic:
        for (std::int64_t p = 0; p < g.size(); ++p) {
          const double u = g.coord(t.axis_a, static_cast<int>((p / sa) % na)) - t.center_a;
          out[p] += 0.5 * t.strength * u * u;
        }
        break;
      case PotentialTerm::Kind::polynomial:
        for (std::int64_t p = 0; p < g.size(); ++p) {
          const double u = g.coord(t.axis_a, static_cast<int>((p / sa) % na));
          double v = 0.0;
          for (std::size_t k = t.coefficients.size(); k-- > 0;) {
            v = v * u + t.coefficients[k];
          }
          out[p] += v;
        }
        break;
      case PotentialTerm::Kind::linear_coupling: {
        const std::int64_t sb = g.stride(t.axis_b);
        const int nb = g.axis(t.axis_b).count;
        for (std::int64_t p = 0; p < g.size(); ++p) {
          const double ua = g.coord(t.axis_a, static_cast<int>((p / sa) % na)) - t.center_a;
          const double ub = g.coord(t.axis_b, static_cast<int>((p / sb) % nb)) - t.center_b;
          out[p] += t.strength * ua * ub;
        }
        break;
      }
      case PotentialTerm::Kind::softened_gravity: {
        const std::int64_t sb = g.stride(t.axis_b);
        const int nb = g.axis(t.axis_b).count;
        const double a2 = t.softening * t.softening;
        for (std::int64_t p = 0; p < g.size(); ++p) {
          const double q = g.coord(t.axis_a, static_cast<int>((p / sa) % na));
          const double x = g.coord(t.axis_b, static_cast<int>((p / sb) % nb));
          const double d = x - q;
          out[p] += -t.strength / std::sqrt(d * d + a2);
        }
        break;
      }
    }
  }
  return out;
}

// ---- HamiltonianSpec -------------------------------------------------------

namespace {

void check_positive(double v, const char* what) {
  if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

HamiltonianSpec HamiltonianSpec::classical(double mass, PotentialSpec V) {
  check_positive(mass, "mass");
  HamiltonianSpec spec;
  spec.kind_ = Kind::classical;
  spec.mass_quantum_ = spec.mass_classical_ = mass;
  spec.hbar_ = 0.0;
  spec.potential_ = std::move(V);
  return spec;
}

HamiltonianSpec HamiltonianSpec::quantum(double mass, double hbar, PotentialSpec V) {
  check_positive(mass, "mass");
  if (hbar < 0.0) throw ConfigError("hbar must be non-negative");
  HamiltonianSpec spec;
  spec.kind_ = Kind::quantum;
  spec.mass_quantum_ = spec.mass_classical_ = mass;
  spec.hbar_ = hbar;
  spec.potential_ = std::move(V);
  return spec;
}

HamiltonianSpec HamiltonianSpec::hybrid(double mass_quantum, double mass_classical,
                                        double hbar, PotentialSpec V,
                                        std::vector<Sector> sectors) {
  check_positive(mass_quantum, "quantum mass");
  check_positive(mass_classical, "classical mass");
  // hbar = 0 is allowed: the hybrid then evaluates as two classical sectors.
  if (hbar < 0.0) throw ConfigError("hbar must be non-negative");
  if (sectors.empty()) throw ConfigError("hybrid spec needs a sector per axis");
  HamiltonianSpec spec;
  spec.kind_ = Kind::hybrid;
  spec.mass_quantum_ = mass_quantum;
  spec.mass_classical_ = mass_classical;
  spec.hbar_ = hbar;
  spec.potential_ = std::move(V);
  spec.sectors_ = std::move(sectors);
  return spec;
}

HamiltonianSpec HamiltonianSpec::with_measurement(HamiltonianSpec base, double total_kick,
                                                  int quantum_axis, int classical_axis,
                                                  double window_start, double window_length) {
  if (window_length < 0.0) throw ConfigError("measurement window length must be >= 0");
  base.kind_ = Kind::hybrid_measurement;
  base.measurement_.total_kick = total_kick;
  base.measurement_.quantum_axis = quantum_axis;
  base.measurement_.classical_axis = classical_axis;
  base.measurement_.window_start = window_start;
  base.measurement_.window_length = window_length;
  return base;
}

HamiltonianSpec HamiltonianSpec::gravity_hybrid(double mass_quantum, double mass_classical,
                                                double hbar, double G, double softening,
                                                std::vector<Sector> sectors) {
  if (sectors.size() != 2) {
    throw ConfigError("gravity hybrid expects a two-axis (quantum, classical) grid");
  }
  int qa = -1, ca = -1;
  for (std::size_t a = 0; a < sectors.size(); ++a) {
    (sectors[a] == Sector::quantum ? qa : ca) = static_cast<int>(a);
  }
  if (qa < 0 || ca < 0) {
    throw ConfigError("gravity hybrid needs one quantum and one classical axis");
  }
  HamiltonianSpec spec = hybrid(mass_quantum, mass_classical, hbar,
                                PotentialSpec::softened_gravity(
                                    G, mass_quantum, mass_classical, softening, qa, ca),
                                std::move(sectors));
  spec.kind_ = Kind::gravity_hybrid;
  spec.gravity_G_ = G;
  spec.gravity_softening_ = softening;
  return spec;
}

HamiltonianSpec::Layout HamiltonianSpec::layout_for(const Grid& grid) const {
  Layout layout;
  const int rank = grid.rank();
  layout.mass.resize(static_cast<std::size_t>(rank));
  layout.hbar.resize(static_cast<std::size_t>(rank), 0.0);

  if (sectors_.empty()) {
    // Single-sector variants apply to any rank.
    const bool is_quantum = kind_ == Kind::quantum;
    for (int a = 0; a < rank; ++a) {
      layout.mass[static_cast<std::size_t>(a)] = mass_quantum_;
      if (is_quantum) {
        layout.hbar[static_cast<std::size_t>(a)] = hbar_;
        layout.quantum_axes.push_back(a);
      }
    }
    return layout;
  }

  if (static_cast<int>(sectors_.size()) != rank) {
    throw UsageError("Hamiltonian sector partition does not match grid rank");
  }
  for (int a = 0; a < rank; ++a) {
    if (sectors_[static_cast<std::size_t>(a)] == Sector::quantum) {
      layout.mass[static_cast<std::size_t>(a)] = mass_quantum_;
      layout.hbar[static_cast<std::size_t>(a)] = hbar_;
      layout.quantum_axes.push_back(a);
    } else {
      layout.mass[static_cast<std::size_t>(a)] = mass_classical_;
    }
  }
  return layout;
}

// ---- Discrete functionals --------------------------------------------------

namespace {

Field sqrt_clamped(const Field& P) {
  Field R(P.grid());
  for (std::int64_t i = 0; i < P.size(); ++i) {
    R[i] = std::sqrt(std::max(P[i], 0.0));
  }
  return R;
}

// Transverse quadrature weight of one line along `axis` (product of the
// other axes' spacing and trapezoid factors at the line's fixed indices).
double transverse_weight(const Grid& g, int axis, std::int64_t base) {
  double tw = 1.0;
  const auto idx = g.unflatten(base);
  for (int b = 0; b < g.rank(); ++b) {
    if (b == axis) continue;
    tw *= g.axis(b).spacing() * g.axis_weight(b, idx[static_cast<std::size_t>(b)]);
  }
  return tw;
}

// Face-difference Fisher sum along one axis: sum over faces of
// (dR/h)^2 * h * transverse weight. This is the discretization of
// integral |d sqrt(P) / d x_a|^2 whose exact gradient is the compact
// quantum-potential operator below.
double fisher_face_sum(const Field& R, int axis) {
  const Grid& g = *R.grid();
  const Axis& ax = g.axis(axis);
  const double inv_h = 1.0 / ax.spacing();
  const bool periodic = ax.boundary == Boundary::periodic;
  const double* src = R.values().data();

  double total = 0.0;
  for_each_line(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    const double tw = transverse_weight(g, axis, base);
    double acc = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      const double d = src[base + (i + 1) * s] - src[base + i * s];
      acc += d * d;
    }
    if (periodic) {
      const double d = src[base] - src[base + static_cast<std::int64_t>(n - 1) * s];
      acc += d * d;
    }
    total += acc * inv_h * tw;
  });
  return total;
}

// The operator L with L R / R equal to the exact discrete variation of the
// face-difference Fisher sum: compact interior rows; wrapped rows on
// periodic axes; 2 (R1 - R0)/h^2 end rows on clamped axes (these differ
// from laplacian()'s one-sided rows deliberately).
void add_fisher_operator(const Field& R, int axis, double coef, Field& out) {
  const Grid& g = *R.grid();
  const Axis& ax = g.axis(axis);
  const double invh2 = 1.0 / (ax.spacing() * ax.spacing());
  const bool periodic = ax.boundary == Boundary::periodic;
  const double* src = R.values().data();
  double* dst = out.values().data();

  for_each_line(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    if (periodic) {
      for (int i = 0; i < n; ++i) {
        const int ip = i + 1 < n ? i + 1 : 0;
        const int im = i > 0 ? i - 1 : n - 1;
        dst[base + i * s] += coef * (src[base + ip * s] - 2.0 * src[base + i * s] +
                                     src[base + im * s]) * invh2;
      }
    } else {
      dst[base] += coef * 2.0 * (src[base + s] - src[base]) * invh2;
      for (int i = 1; i + 1 < n; ++i) {
        dst[base + i * s] += coef * (src[base + (i + 1) * s] - 2.0 * src[base + i * s] +
                                     src[base + (i - 1) * s]) * invh2;
      }
      const std::int64_t last = base + static_cast<std::int64_t>(n - 1) * s;
      dst[last] += coef * 2.0 * (src[last - s] - src[last]) * invh2;
    }
  });
}

struct Bound {
  HamiltonianSpec::Layout layout;
  Field V;
  double kappa = 0.0;  // active measurement rate at state.t
};

Bound bind(const HamiltonianSpec& spec, const EnsembleState& state) {
  Bound b{spec.layout_for(*state.grid()), spec.potential().evaluate_on(state.grid()), 0.0};
  if (spec.has_measurement()) {
    const MeasurementCoupling& mc = spec.measurement();
    if (mc.quantum_axis >= state.grid()->rank() ||
        mc.classical_axis >= state.grid()->rank()) {
      throw UsageError("measurement coupling references axes outside the grid");
    }
    b.kappa = mc.kappa_at(state.t);
  }
  return b;
}

}  // namespace

double evaluate(const HamiltonianSpec& spec, const EnsembleState& state) {
  const Grid& g = *state.grid();
  const Bound b = bind(spec, state);
  const int rank = g.rank();

  // Pointwise energy density P * (V + sum_a u_a^2 / 2m_a) (+ kick term).
  Field density = b.V;
  for (int a = 0; a < rank; ++a) {
    const Field u = gradient(state.S, a);
    const double half_inv_m = 0.5 / b.layout.mass[static_cast<std::size_t>(a)];
    for (std::int64_t i = 0; i < density.size(); ++i) {
      density[i] += half_inv_m * u[i] * u[i];
    }
    if (b.kappa != 0.0 && a == spec.measurement().classical_axis) {
      const Field q = coordinate_field(state.grid(), spec.measurement().quantum_axis);
      for (std::int64_t i = 0; i < density.size(); ++i) {
        density[i] += b.kappa * q[i] * u[i];
      }
    }
  }
  double energy = integrate(hadamard(state.P, density));

  if (!b.layout.quantum_axes.empty()) {
    const Field R = sqrt_clamped(state.P);
    for (int a : b.layout.quantum_axes) {
      const double h = b.layout.hbar[static_cast<std::size_t>(a)];
      const double m = b.layout.mass[static_cast<std::size_t>(a)];
      energy += 0.5 * h * h / m * fisher_face_sum(R, a);
    }
  }
  return energy;
}

Field delta_P(const HamiltonianSpec& spec, const EnsembleState& state) {
  const Grid& g = *state.grid();
  const Bound b = bind(spec, state);

  Field out = b.V;
  for (int a = 0; a < g.rank(); ++a) {
    const Field u = gradient(state.S, a);
    const double half_inv_m = 0.5 / b.layout.mass[static_cast<std::size_t>(a)];
    for (std::int64_t i = 0; i < out.size(); ++i) {
      out[i] += half_inv_m * u[i] * u[i];
    }
    if (b.kappa != 0.0 && a == spec.measurement().classical_axis) {
      const Field q = coordinate_field(state.grid(), spec.measurement().quantum_axis);
      for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] += b.kappa * q[i] * u[i];
      }
    }
  }

  if (!b.layout.quantum_axes.empty()) {
    // The density floor is applied to sqrt(P) on both sides of the quantum
    // potential. Flooring only the denominator leaves an unbounded
    // linearization in near-vacuum cells (L R / R_floor with R << R_floor),
    // which destabilizes explicit stepping; with the floor inside, deep
    // vacuum regions become flat and contribute nothing.
    Field R = sqrt_clamped(state.P);
    const double floor = std::sqrt(kPFloorRelative * max_abs(state.P));
    if (floor > 0.0) {
      for (double& v : R.values()) v = std::max(v, floor);
      Field lap(state.grid(), 0.0);
      for (int a : b.layout.quantum_axes) {
        const double h = b.layout.hbar[static_cast<std::size_t>(a)];
        const double m = b.layout.mass[static_cast<std::size_t>(a)];
        add_fisher_operator(R, a, 0.5 * h * h / m, lap);
      }
      for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] -= lap[i] / R[i];
      }
    }
  }
  return out;
}

Field delta_S(const HamiltonianSpec& spec, const EnsembleState& state) {
  const Grid& g = *state.grid();
  const Bound b = bind(spec, state);

  Field out(state.grid(), 0.0);
  for (int a = 0; a < g.rank(); ++a) {
    const Field u = gradient(state.S, a);
    const double inv_m = 1.0 / b.layout.mass[static_cast<std::size_t>(a)];
    Field flux(state.grid());
    for (std::int64_t i = 0; i < flux.size(); ++i) {
      flux[i] = state.P[i] * u[i] * inv_m;
    }
    if (b.kappa != 0.0 && a == spec.measurement().classical_axis) {
      const Field q = coordinate_field(state.grid(), spec.measurement().quantum_axis);
      for (std::int64_t i = 0; i < flux.size(); ++i) {
        flux[i] += b.kappa * q[i] * state.P[i];
      }
    }
    const Field term = adjoint_divergence_term(flux, a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += term[i];
  }
  return out;
}

Field quantum_potential(const Field& P, double hbar, double mass,
                        std::span<const int> quantum_axes) {
  if (!(hbar > 0.0) || !(mass > 0.0)) {
    throw UsageError("quantum_potential: hbar and mass must be positive");
  }
  Field R = sqrt_clamped(P);
  const double maxP = max_abs(P);
  const double floor = maxP > 0.0 ? std::sqrt(kPFloorRelative * maxP) : 1.0;
  for (double& v : R.values()) v = std::max(v, floor);
  Field lap(P.grid(), 0.0);
  for (int a : quantum_axes) {
    add_fisher_operator(R, a, 1.0, lap);
  }
  Field out(P.grid());
  const double coef = -0.5 * hbar * hbar / mass;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out[i] = coef * lap[i] / R[i];
  }
  return out;
}

Field numerical_functional_derivative(const HamiltonianSpec& spec,
                                      const EnsembleState& state, Which which) {
  const Grid& g = *state.grid();
  if (g.size() > 10000) {
    throw RefusalError("numerical functional derivative refused: grid larger than 10^4 points");
  }
  EnsembleState work{state.P, state.S, state.t};
  Field& target = which == Which::P ? work.P : work.S;

  // H is quadratic in S, so any step is exact there and a generous one
  // drowns the cancellation noise. The Fisher term is strongly nonlinear in
  // P near zero, so the P step tracks the local value with a small floor.
  const double field_scale = max_abs(target);
  const double s_step = 0.01 * std::max(field_scale, 1.0);

  Field out(state.grid());
  for (std::int64_t c = 0; c < g.size(); ++c) {
    const double saved = target[c];
    const double delta =
        which == Which::S
            ? s_step
            : std::max(1e-6 * std::max(std::abs(saved), 1e-2 * field_scale), 1e-12);
    target[c] = saved + delta;
    const double plus = evaluate(spec, work);
    target[c] = saved - delta;
    const double minus = evaluate(spec, work);
    target[c] = saved;
    out[c] = (plus - minus) / (2.0 * delta * g.quadrature_weight(c));
  }
  return out;
}

std::pair<double, double> homogeneity_energy(const HamiltonianSpec& spec,
                                             const EnsembleState& state) {
  const double lhs = evaluate(spec, state);
  const double rhs = integrate(hadamard(state.P, delta_P(spec, state)));
  return {lhs, rhs};
}

}  // namespace hybens

#include "hybens/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hybens/field_io.hpp"
#include "hybens/parallel.hpp"

namespace hybens {

double ConditionalDensityOperator::trace() const {
  double tr = 0.0;
  for (int i = 0; i < n; ++i) {
    tr += at(i, i).real() * weights[static_cast<std::size_t>(i)];
  }
  return tr;
}

double ConditionalDensityOperator::purity() const {
  double p = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      p += std::norm(at(i, j)) * weights[static_cast<std::size_t>(i)] *
           weights[static_cast<std::size_t>(j)];
    }
  }
  return p;
}

ConditionalDensityOperator conditional_density_operator(
    const EnsembleState& state, double hbar, std::span<const int> classical_axes) {
  const Grid& g = *state.grid();
  const std::vector<int> quantum = complement_axes(g, classical_axes);
  if (quantum.size() != 1) {
    throw UsageError("conditional density operator needs exactly one quantum axis");
  }
  const int qa = quantum.front();
  const int nq = g.axis(qa).count;
  if (nq > 1024) {
    throw RefusalError("conditional density operator refused: quantum basis larger than 1024");
  }

  const Field marginal = classical_marginal(state, classical_axes);
  const Grid& cg = *marginal.grid();
  const double eps = kPFloorRelative * max_abs(marginal);

  ConditionalDensityOperator op;
  op.n = nq;
  op.q0 = g.axis(qa).min;
  op.dq = g.axis(qa).spacing();
  op.rho.assign(static_cast<std::size_t>(nq) * static_cast<std::size_t>(nq), {0.0, 0.0});
  op.weights.resize(static_cast<std::size_t>(nq));
  {
    std::vector<Axis> qax{g.axis(qa)};
    GridPtr qgrid = Grid::make(qax);
    for (int i = 0; i < nq; ++i) {
      op.weights[static_cast<std::size_t>(i)] = qgrid->quadrature_weight(i);
    }
  }

  double included = 0.0;
  double total = 0.0;
  std::vector<int> cidx(classical_axes.size());
  for (std::int64_t c = 0; c < cg.size(); ++c) {
    const auto sub = cg.unflatten(c);
    for (std::size_t k = 0; k < classical_axes.size(); ++k) cidx[k] = sub[k];
    const double mass = marginal[c] ;
    const double wx = cg.quadrature_weight(c);
    total += mass * wx;
    if (!(mass > eps)) continue;

    const ComplexField psi =
        conditional_wavefunction(state, classical_axes, cidx, hbar);
    included += mass * wx;
    const double scale = mass * wx;
    // rho += w_x P(x) |psi><psi|; upper triangle then mirrored.
    parallel_for(static_cast<std::size_t>(nq), [&](std::size_t ib, std::size_t ie) {
      for (std::size_t i = ib; i < ie; ++i) {
        const std::complex<double> pi = psi.values[i];
        for (std::size_t j = i; j < static_cast<std::size_t>(nq); ++j) {
          op.rho[i * static_cast<std::size_t>(nq) + j] +=
              scale * pi * std::conj(psi.values[j]);
        }
      }
    });
  }
  if (included <= 0.0) {
    throw UndefinedConditionalError(
        "conditional density operator undefined: every classical slice is empty");
  }
  for (int i = 0; i < nq; ++i) {
    for (int j = 0; j < i; ++j) {
      op.rho[static_cast<std::size_t>(i) * static_cast<std::size_t>(nq) +
             static_cast<std::size_t>(j)] =
          std::conj(op.at(j, i));
    }
  }
  const double inv = 1.0 / included;
  for (auto& z : op.rho) z *= inv;
  op.excluded_mass = total - included;
  return op;
}

double coherence_metric(const ConditionalDensityOperator& rho) {
  double off = 0.0;
  double diag = 0.0;
  for (int i = 0; i < rho.n; ++i) {
    for (int j = 0; j < rho.n; ++j) {
      const double m = std::abs(rho.at(i, j));
      if (i == j) {
        diag += m;
      } else {
        off += m;
      }
    }
  }
  if (diag == 0.0) {
    throw InvalidStateError("coherence metric undefined: zero diagonal");
  }
  return off / diag;
}

MeasurementReport run_position_measurement(const MeasurementProtocolConfig& config) {
  if (!config.grid || config.grid->rank() != 2) {
    throw ConfigError("position measurement needs a 2-axis (quantum, classical) grid");
  }
  const Grid& g = *config.grid;
  const int qa = config.quantum_axis;
  const int xa = config.classical_axis;
  if (qa == xa || qa < 0 || xa < 0 || qa >= 2 || xa >= 2) {
    throw ConfigError("position measurement axes must name the two grid axes");
  }
  const Axis& q_axis = g.axis(qa);
  const Axis& x_axis = g.axis(xa);

  // A delta pointer is represented as a Gaussian at least two cells wide.
  const double sigma_x = std::max(config.pointer_sigma, 2.0 * x_axis.spacing());

  // Domain check: the image x0 + K q of the 4-sigma quantum support plus
  // pointer tails must stay inside the pointer axis.
  double q_lo = q_axis.max, q_hi = q_axis.min;
  for (const GaussianPeak& pk : config.quantum_initial.peaks) {
    if (pk.mean.size() != 1 || pk.sigma.size() != 1) {
      throw ConfigError("quantum initial state must be specified over the quantum axis only");
    }
    q_lo = std::min(q_lo, pk.mean[0] - 4.0 * pk.sigma[0]);
    q_hi = std::max(q_hi, pk.mean[0] + 4.0 * pk.sigma[0]);
  }
  const double img_lo = config.pointer_center +
                        std::min(config.kick * q_lo, config.kick * q_hi) - 4.0 * sigma_x;
  const double img_hi = config.pointer_center +
                        std::max(config.kick * q_lo, config.kick * q_hi) + 4.0 * sigma_x;
  if (img_lo < x_axis.min || img_hi > x_axis.max) {
    throw DomainEscapeError(
        "measurement image escapes the pointer axis: need x in [" +
        format_double(img_lo) + ", " + format_double(img_hi) + "] but axis '" +
        x_axis.name + "' covers [" + format_double(x_axis.min) + ", " +
        format_double(x_axis.max) + "]");
  }

  // Product initial state: quantum spec on axis qa, pointer Gaussian on xa.
  GaussianSpec joint;
  for (const GaussianPeak& pk : config.quantum_initial.peaks) {
    GaussianPeak jp;
    jp.mean.resize(2);
    jp.sigma.resize(2);
    jp.momentum.assign(2, 0.0);
    jp.weight = pk.weight;
    jp.mean[static_cast<std::size_t>(qa)] = pk.mean[0];
    jp.sigma[static_cast<std::size_t>(qa)] = pk.sigma[0];
    if (!pk.momentum.empty()) jp.momentum[static_cast<std::size_t>(qa)] = pk.momentum[0];
    jp.mean[static_cast<std::size_t>(xa)] = config.pointer_center;
    jp.sigma[static_cast<std::size_t>(xa)] = sigma_x;
    joint.peaks.push_back(std::move(jp));
  }
  EnsembleState state = make_state(config.grid, joint, 0.0);

  std::vector<Sector> sectors(2, Sector::classical);
  sectors[static_cast<std::size_t>(qa)] = Sector::quantum;
  const HamiltonianSpec free_spec =
      HamiltonianSpec::hybrid(config.mass_quantum, config.mass_classical,
                              config.hbar, PotentialSpec::none(), sectors);

  if (config.pre_steps > 0) {
    IntegratorConfig ic = config.integrator;
    ic.steps = config.pre_steps;
    state = evolve(free_spec, state, ic, 0).snapshots.back();
  }

  MeasurementReport report;
  const std::vector<int> classical{xa};
  report.kick = config.kick;
  report.pointer_center = config.pointer_center;
  report.pointer_sigma_used = sigma_x;
  report.state_before = state;
  report.pointer_before = classical_marginal(state, classical);
  report.rho_before = conditional_density_operator(state, config.hbar, classical);
  report.coherence_before = coherence_metric(report.rho_before);
  report.norm_before = integrate(state.P);

  state = impulsive_position_measurement(state, config.kick, qa, xa);

  if (config.post_steps > 0) {
    IntegratorConfig ic = config.integrator;
    ic.steps = config.post_steps;
    state = evolve(free_spec, state, ic, 0).snapshots.back();
  }

  report.state_after = state;
  report.pointer_after = classical_marginal(state, classical);
  report.rho_after = conditional_density_operator(state, config.hbar, classical);
  report.coherence_after = coherence_metric(report.rho_after);
  report.norm_after = integrate(state.P);

  report.inferred_q.resize(static_cast<std::size_t>(x_axis.count));
  for (int i = 0; i < x_axis.count; ++i) {
    report.inferred_q[static_cast<std::size_t>(i)] =
        config.kick != 0.0
            ? (x_axis.coord(i) - config.pointer_center) / config.kick
            : 0.0;
  }
  return report;
}

namespace {

void write_rho_csv(const std::filesystem::path& path,
                   const ConditionalDensityOperator& rho, bool imag) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "# basis q0=" << format_double(rho.q0) << " dq=" << format_double(rho.dq)
     << " n=" << rho.n << "\n";
  for (int i = 0; i < rho.n; ++i) {
    for (int j = 0; j < rho.n; ++j) {
      if (j) os << ',';
      const std::complex<double> z = rho.at(i, j);
      os << format_double(imag ? z.imag() : z.real());
    }
    os << "\n";
  }
}

}  // namespace

void write_report(const MeasurementReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_field_csv(dir / "pointer_before.csv", report.pointer_before);
  write_field_csv(dir / "pointer_after.csv", report.pointer_after);
  write_rho_csv(dir / "rho_before_real.csv", report.rho_before, false);
  write_rho_csv(dir / "rho_before_imag.csv", report.rho_before, true);
  write_rho_csv(dir / "rho_after_real.csv", report.rho_after, false);
  write_rho_csv(dir / "rho_after_imag.csv", report.rho_after, true);

  std::ofstream os(dir / "summary.txt");
  if (!os) throw IoError("cannot open summary.txt for writing");
  os << "kick = " << format_double(report.kick) << "\n"
     << "pointer_center = " << format_double(report.pointer_center) << "\n"
     << "pointer_sigma = " << format_double(report.pointer_sigma_used) << "\n"
     << "coherence_before = " << format_double(report.coherence_before) << "\n"
     << "coherence_after = " << format_double(report.coherence_after) << "\n"
     << "norm_before = " << format_double(report.norm_before) << "\n"
     << "norm_after = " << format_double(report.norm_after) << "\n"
     << "rho_excluded_mass_before = " << format_double(report.rho_before.excluded_mass) << "\n"
     << "rho_excluded_mass_after = " << format_double(report.rho_after.excluded_mass) << "\n"
     << "rho_purity_before = " << format_double(report.rho_before.purity()) << "\n"
     << "rho_purity_after = " << format_double(report.rho_after.purity()) << "\n";
}

}  // namespace hybens

#include "hybens/gravity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hybens/field_io.hpp"
#include "hybens/observables.hpp"

namespace hybens {

std::pair<double, double> rescaled_planck_constants(double m, double M, double hbar) {
  if (!(m > 0.0) || !(M > 0.0) || !(hbar > 0.0)) {
    throw UsageError("rescaled_planck_constants: m, M, hbar must be positive");
  }
  const double mt = m + M;
  return {std::sqrt(m / mt) * hbar, std::sqrt(M / mt) * hbar};
}

namespace {

void require_two_axes(const Grid& g, const char* what) {
  if (g.rank() != 2) {
    throw UsageError(std::string(what) + " requires a 2-axis state");
  }
}

// Resamples a (q, x) state onto a target grid through the linear map
// (q, x) = from(target coordinates).
EnsembleState resample_linear(const EnsembleState& src, GridPtr target,
                              const std::function<std::array<double, 2>(double, double)>& from) {
  const Grid& tg = *target;
  const Grid& sg = *src.grid();

  // Fractional source indices per target point.
  std::vector<std::vector<double>> frac(2);
  frac[0].resize(static_cast<std::size_t>(tg.size()));
  frac[1].resize(static_cast<std::size_t>(tg.size()));
  const double inv_h0 = 1.0 / sg.axis(0).spacing();
  const double inv_h1 = 1.0 / sg.axis(1).spacing();
  for (std::int64_t p = 0; p < tg.size(); ++p) {
    const auto idx = tg.unflatten(p);
    const double u = tg.coord(0, idx[0]);
    const double v = tg.coord(1, idx[1]);
    const auto source = from(u, v);
    frac[0][static_cast<std::size_t>(p)] = (source[0] - sg.axis(0).min) * inv_h0;
    frac[1][static_cast<std::size_t>(p)] = (source[1] - sg.axis(1).min) * inv_h1;
  }

  EnsembleState out{sample_onto(src.P, target, frac, SampleMode::density),
                    sample_onto(src.S, target, frac, SampleMode::action), src.t};
  for (double& v : out.P.values()) v = std::max(v, 0.0);
  return out;
}

// Probability mass below and above `mid` along `axis`.
std::pair<double, double> split_masses(const EnsembleState& state, int axis, double mid) {
  const Grid& g = *state.grid();
  const Field coord = coordinate_field(state.grid(), axis);
  double lower = 0.0, upper = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double w = g.quadrature_weight(i) * state.P[i];
    (coord[i] < mid ? lower : upper) += w;
  }
  return {lower, upper};
}

// Normalized classical distribution conditioned on the target coordinate
// lying in the upper (or lower) half-region about `mid`.
Field conditional_classical(const EnsembleState& state, int q_axis, double mid,
                            bool upper_region) {
  const Grid& g = *state.grid();
  const int x_axis = 1 - q_axis;
  std::vector<Axis> sub{g.axis(x_axis)};
  GridPtr xgrid = Grid::make(sub);

  const double hq = g.axis(q_axis).spacing();
  Field out(xgrid, 0.0);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const auto idx = g.unflatten(i);
    const double q = g.coord(q_axis, idx[static_cast<std::size_t>(q_axis)]);
    if ((q >= mid) != upper_region) continue;
    const double w = hq * g.axis_weight(q_axis, idx[static_cast<std::size_t>(q_axis)]);
    out[idx[static_cast<std::size_t>(x_axis)]] += w * state.P[i];
  }
  const double total = integrate(out);
  if (!(total > 0.0)) {
    throw InvalidStateError("conditional distribution undefined: empty peak region");
  }
  for (double& v : out.values()) v /= total;
  return out;
}

}  // namespace

GridPtr default_com_grid(const GridPtr& lab_grid, double m, double M) {
  const Grid& g = *lab_grid;
  require_two_axes(g, "default_com_grid");
  const double mt = m + M;
  const Axis& qa = g.axis(0);
  const Axis& xa = g.axis(1);

  // Bounding box of the image of the lab rectangle.
  double xbar_lo = 0, xbar_hi = 0, r_lo = 0, r_hi = 0;
  bool first = true;
  for (double q : {qa.min, qa.max}) {
    for (double x : {xa.min, xa.max}) {
      const double xbar = (m * q + M * x) / mt;
      const double r = x - q;
      if (first) {
        xbar_lo = xbar_hi = xbar;
        r_lo = r_hi = r;
        first = false;
      } else {
        xbar_lo = std::min(xbar_lo, xbar);
        xbar_hi = std::max(xbar_hi, xbar);
        r_lo = std::min(r_lo, r);
        r_hi = std::max(r_hi, r);
      }
    }
  }
  Axis com_axis{"xbar", xbar_lo, xbar_hi, qa.count, Boundary::clamped};
  Axis rel_axis{"r", r_lo, r_hi, xa.count, Boundary::clamped};
  return Grid::make({com_axis, rel_axis});
}

EnsembleState com_transform(const EnsembleState& lab, double m, double M,
                            GridPtr com_grid) {
  require_two_axes(*lab.grid(), "com_transform");
  require_two_axes(*com_grid, "com_transform");
  const double mt = m + M;

  // The image of the lab box must fit inside the target grid.
  const Grid& lg = *lab.grid();
  const Axis& qa = lg.axis(0);
  const Axis& xa = lg.axis(1);
  double xbar_lo = 1e300, xbar_hi = -1e300, r_lo = 1e300, r_hi = -1e300;
  for (double q : {qa.min, qa.max}) {
    for (double x : {xa.min, xa.max}) {
      const double xbar = (m * q + M * x) / mt;
      const double r = x - q;
      xbar_lo = std::min(xbar_lo, xbar);
      xbar_hi = std::max(xbar_hi, xbar);
      r_lo = std::min(r_lo, r);
      r_hi = std::max(r_hi, r);
    }
  }
  const Axis& ca = com_grid->axis(0);
  const Axis& ra = com_grid->axis(1);
  const double tol = 1e-9 * (std::abs(xbar_hi) + std::abs(r_hi) + 1.0);
  if (xbar_lo < ca.min - tol || xbar_hi > ca.max + tol || r_lo < ra.min - tol ||
      r_hi > ra.max + tol) {
    throw ConfigError("com_transform: image of the lab domain exceeds the target grid");
  }

  // q = xbar - (M/mt) r, x = xbar + (m/mt) r.
  return resample_linear(lab, std::move(com_grid), [m, M, mt](double xbar, double r) {
    return std::array<double, 2>{xbar - (M / mt) * r, xbar + (m / mt) * r};
  });
}

EnsembleState lab_from_com(const EnsembleState& com, double m, double M,
                           GridPtr lab_grid) {
  require_two_axes(*com.grid(), "lab_from_com");
  require_two_axes(*lab_grid, "lab_from_com");
  const double mt = m + M;
  // xbar = (m q + M x)/mt, r = x - q.
  return resample_linear(com, std::move(lab_grid), [m, M, mt](double q, double x) {
    return std::array<double, 2>{(m * q + M * x) / mt, x - q};
  });
}

ComDecomposition evaluate_com_decomposition(const EnsembleState& com_state, double m,
                                            double M, double hbar, double G,
                                            double softening) {
  const Grid& g = *com_state.grid();
  require_two_axes(g, "evaluate_com_decomposition");
  if (!(softening > 0.0)) {
    throw UsageError("evaluate_com_decomposition: softening must be positive");
  }
  const double mt = m + M;
  const double mu = m * M / mt;
  const auto [hbar_com, hbar_rel] = rescaled_planck_constants(m, M, hbar);

  const Field& P = com_state.P;
  Field R(com_state.grid());
  for (std::int64_t i = 0; i < P.size(); ++i) R[i] = std::sqrt(std::max(P[i], 0.0));

  const Field u_com = gradient(com_state.S, 0);
  const Field u_rel = gradient(com_state.S, 1);
  const Field gr_com = gradient(R, 0);
  const Field gr_rel = gradient(R, 1);
  const Field rcoord = coordinate_field(com_state.grid(), 1);

  // (i) free center-of-mass motion with hbar_com.
  Field dens_i(com_state.grid());
  for (std::int64_t i = 0; i < P.size(); ++i) {
    dens_i[i] = P[i] * u_com[i] * u_com[i] / (2.0 * mt);
  }
  double term_i = integrate(dens_i);
  {
    Field fisher(com_state.grid());
    for (std::int64_t i = 0; i < P.size(); ++i) {
      fisher[i] = gr_com[i] * gr_com[i];
    }
    term_i += hbar_com * hbar_com / (2.0 * mt) * integrate(fisher);
  }

  // (ii) relative motion in the softened potential with hbar_rel.
  Field dens_ii(com_state.grid());
  const double a2 = softening * softening;
  for (std::int64_t i = 0; i < P.size(); ++i) {
    const double vr = -G * mu * mt / std::sqrt(rcoord[i] * rcoord[i] + a2);
    dens_ii[i] = P[i] * (u_rel[i] * u_rel[i] / (2.0 * mu) + vr);
  }
  double term_ii = integrate(dens_ii);
  {
    Field fisher(com_state.grid());
    for (std::int64_t i = 0; i < P.size(); ++i) {
      fisher[i] = gr_rel[i] * gr_rel[i];
    }
    term_ii += hbar_rel * hbar_rel / (2.0 * mu) * integrate(fisher);
  }

  // (iii) intrinsic cross term. In the P log-derivative form this is
  // -(2 mu / mt) * integral P (hbar^2/4) (d log P/d xbar)(d log P/d r) / (2 mu),
  // written here through sqrt(P) so no density floor is needed.
  Field cross(com_state.grid());
  for (std::int64_t i = 0; i < P.size(); ++i) {
    cross[i] = gr_com[i] * gr_rel[i];
  }
  const double term_iii = -(hbar * hbar / mt) * integrate(cross);

  ComDecomposition out;
  out.term_i = term_i;
  out.term_ii = term_ii;
  out.term_iii = term_iii;
  out.hbar_com = hbar_com;
  out.hbar_rel = hbar_rel;
  out.total = term_i + term_ii + term_iii;
  return out;
}

ScatteringReport run_scattering(const ScatteringConfig& config) {
  if (!config.grid || config.grid->rank() != 2) {
    throw ConfigError("scattering needs a 2-axis (quantum target, classical projectile) grid");
  }
  const Grid& g = *config.grid;
  const double soft = config.softening > 0.0 ? config.softening
                                             : 4.0 * g.axis(1).spacing();

  // Scenario preconditions: separated peaks and an initially distant projectile.
  const auto& tpeaks = config.target.peaks;
  if (tpeaks.empty() || tpeaks.size() > 2) {
    throw ConfigError("scattering target needs one or two peaks");
  }
  if (config.projectile.peaks.size() != 1) {
    throw ConfigError("scattering projectile must be a single peak");
  }
  if (tpeaks.size() == 2) {
    const double sep = std::abs(tpeaks[0].mean[0] - tpeaks[1].mean[0]);
    const double smax = std::max(tpeaks[0].sigma[0], tpeaks[1].sigma[0]);
    if (sep < 6.0 * smax) {
      throw ConfigError("scattering target peaks must be separated by at least 6 sigma");
    }
  }
  const double x0 = config.projectile.peaks[0].mean[0];
  for (const GaussianPeak& pk : tpeaks) {
    if (std::abs(x0 - pk.mean[0]) < 10.0 * soft) {
      throw ConfigError("projectile must start at least 10 softening lengths from the target");
    }
  }

  // Joint product initial state.
  GaussianSpec joint;
  const GaussianPeak& proj = config.projectile.peaks[0];
  for (const GaussianPeak& pk : tpeaks) {
    GaussianPeak jp;
    jp.weight = pk.weight;
    jp.mean = {pk.mean[0], proj.mean[0]};
    jp.sigma = {pk.sigma[0], proj.sigma[0]};
    jp.momentum = {pk.momentum.empty() ? 0.0 : pk.momentum[0],
                   proj.momentum.empty() ? 0.0 : proj.momentum[0]};
    joint.peaks.push_back(std::move(jp));
  }

  auto run_one = [&](double G_value) {
    const HamiltonianSpec spec = HamiltonianSpec::gravity_hybrid(
        config.mass_quantum, config.mass_classical, config.hbar, G_value, soft,
        {Sector::quantum, Sector::classical});
    EnsembleState state = make_state(config.grid, joint, 0.0);
    IntegratorConfig ic = config.integrator;
    return evolve(spec, state, ic, config.record_every);
  };

  const Trajectory traj = run_one(config.G);

  ScatteringReport report;
  report.softening_used = soft;
  report.two_peak = tpeaks.size() == 2;
  {
    const double e0 = traj.energy.front();
    for (std::size_t k = 0; k < traj.step.size(); ++k) {
      report.norm_drift = std::max(report.norm_drift, std::abs(traj.norm[k] - 1.0));
      report.energy_drift_rel =
          std::max(report.energy_drift_rel,
                   std::abs(traj.energy[k] - e0) / std::max(std::abs(e0), 1e-300));
    }
  }

  const double mid = report.two_peak
                         ? 0.5 * (tpeaks[0].mean[0] + tpeaks[1].mean[0])
                         : 0.0;
  // Peak A is the one nearer the projectile's starting side.
  const bool a_is_upper =
      report.two_peak &&
      std::abs(x0 - std::max(tpeaks[0].mean[0], tpeaks[1].mean[0])) <
          std::abs(x0 - std::min(tpeaks[0].mean[0], tpeaks[1].mean[0]));

  double closest = 1e300;
  double closest_t = 0.0;
  for (const EnsembleState& s : traj.snapshots) {
    report.t.push_back(s.t);
    const double mq = mean_coordinate(s, 0);
    const double mx = mean_coordinate(s, 1);
    report.mean_q.push_back(mq);
    report.mean_x.push_back(mx);
    const double var_q = coordinate_variance(s, 0);
    const double var_x = coordinate_variance(s, 1);
    report.sigma_q.push_back(std::sqrt(var_q));
    report.sigma_x.push_back(std::sqrt(var_x));
    report.covariance.push_back(coordinate_covariance(s, 0, 1));
    if (std::abs(mx - mq) < closest) {
      closest = std::abs(mx - mq);
      closest_t = s.t;
    }
    if (report.two_peak) {
      const auto masses = split_masses(s, 0, mid);
      if (a_is_upper) {
        report.mass_peak_b.push_back(masses.first);
        report.mass_peak_a.push_back(masses.second);
      } else {
        report.mass_peak_a.push_back(masses.first);
        report.mass_peak_b.push_back(masses.second);
      }
    }
  }
  report.closest_approach = closest;
  report.closest_approach_time = closest_t;

  const EnsembleState& final_state = traj.snapshots.back();
  {
    double max_ratio = 0.0;
    for (std::size_t k = 0; k < report.t.size(); ++k) {
      const double denom = report.sigma_q[k] * report.sigma_x[k];
      if (denom > 0.0) {
        max_ratio = std::max(max_ratio, std::abs(report.covariance[k]) / denom);
      }
    }
    report.coupled_max_cov_ratio = max_ratio;
    report.initial_cov_ratio =
        report.sigma_q[0] * report.sigma_x[0] > 0.0
            ? std::abs(report.covariance[0]) / (report.sigma_q[0] * report.sigma_x[0])
            : 0.0;
  }

  if (report.two_peak) {
    report.conditional_given_a = conditional_classical(final_state, 0, mid, a_is_upper);
    report.conditional_given_b = conditional_classical(final_state, 0, mid, !a_is_upper);
    report.conditional_contrast =
        l1_distance(report.conditional_given_a, report.conditional_given_b);
  } else {
    const std::vector<int> classical{1};
    Field marg = classical_marginal(final_state, classical);
    report.conditional_given_a = marg;
    report.conditional_given_b = marg;
  }

  if (config.include_control) {
    const Trajectory control = run_one(0.0);
    double max_ratio = 0.0;
    for (const EnsembleState& s : control.snapshots) {
      const double denom = std::sqrt(coordinate_variance(s, 0) *
                                     coordinate_variance(s, 1));
      if (denom > 0.0) {
        max_ratio = std::max(
            max_ratio, std::abs(coordinate_covariance(s, 0, 1)) / denom);
      }
    }
    report.has_control = true;
    report.control_max_cov_ratio = max_ratio;
  }
  return report;
}

void write_report(const ScatteringReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "covariance.csv");
    if (!os) throw IoError("cannot open covariance.csv for writing");
    os << "t,cov,sigma_q,sigma_x,mean_q,mean_x";
    if (report.two_peak) os << ",mass_peak_a,mass_peak_b";
    os << "\n";
    for (std::size_t k = 0; k < report.t.size(); ++k) {
      os << format_double(report.t[k]) << ',' << format_double(report.covariance[k])
         << ',' << format_double(report.sigma_q[k]) << ','
         << format_double(report.sigma_x[k]) << ',' << format_double(report.mean_q[k])
         << ',' << format_double(report.mean_x[k]);
      if (report.two_peak) {
        os << ',' << format_double(report.mass_peak_a[k]) << ','
           << format_double(report.mass_peak_b[k]);
      }
      os << "\n";
    }
  }
  write_field_csv(dir / "conditional_given_a.csv", report.conditional_given_a);
  write_field_csv(dir / "conditional_given_b.csv", report.conditional_given_b);

  std::ofstream os(dir / "summary.txt");
  if (!os) throw IoError("cannot open summary.txt for writing");
  os << "softening = " << format_double(report.softening_used) << "\n"
     << "two_peak = " << (report.two_peak ? "true" : "false") << "\n"
     << "closest_approach = " << format_double(report.closest_approach) << "\n"
     << "closest_approach_time = " << format_double(report.closest_approach_time) << "\n"
     << "initial_cov_ratio = " << format_double(report.initial_cov_ratio) << "\n"
     << "coupled_max_cov_ratio = " << format_double(report.coupled_max_cov_ratio) << "\n"
     << "conditional_contrast = " << format_double(report.conditional_contrast) << "\n";
  if (report.has_control) {
    os << "control_max_cov_ratio = " << format_double(report.control_max_cov_ratio)
       << "\n";
  }
}

}  // namespace hybens

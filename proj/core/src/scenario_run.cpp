#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hybens/field_io.hpp"
#include "hybens/scenario.hpp"

namespace hybens {

namespace {

// Exclusive ownership of the output directory for the run's duration.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".hybens.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw IoError("output directory is locked by another run (" + path_.string() + ")");
    }
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

void write_monitors_csv(const std::filesystem::path& path, const Trajectory& traj,
                        const ScenarioConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "step,t,norm,energy,clamped_mass";
  if (!traj.means.empty()) {
    for (std::size_t a = 0; a < traj.means.size(); ++a) {
      os << ",mean_" << cfg.axes[a].name << ",mom_" << cfg.axes[a].name;
    }
  }
  os << "\n";
  for (std::size_t k = 0; k < traj.step.size(); ++k) {
    os << traj.step[k] << ',' << format_double(traj.t[k]) << ','
       << format_double(traj.norm[k]) << ',' << format_double(traj.energy[k]) << ','
       << format_double(traj.clamped_mass[k]);
    for (const AxisMeans& m : traj.means) {
      os << ',' << format_double(m.coordinate[k]) << ',' << format_double(m.momentum[k]);
    }
    os << "\n";
  }
}

double observable_value(const std::string& name, const EnsembleState& state,
                        const ScenarioConfig& cfg, const HamiltonianSpec& spec) {
  if (name == "norm") return integrate(state.P);
  if (name == "energy") return evaluate(spec, state);
  auto axis_of = [&](const std::string& ax) { return cfg.axis_index(ax); };
  if (name.rfind("mean_", 0) == 0) return mean_coordinate(state, axis_of(name.substr(5)));
  if (name.rfind("var_", 0) == 0) return coordinate_variance(state, axis_of(name.substr(4)));
  if (name.rfind("mom_", 0) == 0) return momentum_mean(state, axis_of(name.substr(4)));
  if (name.rfind("cov_", 0) == 0) {
    const std::string rest = name.substr(4);
    const auto sep = rest.find('_');
    return coordinate_covariance(state, axis_of(rest.substr(0, sep)),
                                 axis_of(rest.substr(sep + 1)));
  }
  throw UsageError("unknown observable '" + name + "'");
}

void write_observables_csv(const std::filesystem::path& path, const Trajectory& traj,
                           const ScenarioConfig& cfg, const HamiltonianSpec& spec) {
  if (cfg.observables.empty()) return;
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "t";
  for (const std::string& name : cfg.observables) os << ',' << name;
  os << "\n";
  for (const EnsembleState& s : traj.snapshots) {
    os << format_double(s.t);
    for (const std::string& name : cfg.observables) {
      os << ',' << format_double(observable_value(name, s, cfg, spec));
    }
    os << "\n";
  }
}

void write_snapshots(const std::filesystem::path& dir, const Trajectory& traj,
                     const ScenarioConfig& cfg) {
  if (cfg.snapshot_stride <= 0) return;
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    const long step_no = traj.snapshot_steps[k];
    const EnsembleState& s = traj.snapshots[k];
    write_field_csv(dir / (std::to_string(step_no) + "_P.csv"), s.P);
    write_field_csv(dir / (std::to_string(step_no) + "_S.csv"), s.S);
    std::ofstream meta(dir / (std::to_string(step_no) + "_meta.txt"));
    if (!meta) throw IoError("cannot write snapshot metadata");
    meta << "t=" << format_double(s.t) << "\n";
  }
}

void trajectory_metrics(const Trajectory& traj, std::map<std::string, double>& metrics) {
  double norm_drift = 0.0;
  double energy_drift = 0.0;
  double clamped = 0.0;
  const double e0 = traj.energy.front();
  for (std::size_t k = 0; k < traj.step.size(); ++k) {
    if (std::isfinite(traj.norm[k])) {
      norm_drift = std::max(norm_drift, std::abs(traj.norm[k] - 1.0));
    }
    if (std::isfinite(traj.energy[k])) {
      energy_drift = std::max(energy_drift, std::abs(traj.energy[k] - e0));
    }
    clamped += traj.clamped_mass[k];
  }
  metrics["norm_drift"] = norm_drift;
  metrics["energy_drift_rel"] = energy_drift / std::max(std::abs(e0), 1e-300);
  metrics["clamped_mass_total"] = clamped;
  metrics["final_time"] = traj.t.back();
}

long default_record_every(const ScenarioConfig& cfg) {
  if (cfg.record_every > 0) return cfg.record_every;
  return std::max<long>(1, cfg.integrator.steps / 10);
}

// ---- Protocols -------------------------------------------------------------

Trajectory run_evolve(const ScenarioConfig& cfg, const HamiltonianSpec& spec,
                      std::map<std::string, double>& metrics) {
  EnsembleState state = make_state(cfg.make_grid(), cfg.initial_state, 0.0);
  Trajectory traj = evolve(spec, state, cfg.integrator, default_record_every(cfg));
  trajectory_metrics(traj, metrics);

  const bool single_peak = cfg.initial_state.peaks.size() == 1;
  if (cfg.axes.size() == 1 && single_peak) {
    const GaussianPeak& pk = cfg.initial_state.peaks.front();
    if (cfg.hamiltonian_type == HamiltonianSpec::Kind::quantum && cfg.potential.empty()) {
      // Free-packet spreading law sigma(t)^2 = s0^2 (1 + (hbar t / 2 m s0^2)^2).
      const double s0 = pk.sigma[0];
      double worst = 0.0;
      for (const EnsembleState& s : traj.snapshots) {
        const double tau = cfg.hbar * (s.t - traj.snapshots.front().t) /
                           (2.0 * cfg.mass * s0 * s0);
        const double law = s0 * s0 * (1.0 + tau * tau);
        worst = std::max(worst, std::abs(coordinate_variance(s, 0) / law - 1.0));
      }
      metrics["variance_law_rel_err"] = worst;
    }
    if (cfg.hamiltonian_type == HamiltonianSpec::Kind::classical && cfg.potential.empty() &&
        !pk.momentum.empty()) {
      // Center-of-mass transport at velocity p/m.
      const double t_final = traj.snapshots.back().t;
      const double expected = pk.mean[0] + pk.momentum[0] / cfg.mass * t_final;
      const double got = mean_coordinate(traj.snapshots.back(), 0);
      metrics["transport_error_frac"] = std::abs(got - expected) / cfg.axes[0].length();
    }
  }
  return traj;
}

void run_measurement_protocol(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                              bool write_files, std::map<std::string, double>& metrics) {
  MeasurementProtocolConfig mc;
  mc.grid = cfg.make_grid();
  int qa = -1, ca = -1;
  for (std::size_t a = 0; a < cfg.sectors.size(); ++a) {
    (cfg.sectors[a] == Sector::quantum ? qa : ca) = static_cast<int>(a);
  }
  mc.quantum_axis = qa;
  mc.classical_axis = ca;
  mc.hbar = cfg.hbar;
  mc.mass_quantum = cfg.mass_quantum;
  mc.mass_classical = cfg.mass_classical;
  mc.quantum_initial = cfg.initial_state;
  mc.pointer_sigma = cfg.pointer_sigma;
  mc.pointer_center = cfg.pointer_center;
  mc.kick = cfg.meas_kick;
  mc.pre_steps = cfg.pre_steps;
  mc.post_steps = cfg.post_steps;
  mc.integrator = cfg.integrator;

  const MeasurementReport report = run_position_measurement(mc);

  metrics["coherence_before"] = report.coherence_before;
  metrics["coherence_after"] = report.coherence_after;
  metrics["norm_change"] = std::abs(report.norm_after - report.norm_before);
  metrics["rho_excluded_mass_after"] = report.rho_after.excluded_mass;

  // Change-of-variables oracle for the pointer distribution: the after
  // marginal must be sum_q w_q P_Q(q) g(x - x0 - K q) with the analytic
  // pointer profile. Computed by direct summation, independently of the
  // 2D shift-interpolation route.
  {
    const Grid& g = *report.state_before.grid();
    const std::vector<int> quantum_axes{qa};
    const Field pq = classical_marginal(
        EnsembleState{report.state_before.P, report.state_before.S, 0.0},
        std::vector<int>{qa});
    // pq is the quantum marginal (integrate over x), on the q sub-grid.
    const Axis& q_axis = g.axis(qa);
    const Axis& x_axis = g.axis(ca);
    const double sig = report.pointer_sigma_used;
    const double norm_g = 1.0 / (sig * std::sqrt(2.0 * std::numbers::pi));
    std::vector<Axis> xaxes{x_axis};
    Field oracle(Grid::make(xaxes), 0.0);
    for (int j = 0; j < x_axis.count; ++j) {
      const double x = x_axis.coord(j);
      double acc = 0.0;
      for (int i = 0; i < q_axis.count; ++i) {
        const double q = q_axis.coord(i);
        const double u = (x - report.pointer_center - report.kick * q) / sig;
        const double wq = q_axis.spacing() *
                          (q_axis.boundary == Boundary::clamped &&
                                   (i == 0 || i == q_axis.count - 1)
                               ? 0.5
                               : 1.0);
        acc += wq * pq[i] * norm_g * std::exp(-0.5 * u * u);
      }
      oracle[j] = acc;
    }
    const double oracle_mass = integrate(oracle);
    for (double& v : oracle.values()) v /= oracle_mass;
    Field after = report.pointer_after;
    const double after_mass = integrate(after);
    for (double& v : after.values()) v /= after_mass;
    metrics["pointer_l1_err"] = l1_distance(after, oracle);

    // Uncertainty transfer: after-measurement pointer spread versus
    // sqrt(K^2 sigma_q^2 + sigma_pointer^2) on a single-peak target.
    if (cfg.initial_state.peaks.size() == 1) {
      EnsembleState dist{after, Field(after.grid(), 0.0), 0.0};
      const double measured = std::sqrt(coordinate_variance(dist, 0));
      const double sq = cfg.initial_state.peaks.front().sigma[0];
      const double expected =
          std::sqrt(report.kick * report.kick * sq * sq + sig * sig);
      metrics["sigma_transfer_rel_err"] = std::abs(measured / expected - 1.0);
    }

    // Decohered rho: diagonal must reproduce the quantum marginal.
    {
      const ConditionalDensityOperator& rho = report.rho_after;
      double l1 = 0.0;
      for (int i = 0; i < rho.n; ++i) {
        l1 += std::abs(rho.at(i, i).real() - pq[i]) * rho.weights[static_cast<std::size_t>(i)];
      }
      metrics["rho_diag_l1_err"] = l1;
    }
  }

  if (write_files) write_report(report, dir / "measurement");
}

void run_scattering_protocol(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                             bool write_files, std::map<std::string, double>& metrics) {
  ScatteringConfig sc;
  sc.grid = cfg.make_grid();
  sc.mass_quantum = cfg.mass_quantum;
  sc.mass_classical = cfg.mass_classical;
  sc.hbar = cfg.hbar;
  sc.G = cfg.gravity_G;
  sc.softening = cfg.gravity_softening;
  sc.target = cfg.target;
  sc.projectile = cfg.projectile;
  sc.integrator = cfg.integrator;
  sc.record_every = default_record_every(cfg);
  const ScatteringReport report = run_scattering(sc);

  metrics["conditional_contrast"] = report.conditional_contrast;
  metrics["initial_cov_ratio"] = report.initial_cov_ratio;
  metrics["coupled_max_cov_ratio"] = report.coupled_max_cov_ratio;
  metrics["closest_approach"] = report.closest_approach;
  metrics["norm_drift"] = report.norm_drift;
  metrics["energy_drift_rel"] = report.energy_drift_rel;
  if (report.has_control) {
    metrics["control_max_cov_ratio"] = report.control_max_cov_ratio;
  }
  if (write_files) write_report(report, dir / "scattering");
}

void run_galilean_protocol(const ScenarioConfig& cfg, const HamiltonianSpec& spec,
                           std::map<std::string, double>& metrics) {
  const GridPtr grid = cfg.make_grid();
  const auto layout = spec.layout_for(*grid);
  EnsembleState base = make_state(grid, cfg.initial_state, 0.0);

  // Boost: S gains m_a v x_a on every axis (each sector boosted by v).
  EnsembleState boosted{base.P, base.S, base.t};
  for (int a = 0; a < grid->rank(); ++a) {
    const Field coord = coordinate_field(grid, a);
    const double mv = layout.mass[static_cast<std::size_t>(a)] * cfg.boost_velocity;
    for (std::int64_t i = 0; i < boosted.S.size(); ++i) {
      boosted.S[i] += mv * coord[i];
    }
  }

  const Trajectory traj_base = evolve(spec, base, cfg.integrator, 0);
  const Trajectory traj_boost = evolve(spec, boosted, cfg.integrator, 0);
  trajectory_metrics(traj_base, metrics);

  const double t_final = traj_base.snapshots.back().t;
  const double shift = cfg.boost_velocity * t_final;
  std::vector<double> disp(static_cast<std::size_t>(grid->rank()), -shift);
  const Field translated =
      shift_interpolate(traj_base.snapshots.back().P, disp, SampleMode::density);
  metrics["boost_l1_err"] = l1_distance(traj_boost.snapshots.back().P, translated);
  metrics["boost_shift"] = shift;
}

void run_separability_protocol(const ScenarioConfig& cfg, const HamiltonianSpec& spec,
                               std::map<std::string, double>& metrics) {
  EnsembleState state = make_state(cfg.make_grid(), cfg.initial_state, 0.0);
  const double l1 = cfg.phase_quadratic, l0 = cfg.phase_linear;
  auto phase = [l0, l1](std::span<const double> q) {
    double s = 0.0;
    for (double v : q) s += l0 * v + l1 * v * v;
    return s;
  };
  metrics["separability_l1"] =
      separability_check(state, phase, spec, cfg.integrator, default_record_every(cfg));
}

void run_backreaction_protocol(const ScenarioConfig& cfg, const HamiltonianSpec& spec,
                               std::map<std::string, double>& metrics) {
  const GridPtr grid = cfg.make_grid();
  const auto layout = spec.layout_for(*grid);
  if (layout.quantum_axes.empty() ||
      layout.quantum_axes.size() == static_cast<std::size_t>(grid->rank())) {
    throw ConfigError("backreaction protocol needs both sectors");
  }
  const std::vector<int> classical = complement_axes(*grid, layout.quantum_axes);

  // Control: same Hamiltonian with the cross-sector coupling terms removed.
  std::vector<PotentialTerm> kept;
  for (const PotentialTerm& t : spec.potential().terms()) {
    if (t.kind != PotentialTerm::Kind::linear_coupling &&
        t.kind != PotentialTerm::Kind::softened_gravity) {
      kept.push_back(t);
    }
  }
  const HamiltonianSpec control = HamiltonianSpec::hybrid(
      cfg.mass_quantum, cfg.mass_classical, cfg.hbar, PotentialSpec::from_terms(kept),
      cfg.sectors);

  EnsembleState state = make_state(grid, cfg.initial_state, 0.0);
  const long rec = default_record_every(cfg);
  const Trajectory coupled = evolve(spec, state, cfg.integrator, rec);
  const Trajectory free_run = evolve(control, state, cfg.integrator, rec);
  trajectory_metrics(coupled, metrics);

  double worst = 0.0;
  for (std::size_t k = 0; k < coupled.snapshots.size(); ++k) {
    const Field a = classical_marginal(coupled.snapshots[k], classical);
    const Field b = classical_marginal(free_run.snapshots[k], classical);
    worst = std::max(worst, l1_distance(a, b));
  }
  metrics["backreaction_l1"] = worst;
}

void run_peres_terno_protocol(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                              bool write_files, std::map<std::string, double>& metrics) {
  PeresTernoParams params;
  params.mass_quantum = cfg.mass_quantum;
  params.mass_classical = cfg.mass_classical;
  params.hbar = cfg.hbar;
  params.grid = cfg.make_grid();
  params.initial = cfg.initial_state;
  params.integrator = cfg.integrator;
  params.record_every = default_record_every(cfg);
  params.k_quantum = 0.0;
  params.k_classical = 0.0;
  params.lambda = 0.0;
  for (const PotentialTerm& t : cfg.potential.terms()) {
    if (t.kind == PotentialTerm::Kind::harmonic) {
      (t.axis_a == 0 ? params.k_quantum : params.k_classical) = t.strength;
    } else if (t.kind == PotentialTerm::Kind::linear_coupling) {
      params.lambda = t.strength;
    } else {
      throw ConfigError("peres_terno protocol requires a linear force law");
    }
  }
  const PeresTernoReport report = peres_terno_benchmark(params);
  metrics["peres_rel_err"] = report.max_rel_deviation;

  if (write_files) {
    std::ofstream os(dir / "oscillator_means.csv");
    if (!os) throw IoError("cannot open oscillator_means.csv for writing");
    os << "t,q,x,pq,px,q_ode,x_ode,pq_ode,px_ode\n";
    for (std::size_t k = 0; k < report.t.size(); ++k) {
      os << format_double(report.t[k]);
      for (int c = 0; c < 4; ++c) os << ',' << format_double(report.numeric[static_cast<std::size_t>(c)][k]);
      for (int c = 0; c < 4; ++c) os << ',' << format_double(report.oracle[static_cast<std::size_t>(c)][k]);
      os << "\n";
    }
  }
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& options) {
  RunResult result;
  const auto started = std::chrono::steady_clock::now();
  try {
    const HamiltonianSpec spec = cfg.make_hamiltonian();

    if (options.dry_run) {
      // Validate construction paths without running or writing anything.
      if (cfg.protocol != ProtocolKind::scattering) {
        cfg.initial_state.validate(*cfg.make_grid());
      }
      return result;
    }

    const std::filesystem::path dir =
        options.output_directory ? *options.output_directory : cfg.output_directory;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    DirLock lock(dir);

    {
      std::ofstream os(dir / "config_resolved.cfg");
      if (!os) throw IoError("cannot write resolved config");
      os << serialize_scenario(cfg);
    }

    switch (cfg.protocol) {
      case ProtocolKind::evolve: {
        const Trajectory traj = run_evolve(cfg, spec, result.metrics);
        write_monitors_csv(dir / "monitors.csv", traj, cfg);
        write_observables_csv(dir / "observables.csv", traj, cfg, spec);
        write_snapshots(dir, traj, cfg);
        break;
      }
      case ProtocolKind::position_measurement:
        run_measurement_protocol(cfg, dir, true, result.metrics);
        break;
      case ProtocolKind::scattering:
        run_scattering_protocol(cfg, dir, true, result.metrics);
        break;
      case ProtocolKind::galilean_boost:
        run_galilean_protocol(cfg, spec, result.metrics);
        break;
      case ProtocolKind::separability:
        run_separability_protocol(cfg, spec, result.metrics);
        break;
      case ProtocolKind::backreaction:
        run_backreaction_protocol(cfg, spec, result.metrics);
        break;
      case ProtocolKind::peres_terno:
        run_peres_terno_protocol(cfg, dir, true, result.metrics);
        break;
    }

    result.metrics["runtime_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    // Embedded assertions.
    bool all_pass = true;
    for (const ScenarioCheck& check : cfg.checks) {
      std::ostringstream line;
      const auto it = result.metrics.find(check.metric);
      if (it == result.metrics.end()) {
        line << "CHECK fail " << check.metric << " (metric not produced by this protocol)";
        all_pass = false;
      } else {
        const bool ok = check.is_max ? it->second <= check.bound : it->second >= check.bound;
        line << "CHECK " << (ok ? "pass" : "fail") << " " << check.metric << " = "
             << format_double(it->second) << (check.is_max ? " <= " : " >= ")
             << format_double(check.bound);
        all_pass = all_pass && ok;
      }
      result.check_lines.push_back(line.str());
    }

    {
      std::ofstream os(dir / "summary.txt");
      if (!os) throw IoError("cannot write summary.txt");
      for (const auto& [key, value] : result.metrics) {
        os << key << " = " << format_double(value) << "\n";
      }
      for (const std::string& line : result.check_lines) os << line << "\n";
      os << (all_pass ? "RESULT pass" : "RESULT fail") << "\n";
    }
    if (!all_pass) result.exit_code = 1;
  } catch (const BlowUpError& e) {
    result.exit_code = 3;
    result.error = std::string("error reason=blow-up detail=") + e.what();
  } catch (const DomainEscapeError& e) {
    result.exit_code = 5;
    result.error = std::string("error reason=domain-escape detail=") + e.what();
  } catch (const IoError& e) {
    result.exit_code = 4;
    result.error = std::string("error reason=io detail=") + e.what();
  } catch (const std::exception& e) {
    result.exit_code = 2;
    result.error = std::string("error reason=config detail=") + e.what();
  }
  return result;
}

}  // namespace hybens

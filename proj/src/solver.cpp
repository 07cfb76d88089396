#include "cnls/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cnls/kernels.hpp"

namespace cnls {

namespace {

bool near_multiple(double t, double dt, std::size_t& step) {
  const double r = t / dt;
  const double k = std::round(r);
  step = static_cast<std::size_t>(std::max(k, 0.0));
  return std::abs(r - k) <= 1e-9 * std::max(1.0, r);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void SolverConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("solver.dt must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("solver.t_end must be >= 0");
  if (observer_stride < 1) throw std::invalid_argument("solver.observer_stride must be >= 1");
  if (nonlinear_substeps < 1) throw std::invalid_argument("solver.nonlinear_substeps must be >= 1");
  if (!(blowup_threshold > 0.0)) throw std::invalid_argument("solver.blowup_threshold must be positive");
  std::size_t k = 0;
  if (!near_multiple(t_end, dt, k)) throw std::invalid_argument("solver.t_end must be a multiple of dt");
  for (double t : snapshot_times) {
    if (t < 0.0 || t > t_end * (1.0 + 1e-12)) throw std::invalid_argument("snapshot time outside [0, t_end]");
    if (!near_multiple(t, dt, k)) throw std::invalid_argument("snapshot time " + fmt(t) + " is not a multiple of dt");
  }
}

std::size_t SolverConfig::steps() const {
  std::size_t k = 0;
  near_multiple(t_end, dt, k);
  return k;
}

void nonlinear_step(ComplexMatrix& z, const CubicNonlinearity& f, double dt, std::size_t substeps, double time) {
  if (f.empty() || dt == 0.0) return;
  const std::size_t s = std::max<std::size_t>(substeps, 1);
  if (!kernels::rk4_columns(z, f, dt / static_cast<double>(s), s))
    throw NumericalBlowup("non-finite value in the nonlinear step after t=" + fmt(time), time);
}

Field strang_step(const Field& f, const SystemSpec& spec, double dt, std::size_t substeps) {
  Field out = f;
  const FreePropagator half(f.grid, spec.masses, 0.5 * dt);
  half.apply(out.values);
  nonlinear_step(out.values, spec.nonlinearity, dt, substeps, f.time);
  half.apply(out.values);
  out.time = f.time + dt;
  return out;
}

double a_mass(const Field& f, const HermitianForm& a) {
  const std::size_t n = f.components();
  std::vector<cplx> z(n);
  double sum = 0.0;
  for (std::size_t c = 0; c < f.values.cols(); ++c) {
    for (std::size_t j = 0; j < n; ++j) z[j] = f.values(j, c);
    sum += a.quadratic(z.data());
  }
  return sum * f.grid->dx();
}

double a_mass_rate(const Field& f, const CubicNonlinearity& nl, const HermitianForm& a) {
  const std::size_t n = f.components();
  std::vector<cplx> z(n), fz(n);
  double sum = 0.0;
  for (std::size_t c = 0; c < f.values.cols(); ++c) {
    for (std::size_t j = 0; j < n; ++j) z[j] = f.values(j, c);
    nl.evaluate_into(z.data(), fz.data());
    sum += a.im_pairing(fz.data(), z.data());
  }
  return sum * f.grid->dx();
}

Trajectory integrate(const SystemSpec& spec, const Field& u0, const SolverConfig& config,
                     const std::vector<Observer>& observers) {
  config.validate();
  spec.validate();
  u0.validate();
  if (u0.components() != spec.components())
    throw std::invalid_argument("initial data has " + std::to_string(u0.components()) + " components, system has " +
                                std::to_string(spec.components()));

  Trajectory traj;
  if (!config.skip_structural_checks) {
    const auto gauge = check_gauge_invariance(spec);
    traj.guards.gauge_checked = true;
    traj.guards.gauge_passed = gauge.passed;
    if (!gauge.passed) throw StructuralViolation("system fails the gauge (mass-resonance) condition");
  }
  traj.guards.wrap = check_no_wrap(u0, spec.masses, config.t_end);
  if (!traj.guards.wrap.ok && config.wrap_policy == WrapPolicy::refuse)
    throw WrapViolation("no-wrap criterion violated: dispersive reach " + fmt(traj.guards.wrap.reach) +
                            " >= L = " + fmt(traj.guards.wrap.half_length),
                        traj.guards.wrap);

  const std::size_t n_steps = config.steps();
  std::vector<std::size_t> snapshot_steps;
  for (double t : config.snapshot_times) {
    std::size_t k = 0;
    near_multiple(t, config.dt, k);
    snapshot_steps.push_back(k);
  }
  std::sort(snapshot_steps.begin(), snapshot_steps.end());
  snapshot_steps.erase(std::unique(snapshot_steps.begin(), snapshot_steps.end()), snapshot_steps.end());

  traj.l2.resize(spec.components());
  double last_good = u0.time;
  auto record = [&](const Field& f, bool observe, bool snapshot) {
    if (observe) {
      const auto nm = norms(f, spec.masses);
      const double qa = spec.certificate ? a_mass(f, *spec.certificate) : 0.0;
      auto bad = [&](double v) { return !std::isfinite(v) || std::abs(v) > config.blowup_threshold; };
      bool blown = bad(nm.linf) || bad(nm.h1) || bad(nm.weighted) || bad(qa);
      for (double v : nm.l2) blown = blown || bad(v);
      if (blown) throw NumericalBlowup("observable exceeded " + fmt(config.blowup_threshold) + " at t=" +
                                           fmt(f.time) + "; last good time " + fmt(last_good),
                                       last_good);
      last_good = f.time;
      traj.times.push_back(f.time);
      traj.linf.push_back(nm.linf);
      for (std::size_t j = 0; j < nm.l2.size(); ++j) traj.l2[j].push_back(nm.l2[j]);
      traj.h1.push_back(nm.h1);
      traj.xweighted.push_back(nm.weighted);
      if (spec.certificate) traj.a_mass.push_back(qa);
      for (const auto& obs : observers) obs(f);
    }
    if (snapshot) traj.snapshots.push_back(f);
  };

  Field f = u0;
  const double t0 = u0.time;
  std::size_t next_snap = 0;
  auto snapshot_due = [&](std::size_t step) {
    return next_snap < snapshot_steps.size() && snapshot_steps[next_snap] == step;
  };
  {
    const bool snap = snapshot_due(0);
    if (snap) ++next_snap;
    record(f, true, snap);
  }

  // Consecutive half steps between sync points are fused into one full U(dt).
  const FreePropagator half(f.grid, spec.masses, 0.5 * config.dt);
  const FreePropagator full(f.grid, spec.masses, config.dt);
  bool open = false;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    if (!open) half.apply(f.values);
    nonlinear_step(f.values, spec.nonlinearity, config.dt, config.nonlinear_substeps, last_good);
    f.time = t0 + static_cast<double>(step) * config.dt;
    const bool observe = step % config.observer_stride == 0 || step == n_steps;
    const bool snap = snapshot_due(step);
    if (observe || snap) {
      half.apply(f.values);
      open = false;
      if (snap) ++next_snap;
      record(f, observe, snap);
    } else {
      full.apply(f.values);
      open = true;
    }
  }
  traj.guards.final_aliasing = aliasing_fraction(f);
  return traj;
}

InitialKind parse_initial_kind(const std::string& name) {
  if (name == "gaussian") return InitialKind::gaussian;
  if (name == "sech") return InitialKind::sech;
  if (name == "file") return InitialKind::file;
  throw std::invalid_argument("unknown initial data kind '" + name + "' (gaussian, sech, file)");
}

std::string to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::gaussian: return "gaussian";
    case InitialKind::sech: return "sech";
    case InitialKind::file: return "file";
  }
  return "?";
}

Field make_initial_data(InitialKind kind, std::span<const cplx> amplitudes, double width, GridPtr grid) {
  if (!(width > 0.0) || !std::isfinite(width)) throw std::invalid_argument("initial data width must be positive");
  if (kind == InitialKind::file) throw std::invalid_argument("file initial data is read with load_initial_data");
  if (amplitudes.empty()) throw std::invalid_argument("initial data needs at least one amplitude");
  Field f = zero_field(grid, amplitudes.size());
  const auto x = grid->positions();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double y = x[k] / width;
    const double p = kind == InitialKind::gaussian ? std::exp(-0.5 * y * y) : 1.0 / std::cosh(y);
    for (std::size_t j = 0; j < amplitudes.size(); ++j) f.values(j, k) = amplitudes[j] * p;
  }
  return f;
}

Field load_initial_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open initial data file " + path.string());
  return read_field(in);
}

void rescale_to_epsilon(Field& f, double eps) {
  if (!(eps >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  const double cur = epsilon_norm(f);
  if (!(cur > 0.0)) throw std::invalid_argument("cannot rescale a zero field");
  for (cplx& v : f.values.data()) v *= eps / cur;
}

}  // namespace cnls

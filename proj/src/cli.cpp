#include "cnls/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "cnls/asymptotics.hpp"
#include "cnls/kernels.hpp"
#include "cnls/solver.hpp"
#include "cnls/spectral.hpp"

namespace fs = std::filesystem;

namespace cnls::cli {

namespace {

// Raised for everything that maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kDemos = {"example21", "example22", "single"};

// ---- configuration --------------------------------------------------------------------

const std::map<std::string, std::set<std::string>> kSchema = {
    {"system", {"builtin", "lambda", "mu", "masses", "file", "certificate"}},
    {"grid", {"L", "n"}},
    {"solver",
     {"dt", "t_end", "observer_stride", "nonlinear_substeps", "wrap_policy", "snapshot_every",
      "skip_structural_checks", "blowup_threshold"}},
    {"data", {"kind", "amplitudes", "width", "epsilon", "file"}},
    {"analysis",
     {"t0", "ds", "s_end", "ds_extend", "extend_samples", "max_columns", "fit_window", "sphere_samples", "gamma",
      "crop"}},
    {"check", {"require"}},
    {"seed", {}},
};

std::string canonical_builtin(const std::string& name) {
  if (name == "example_2_1") return "example21";
  if (name == "example_2_2") return "example22";
  return name;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double num(const json& j, const char* section, const char* key) {
  const auto& v = j.at(section).at(key);
  if (!v.is_number()) throw ConfigError(std::string(section) + "." + key + " must be a number");
  return v.get<double>();
}

std::size_t count(const json& j, const char* section, const char* key) {
  const auto& v = j.at(section).at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string(section) + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t seed_of(const json& cfg) {
  const auto& v = cfg.at("seed");
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("seed must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<cplx> complex_array(const json& j, const std::string& what) {
  std::vector<cplx> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ConfigError(what + " must be a list");
  for (const auto& v : j) out.push_back(complex_from_json(v));
  return out;
}

SystemSpec build_system(const json& cfg) {
  const auto& s = cfg.at("system");
  if (s.contains("file") && s.at("file").is_string() && !s.at("file").get<std::string>().empty())
    return system_from_json(read_json_file(s.at("file").get<std::string>()));
  if (!s.at("builtin").is_string()) throw ConfigError("system.builtin must be a string");
  std::vector<cplx> params = complex_array(s.value("lambda", json()), "system.lambda");
  const auto mu = complex_array(s.value("mu", json()), "system.mu");
  params.insert(params.end(), mu.begin(), mu.end());
  std::vector<double> masses;
  if (s.contains("masses") && !s.at("masses").is_null()) masses = s.at("masses").get<std::vector<double>>();
  return builtin_example(s.at("builtin").get<std::string>(), params, masses);
}

SolverConfig solver_config(const json& cfg) {
  SolverConfig sc;
  sc.dt = num(cfg, "solver", "dt");
  sc.t_end = num(cfg, "solver", "t_end");
  sc.observer_stride = count(cfg, "solver", "observer_stride");
  sc.nonlinear_substeps = count(cfg, "solver", "nonlinear_substeps");
  sc.blowup_threshold = num(cfg, "solver", "blowup_threshold");
  sc.skip_structural_checks = cfg.at("solver").at("skip_structural_checks").get<bool>();
  const auto policy = cfg.at("solver").at("wrap_policy").get<std::string>();
  if (policy == "refuse") sc.wrap_policy = WrapPolicy::refuse;
  else if (policy == "warn") sc.wrap_policy = WrapPolicy::warn;
  else throw ConfigError("solver.wrap_policy must be 'refuse' or 'warn'");
  const double every = num(cfg, "solver", "snapshot_every");
  if (!(every > 0.0)) throw ConfigError("solver.snapshot_every must be positive");
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * every;
    if (t > sc.t_end * (1.0 + 1e-12)) break;
    sc.snapshot_times.push_back(t);
  }
  if (sc.snapshot_times.empty() || std::abs(sc.snapshot_times.back() - sc.t_end) > 1e-9 * std::max(1.0, sc.t_end))
    sc.snapshot_times.push_back(sc.t_end);
  sc.validate();
  return sc;
}

}  // namespace

json default_config(const std::string& builtin) {
  const std::string name = canonical_builtin(builtin);
  json lambda = json::array({"-i", "-i"});
  json mu = json::array({"1", "1"});
  double eps = 0.1;
  if (name == "example22") {
    lambda = json::array();
    mu = json::array({"1", "1", "1", "3"});
  } else if (name == "single") {
    lambda = json::array({"-i"});
    mu = json::array();
    eps = 0.05;
  }
  return {
      {"system",
       {{"builtin", name}, {"lambda", lambda}, {"mu", mu}, {"masses", json::array()}, {"file", nullptr},
        {"certificate", "auto"}}},
      {"grid", {{"L", 600.0}, {"n", 16384}}},
      {"solver",
       {{"dt", 0.01},
        {"t_end", 100.0},
        {"observer_stride", 10},
        {"nonlinear_substeps", 1},
        {"wrap_policy", "refuse"},
        {"snapshot_every", 10.0},
        {"skip_structural_checks", false},
        {"blowup_threshold", 1e6}}},
      {"data", {{"kind", "gaussian"}, {"amplitudes", nullptr}, {"width", 1.0}, {"epsilon", eps}, {"file", nullptr}}},
      {"analysis",
       {{"t0", 10.0},
        {"ds", 1e-3},
        {"s_end", 1e4},
        {"ds_extend", 0.05},
        {"extend_samples", 1000},
        {"max_columns", 257},
        {"fit_window", nullptr},
        {"sphere_samples", 20000},
        {"gamma", 0.05},
        {"crop", 1e-6}}},
      {"check", {{"require", "sdge"}}},
      {"seed", 0},
  };
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("--set: malformed key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void validate_config(const json& config) {
  if (!config.is_object()) throw std::invalid_argument("configuration must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    const auto it = kSchema.find(key);
    if (it == kSchema.end()) throw std::invalid_argument("unknown configuration section '" + key + "'");
    if (it->second.empty()) continue;
    if (!value.is_object()) throw std::invalid_argument("configuration section '" + key + "' must be an object");
    for (const auto& [sub, v] : value.items()) {
      (void)v;
      if (!it->second.count(sub)) throw std::invalid_argument("unknown configuration key '" + key + "." + sub + "'");
    }
  }
  for (const auto& [key, fields] : kSchema) {
    if (!config.contains(key)) throw std::invalid_argument("configuration is missing '" + key + "'");
    for (const auto& f : fields)
      if (!config.at(key).contains(f)) throw std::invalid_argument("configuration is missing '" + key + "." + f + "'");
  }
  try {
    const double L = num(config, "grid", "L");
    const auto n = count(config, "grid", "n");
    if (!(L > 0.0)) throw std::invalid_argument("grid.L must be positive");
    if (n < 16 || (n & (n - 1)) != 0) throw std::invalid_argument("grid.n must be a power of two >= 16");
    solver_config(config);
    const auto& d = config.at("data");
    parse_initial_kind(d.at("kind").get<std::string>());
    if (!(d.at("width").get<double>() > 0.0)) throw std::invalid_argument("data.width must be positive");
    if (!d.at("epsilon").is_null() && !(d.at("epsilon").get<double>() >= 0.0))
      throw std::invalid_argument("data.epsilon must be >= 0 or null");
    if (!(num(config, "analysis", "t0") >= 1.0)) throw std::invalid_argument("analysis.t0 must be >= 1");
    if (!(num(config, "analysis", "ds") > 0.0) || !(num(config, "analysis", "ds_extend") > 0.0))
      throw std::invalid_argument("analysis step sizes must be positive");
    if (!(num(config, "analysis", "s_end") >= 100.0)) throw std::invalid_argument("analysis.s_end must be >= 100");
    if (count(config, "analysis", "extend_samples") < 10) throw std::invalid_argument("analysis.extend_samples must be >= 10");
    if (count(config, "analysis", "max_columns") < 3) throw std::invalid_argument("analysis.max_columns must be >= 3");
    if (count(config, "analysis", "sphere_samples") < 1000)
      throw std::invalid_argument("analysis.sphere_samples must be >= 1000");
    const auto& fw = config.at("analysis").at("fit_window");
    if (!fw.is_null() && !(fw.is_array() && fw.size() == 2 && fw[0].is_number() && fw[1].is_number() &&
                           fw[0].get<double>() < fw[1].get<double>()))
      throw std::invalid_argument("analysis.fit_window must be null or [log_t_min, log_t_max]");
    const auto req = config.at("check").at("require").get<std::string>();
    if (req != "sdge" && req != "decay") throw std::invalid_argument("check.require must be 'sdge' or 'decay'");
    seed_of(config);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("configuration type error: ") + e.what());
  }
}

namespace {

// ---- output directories --------------------------------------------------------------

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !overwrite)
      throw ConfigError("output directory " + dir.string() + " is not empty (use --overwrite)");
  }
  fs::create_directories(dir);
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string snapshot_name(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "u_t%010.4f.dat", t);
  return buf;
}

// ---- check ----------------------------------------------------------------------------

struct CheckOutcome {
  json report;
  int code = exit_ok;
  bool gauge_passed = false;
  std::optional<Certification> certification;
};

CheckOutcome run_check(const json& cfg, SystemSpec& spec) {
  CheckOutcome out;
  const std::uint64_t seed = seed_of(cfg);
  const auto gauge = check_gauge_invariance(spec, 1e-9, seed);
  out.gauge_passed = gauge.passed;
  out.report["gauge"] = gauge_to_json(gauge, spec);
  const std::string require = cfg.at("check").at("require").get<std::string>();
  out.report["require"] = require;
  if (!gauge.passed) {
    out.report["system"] = system_to_json(spec);
    out.report["classification"] = "gauge_failure";
    out.report["passed"] = false;
    out.code = exit_structural;
    return out;
  }

  SphereSearchOptions opts;
  opts.n_samples = count(cfg, "analysis", "sphere_samples");
  opts.seed = seed;
  const auto& cert_cfg = cfg.at("system").at("certificate");
  std::string source;
  if (cert_cfg.is_object()) {
    spec.certificate = certificate_from_json(cert_cfg, spec.components());
    source = "config";
  } else if (cert_cfg.is_string() && cert_cfg.get<std::string>() == "identity") {
    spec.certificate = HermitianForm::identity(spec.components());
    source = "identity";
  } else if (cert_cfg.is_string() && cert_cfg.get<std::string>() == "auto") {
    if (spec.certificate) {
      source = "system";
    } else {
      const auto mode = require == "decay" ? CertificateMode::decay : CertificateMode::sdge;
      spec.certificate = find_diagonal_certificate(spec.nonlinearity, mode, opts);
      source = "diagonal_search";
    }
  } else {
    throw ConfigError("system.certificate must be 'auto', 'identity' or a certificate object");
  }
  out.report["certificate_source"] = source;
  out.report["system"] = system_to_json(spec);
  if (!spec.certificate) {
    out.report["classification"] = "no_certificate_found";
    out.report["passed"] = false;
    out.code = exit_structural;
    return out;
  }
  const auto cert = certify_conditions(spec.nonlinearity, *spec.certificate, opts);
  out.certification = cert;
  out.report["certification"] = certification_to_json(cert);
  out.report["classification"] = to_string(cert.classification);
  const bool ok = require == "decay" ? cert.classification == Classification::strictly_dissipative
                                     : cert.classification != Classification::violated;
  out.report["passed"] = ok;
  out.code = ok ? exit_ok : exit_structural;
  return out;
}

// ---- simulate -------------------------------------------------------------------------

Field initial_field(const json& cfg, std::size_t components) {
  const auto& d = cfg.at("data");
  const auto kind = parse_initial_kind(d.at("kind").get<std::string>());
  Field f;
  if (kind == InitialKind::file) {
    if (!d.at("file").is_string()) throw ConfigError("data.file is required for file initial data");
    f = load_initial_data(d.at("file").get<std::string>());
    if (f.components() != components) throw ConfigError("initial data file has the wrong number of components");
  } else {
    auto amps = complex_array(d.at("amplitudes"), "data.amplitudes");
    if (amps.empty()) amps.assign(components, cplx(1.0, 0.0));
    if (amps.size() != components) throw ConfigError("data.amplitudes needs one entry per component");
    const auto grid = make_grid(num(cfg, "grid", "L"), count(cfg, "grid", "n"));
    f = make_initial_data(kind, amps, d.at("width").get<double>(), grid);
  }
  if (!d.at("epsilon").is_null()) {
    const double eps = d.at("epsilon").get<double>();
    if (eps == 0.0) {
      for (cplx& v : f.values.data()) v = 0.0;
    } else {
      rescale_to_epsilon(f, eps);
    }
  }
  return f;
}

void write_linf_plot(const fs::path& dir, const Trajectory& traj) {
  {
    std::ofstream dat(dir / "linf.dat");
    dat << std::setprecision(std::numeric_limits<double>::max_digits10) << "# t linf\n";
    for (std::size_t i = 0; i < traj.size(); ++i) dat << traj.times[i] << ' ' << traj.linf[i] << '\n';
  }
  const double t1 = traj.times.back();
  const double a1 = traj.linf.back();
  const double c_free = t1 > 0.0 ? a1 * std::sqrt(t1) : a1;
  const double c_log = t1 > 1.0 ? c_free * std::sqrt(std::log(t1)) : c_free;
  std::ofstream gp(dir / "linf.gp");
  gp << "# gnuplot linf.gp\n"
     << "set terminal pngcairo size 900,600\n"
     << "set output 'linf.png'\n"
     << "set logscale xy\n"
     << "set xlabel 't'\n"
     << "set ylabel '||u(t)||_inf'\n"
     << "set key top right\n"
     << "plot 'linf.dat' using 1:2 with lines lw 2 title 'simulation', \\\n"
     << "     [1:] " << std::setprecision(10) << c_free << "*x**(-0.5) dt 2 title 'C t^{-1/2}', \\\n"
     << "     [2:] " << c_log << "*x**(-0.5)/sqrt(log(x)) dt 3 title 'C t^{-1/2}(log t)^{-1/2}'\n";
}

json a_mass_summary(const Trajectory& traj) {
  if (traj.a_mass.empty()) return nullptr;
  const double q0 = traj.a_mass.front();
  double drift = 0.0, max_inc = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.a_mass.size(); ++i) {
    drift = std::max(drift, std::abs(traj.a_mass[i] - q0));
    if (i > 0) max_inc = std::max(max_inc, traj.a_mass[i] - traj.a_mass[i - 1]);
  }
  return {{"initial", q0},
          {"final", traj.a_mass.back()},
          {"relative_drift", q0 != 0.0 ? drift / std::abs(q0) : drift},
          {"max_increase", traj.a_mass.size() > 1 ? max_inc : 0.0},
          {"monotone_nonincreasing", traj.a_mass.size() < 2 || max_inc <= 1e-10}};
}

struct SimulateArgs {
  fs::path out;
  bool overwrite = false;
  bool force = false;
};

int cmd_simulate(const json& cfg, const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  prepare_output_dir(args.out, args.overwrite);
  SystemSpec spec = build_system(cfg);
  auto check = run_check(cfg, spec);
  write_json_file(args.out / "check.json", check.report);
  if (check.code != exit_ok && !args.force) {
    err << "structural check failed (" << check.report["classification"].get<std::string>()
        << "); see check.json or rerun with --force\n";
    return check.code;
  }
  SolverConfig sc = solver_config(cfg);
  if (!check.gauge_passed) sc.skip_structural_checks = true;
  const Field u0 = initial_field(cfg, spec.components());

  json manifest;
  manifest["config"] = cfg;
  manifest["system"] = system_to_json(spec);
  json run;
  run["epsilon"] = epsilon_norm(u0);
  run["forced"] = args.force && check.code != exit_ok;
  write_json_file(args.out / "system.json", manifest["system"]);

  Trajectory traj;
  try {
    traj = integrate(spec, u0, sc);
  } catch (const NumericalBlowup& e) {
    run["status"] = "blowup";
    run["error"] = e.what();
    run["last_good_time"] = e.time();
    manifest["run"] = run;
    write_json_file(args.out / "manifest.json", manifest);
    throw;
  } catch (const WrapViolation& e) {
    run["status"] = "wrap_violation";
    run["error"] = e.what();
    run["reach"] = e.check().reach;
    manifest["run"] = run;
    write_json_file(args.out / "manifest.json", manifest);
    throw;
  }

  {
    std::ofstream csv(args.out / "trajectory.csv");
    write_trajectory_csv(csv, traj);
  }
  fs::create_directories(args.out / "snapshots");
  json snaps = json::array();
  for (const auto& f : traj.snapshots) {
    const std::string name = "snapshots/" + snapshot_name(f.time);
    std::ofstream s(args.out / name);
    write_field(s, f);
    snaps.push_back({{"t", f.time}, {"file", name}});
  }
  {
    std::ofstream s(args.out / "final.dat");
    write_field(s, traj.snapshots.back());
  }
  write_linf_plot(args.out, traj);

  double l2_first = 0.0, l2_last = 0.0;
  for (const auto& series : traj.l2) {
    l2_first += series.front() * series.front();
    l2_last += series.back() * series.back();
  }
  run["status"] = "ok";
  run["snapshots"] = snaps;
  run["final"] = "final.dat";
  run["trajectory"] = "trajectory.csv";
  run["guards"] = {{"gauge_checked", traj.guards.gauge_checked},
                   {"gauge_passed", traj.guards.gauge_passed},
                   {"wrap_reach", traj.guards.wrap.reach},
                   {"wrap_half_length", traj.guards.wrap.half_length},
                   {"wrap_ok", traj.guards.wrap.ok},
                   {"final_aliasing_fraction", traj.guards.final_aliasing}};
  run["a_mass"] = a_mass_summary(traj);
  run["growth_flagged"] = l2_last > l2_first * (1.0 + 1e-6);
  run["linf_final"] = traj.linf.back();
  manifest["run"] = run;
  write_json_file(args.out / "manifest.json", manifest);
  out << "simulate: " << traj.size() << " observations to t=" << traj.times.back() << ", ||u||_inf="
      << fixed(traj.linf.back()) << (run["growth_flagged"].get<bool>() ? " (growth flagged)" : "") << " -> "
      << args.out.string() << '\n';
  return exit_ok;
}

// ---- analyze --------------------------------------------------------------------------

struct TrajectoryColumns {
  std::vector<double> t, linf, xweighted;
};

TrajectoryColumns read_trajectory_columns(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing " + path.string());
  TrajectoryColumns out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() < 3) throw ConfigError("malformed row in " + path.string());
    out.t.push_back(std::stod(cells.front()));
    out.linf.push_back(std::stod(cells[1]));
    out.xweighted.push_back(std::stod(cells.back()));
  }
  return out;
}

int cmd_analyze(const fs::path& dir, const std::vector<std::string>& sets, bool overwrite, std::ostream& out,
                json* report_out = nullptr) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("no simulate outputs in " + dir.string() + " (manifest.json missing)");
  const json manifest = read_json_file(manifest_path);
  if (!manifest.contains("run") || manifest["run"].value("status", "") != "ok")
    throw ConfigError("run in " + dir.string() + " did not complete");
  if (fs::exists(dir / "analysis.json") && !overwrite)
    throw ConfigError("analysis outputs already present in " + dir.string() + " (use --overwrite)");
  json cfg = manifest.at("config");
  for (const auto& s : sets) apply_override(cfg, s);
  validate_config(cfg);
  const SystemSpec spec = system_from_json(manifest.at("system"));
  const auto& a = cfg.at("analysis");
  const double t0 = a.at("t0").get<double>();

  std::vector<Field> snaps;
  for (const auto& s : manifest["run"].at("snapshots")) {
    if (s.at("t").get<double>() < t0 * (1.0 - 1e-12)) continue;
    std::ifstream in(dir / s.at("file").get<std::string>());
    if (!in) throw ConfigError("missing snapshot " + s.at("file").get<std::string>());
    snaps.push_back(read_field(in));
  }
  if (snaps.size() < 2) throw ConfigError("need at least two snapshots at t >= t0 for the analysis");

  ProfileSeriesOptions po;
  po.t_min = t0;
  po.crop_relative = a.at("crop").get<double>();
  const auto ps = build_profile_series(snaps, spec.masses, po);
  const auto dev = compare_pde_ode(ps, spec, a.at("ds").get<double>());
  {
    std::ofstream csv(dir / "deviation.csv");
    write_deviation_csv(csv, dev);
  }

  // Reduced extension from the first profile.
  const auto [peak, peak_col] = max_abs_column(ps.values.front());
  const auto cols = subsample_columns(ps.xi.size(), a.at("max_columns").get<std::size_t>(), peak_col);
  ComplexMatrix alpha0(spec.components(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t j = 0; j < spec.components(); ++j) alpha0(j, c) = ps.values.front()(j, cols[c]);
  const double s0 = std::log(ps.times.front());
  const double s_end = a.at("s_end").get<double>();
  const auto samples = uniform_samples(s0, s_end, a.at("extend_samples").get<std::size_t>());
  const auto series = integrate_reduced(alpha0, spec.nonlinearity, s0, s_end, a.at("ds_extend").get<double>(), samples);
  const auto log_a = reduced_log_amplitude(series);
  std::vector<double> s_values;
  for (const auto& st : series) s_values.push_back(st.s);
  FitWindow window{s_end / 10.0, s_end};
  if (!a.at("fit_window").is_null()) window = {a.at("fit_window")[0].get<double>(), a.at("fit_window")[1].get<double>()};
  const auto fit = fit_decay_log(s_values, log_a, window);

  const HermitianForm form = spec.certificate ? *spec.certificate : HermitianForm::identity(spec.components());
  SphereSearchOptions opts;
  opts.n_samples = a.at("sphere_samples").get<std::size_t>();
  opts.seed = seed_of(cfg);
  const auto cert = certify_conditions(spec.nonlinearity, form, opts);
  const auto opt = optimality_check(series, form, cert.bounds.c_star);

  {
    std::ofstream dat(dir / "reduced.dat");
    dat << std::setprecision(std::numeric_limits<double>::max_digits10)
        << "# s log(t^{-1/2} max |alpha|) s*(alpha.A alpha at the peak frequency)\n";
    std::vector<cplx> z(spec.components());
    for (std::size_t i = 0; i < series.size(); ++i) {
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = series[i].alpha(j, opt.xi_index);
      dat << series[i].s << ' ' << log_a[i] << ' ' << series[i].s * form.quadratic(z.data()) << '\n';
    }
    std::ofstream gp(dir / "reduced.gp");
    gp << "# gnuplot reduced.gp\n"
       << "set terminal pngcairo size 900,600\n"
       << "set output 'reduced.png'\n"
       << "set logscale x\n"
       << "set xlabel 's = log t'\n"
       << "set ylabel 's (alpha . A alpha)'\n"
       << "plot 'reduced.dat' using 1:3 with lines lw 2 title 'reduced profile', " << std::setprecision(10)
       << opt.floor << " dt 2 title 'optimality floor'\n";
    std::ofstream dgp(dir / "deviation.gp");
    dgp << "# gnuplot deviation.gp\n"
        << "set terminal pngcairo size 900,600\n"
        << "set output 'deviation.png'\n"
        << "set datafile separator ','\n"
        << "set xlabel 't'\n"
        << "plot 'deviation.csv' using 1:2 with linespoints title 'max |alpha_pde - alpha_ode|', \\\n"
        << "     'deviation.csv' using 1:3 with lines title 'max |alpha_pde|'\n";
  }

  json pde_fit = nullptr;
  const auto traj = read_trajectory_columns(dir / "trajectory.csv");
  try {
    const double lo = std::log(std::max(t0, 2.0));
    pde_fit = fit_to_json(fit_decay(traj.t, traj.linf, {lo, std::numeric_limits<double>::infinity()}));
  } catch (const std::invalid_argument& e) {
    pde_fit = {{"skipped", e.what()}};
  }

  // Diagnostic only: sup_t <t>^{-gamma} ||x U(-t) u(t)||.
  const double gamma = a.at("gamma").get<double>();
  double weighted = 0.0;
  for (std::size_t i = 0; i < traj.t.size(); ++i)
    weighted = std::max(weighted, std::pow(1.0 + traj.t[i] * traj.t[i], -0.5 * gamma) * traj.xweighted[i]);
  json report;
  report["weighted_norm"] = {{"gamma", gamma}, {"sup_scaled", weighted}};
  report["deviation"] = {{"t_first", dev.t.front()},
                         {"t_last", dev.t.back()},
                         {"first", dev.deviation.size() > 1 ? dev.deviation[1] : dev.deviation.front()},
                         {"last", dev.deviation.back()},
                         {"max", *std::max_element(dev.deviation.begin(), dev.deviation.end())},
                         {"max_alpha_last", dev.max_alpha.back()},
                         {"relative_last", dev.max_alpha.back() > 0.0 ? dev.deviation.back() / dev.max_alpha.back() : 0.0},
                         {"xi_points", ps.xi.size()}};
  report["extension"] = {{"s0", s0},
                         {"s_end", s_end},
                         {"ds", a.at("ds_extend")},
                         {"columns", cols.size()},
                         {"samples", series.size()}};
  report["fit"] = fit_to_json(fit);
  report["pde_linf_fit"] = pde_fit;
  report["certification"] = certification_to_json(cert);
  report["optimality"] = {{"liminf_estimate", opt.liminf_estimate},
                          {"floor", opt.floor},
                          {"passed", opt.passed},
                          {"xi", ps.xi[cols[opt.xi_index]]}};
  write_json_file(dir / "analysis.json", report);
  out << "analyze: deviation(t=" << dev.t.back() << ")=" << fixed(dev.deviation.back(), 4)
      << ", constrained q=" << fixed(fit.constrained.q, 4) << ", optimality "
      << (opt.passed ? "passed" : "failed") << '\n';
  if (report_out) *report_out = report;
  return exit_ok;
}

// ---- demo -----------------------------------------------------------------------------

void print_summary(std::ostream& out, const std::string& name, const fs::path& dir, const json& check,
                   const json& manifest, const json& analysis) {
  auto row = [&](const std::string& k, const std::string& v) {
    out << "  " << std::left << std::setw(34) << k << v << '\n';
  };
  out << "demo " << name << "  (" << dir.string() << ")\n";
  row("classification", check.value("classification", "?"));
  if (check.contains("certification")) {
    const auto& c = check["certification"];
    row("C_* / C^*", fixed(c["c_star"].get<double>()) + " / " + fixed(c["c_upper"].get<double>()));
  }
  if (check.contains("system") && check["system"].contains("certificate"))
    row("certificate", check["system"]["certificate"].dump());
  const auto& run = manifest["run"];
  row("epsilon (H^{1,0} + H^{0,1})", fixed(run["epsilon"].get<double>()));
  if (!run["a_mass"].is_null()) {
    row("Q_A relative drift", fixed(run["a_mass"]["relative_drift"].get<double>(), 3));
    row("Q_A max increase between samples", fixed(run["a_mass"]["max_increase"].get<double>(), 3));
  }
  row("||u(t_end)||_inf", fixed(run["linf_final"].get<double>()));
  const auto& d = analysis["deviation"];
  row("PDE-ODE deviation at t_end", fixed(d["last"].get<double>(), 3) + "  (max|alpha| " +
                                        fixed(d["max_alpha_last"].get<double>(), 4) + ")");
  const auto& f = analysis["fit"];
  row("fit p, q (reduced, free)", fixed(f["p"].get<double>(), 4) + ", " + fixed(f["q"].get<double>(), 4));
  row("q-hat (p fixed at 1/2)", fixed(f["constrained"]["q"].get<double>(), 4));
  const auto& o = analysis["optimality"];
  row("optimality s(alpha.A alpha) min", fixed(o["liminf_estimate"].get<double>(), 4) + " vs floor " +
                                             fixed(o["floor"].get<double>(), 4) +
                                             (o["passed"].get<bool>() ? "  passed" : "  FAILED"));
}

// ---- argument handling ----------------------------------------------------------------

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string builtin;
  std::string lambda;
  std::string mu;
  std::string masses;
  std::string system_file;
  std::optional<long long> seed;
  std::string out;
  bool overwrite = false;
  bool force = false;
};

void add_common(CLI::App* sub, CommonArgs& a, bool with_system) {
  sub->add_option("--config", a.config_file, "JSON configuration file (a run manifest also works)");
  sub->add_option("--set", a.sets, "Override a configuration value, e.g. --set solver.dt=0.005")->take_all();
  if (with_system) {
    sub->add_option("--builtin", a.builtin, "Built-in system: example21, example22, single");
    sub->add_option("--lambda", a.lambda, "Comma-separated complex lambda coefficients, e.g. -i,-i");
    sub->add_option("--mu", a.mu, "Comma-separated complex mu coefficients");
    sub->add_option("--masses", a.masses, "Comma-separated masses (free masses or the full vector)");
    sub->add_option("--system", a.system_file, "System description JSON file");
  }
  sub->add_option("--seed", a.seed, "Seed for the sphere sampling");
  sub->add_option("--out", a.out, "Output directory");
  sub->add_flag("--overwrite", a.overwrite, "Reuse a non-empty output directory");
}

json assemble_config(const CommonArgs& a, const std::string& demo = "") {
  json user = json::object();
  if (!a.config_file.empty()) {
    if (!fs::exists(a.config_file)) throw ConfigError("configuration file " + a.config_file + " not found");
    json file = read_json_file(a.config_file);
    if (file.contains("config")) file = file["config"];
    user.merge_patch(file);
  }
  if (!a.builtin.empty()) user["system"]["builtin"] = canonical_builtin(a.builtin);
  auto as_strings = [](const std::vector<cplx>& v) {
    json arr = json::array();
    for (const cplx& z : v) arr.push_back(format_complex(z));
    return arr;
  };
  if (!a.lambda.empty()) user["system"]["lambda"] = as_strings(parse_complex_list(a.lambda));
  if (!a.mu.empty()) user["system"]["mu"] = as_strings(parse_complex_list(a.mu));
  if (!a.masses.empty()) user["system"]["masses"] = parse_real_list(a.masses);
  if (!a.system_file.empty()) {
    if (!fs::exists(a.system_file)) throw ConfigError("system file " + a.system_file + " not found");
    user["system"]["file"] = a.system_file;
  }
  if (a.seed) user["seed"] = *a.seed;
  for (const auto& s : a.sets) apply_override(user, s);

  std::string name = demo.empty() ? "example21" : demo;
  if (user.contains("system") && user["system"].contains("builtin") && user["system"]["builtin"].is_string())
    name = canonical_builtin(user["system"]["builtin"].get<std::string>());
  json cfg = default_config(kDemos.count(name) ? name : "example21");
  if (!kDemos.count(name)) cfg["system"]["builtin"] = name;  // rejected later with a clear message
  cfg.merge_patch(user);
  // merge_patch drops keys set to null; those keys are nullable, not optional.
  for (const auto& [section, key] : {std::pair{"system", "file"}, {"data", "amplitudes"}, {"data", "epsilon"},
                                     {"data", "file"}, {"analysis", "fit_window"}})
    if (cfg.contains(section) && cfg[section].is_object() && !cfg[section].contains(key)) cfg[section][key] = nullptr;
  validate_config(cfg);
  return cfg;
}

// CLI11 treats a value such as "-i,-i" as an option name; glue values to
// their option so that "--lambda -i,-i" works.
std::vector<std::string> glue_values(const std::vector<std::string>& args) {
  static const std::set<std::string> valued = {"--config", "--set",    "--builtin", "--lambda", "--mu",
                                               "--masses", "--system", "--seed",    "--out"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (valued.count(args[i]) && i + 1 < args.size()) {
      out.push_back(args[i] + "=" + args[i + 1]);
      ++i;
    } else {
      out.push_back(args[i]);
    }
  }
  return out;
}

void configure_threads() {
  const char* env = std::getenv("CNLS_NUM_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("CNLS_NUM_THREADS must be a positive integer, got '") + env + "'");
  kernels::set_threads(static_cast<int>(n));
}

int dispatch(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cubic NLS systems: structural checks, simulation and asymptotic analysis", "cnls"};
  app.require_subcommand(1);
  CommonArgs check_args, sim_args, an_args, demo_args;
  std::string analyze_dir, demo_name;

  auto* check = app.add_subcommand("check", "Gauge check and dissipativity certification");
  add_common(check, check_args, true);
  auto* sim = app.add_subcommand("simulate", "Integrate the PDE and write trajectory, snapshots and manifest");
  add_common(sim, sim_args, true);
  sim->add_flag("--force", sim_args.force, "Run even if the structural check fails");
  auto* an = app.add_subcommand("analyze", "Profile analysis, reduced extension, fits and optimality");
  an->add_option("run_dir", analyze_dir, "Directory written by simulate")->required();
  an->add_option("--set", an_args.sets, "Override an analysis value, e.g. --set analysis.t0=20")->take_all();
  an->add_flag("--overwrite", an_args.overwrite, "Replace existing analysis outputs");
  auto* demo = app.add_subcommand("demo", "check -> simulate -> analyze with documented defaults");
  demo->add_option("name", demo_name, "example21, example22 or single")->required();
  add_common(demo, demo_args, false);

  std::vector<std::string> args = glue_values(raw);
  std::vector<const char*> argv{"cnls"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return exit_config;
  }
  configure_threads();

  if (check->parsed()) {
    const json cfg = assemble_config(check_args);
    SystemSpec spec = build_system(cfg);
    const auto outcome = run_check(cfg, spec);
    if (!check_args.out.empty()) {
      prepare_output_dir(check_args.out, check_args.overwrite);
      write_json_file(fs::path(check_args.out) / "check.json", outcome.report);
    }
    out << outcome.report.dump(2) << '\n';
    return outcome.code;
  }
  if (sim->parsed()) {
    const json cfg = assemble_config(sim_args);
    return cmd_simulate(cfg, {sim_args.out, sim_args.overwrite, sim_args.force}, out, err);
  }
  if (an->parsed()) return cmd_analyze(analyze_dir, an_args.sets, an_args.overwrite, out);
  if (demo->parsed()) {
    if (!kDemos.count(demo_name)) throw ConfigError("unknown demo '" + demo_name + "' (example21, example22, single)");
    if (!demo_args.builtin.empty()) throw ConfigError("demo selects its own system");
    CommonArgs a = demo_args;
    a.builtin = demo_name;
    const json cfg = assemble_config(a, demo_name);
    const fs::path dir = demo_args.out.empty() ? fs::path("demo-" + demo_name) : fs::path(demo_args.out);
    std::ostringstream quiet;
    const int rc = cmd_simulate(cfg, {dir, demo_args.overwrite, false}, quiet, err);
    if (rc != exit_ok) return rc;
    json analysis;
    cmd_analyze(dir, {}, true, quiet, &analysis);
    print_summary(out, demo_name, dir, read_json_file(dir / "check.json"), read_json_file(dir / "manifest.json"),
                  analysis);
    return exit_ok;
  }
  return exit_config;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const StructuralViolation& e) {
    err << "structural failure: " << e.what() << '\n';
    return exit_structural;
  } catch (const NumericalBlowup& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const WrapViolation& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const json::exception& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::out_of_range& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const fs::filesystem_error& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::runtime_error& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  }
}

}  // namespace cnls::cli

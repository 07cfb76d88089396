#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnls/cli.hpp"
#include "cnls/io.hpp"
#include "support.hpp"

using namespace cnls;
using namespace cnls::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cnls_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

// Small grid, short horizon, short reduced extension.
std::vector<std::string> quick() {
  return {"--set", "grid.L=100",          "--set", "grid.n=1024",           "--set", "solver.t_end=20",
          "--set", "solver.dt=0.02",      "--set", "solver.snapshot_every=5", "--set", "analysis.s_end=10000",
          "--set", "analysis.ds_extend=0.5", "--set", "analysis.extend_samples=200", "--set",
          "analysis.sphere_samples=2000", "--set", "analysis.max_columns=33"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("complex parsing") {
  CHECK(parse_complex("2") == cplx(2.0, 0.0));
  CHECK(parse_complex("-i") == cplx(0.0, -1.0));
  CHECK(parse_complex("i") == cplx(0.0, 1.0));
  CHECK(parse_complex("1+2i") == cplx(1.0, 2.0));
  CHECK(parse_complex(" -0.5-1e-3i ") == cplx(-0.5, -1e-3));
  CHECK(parse_complex("1e-3+2E+1j") == cplx(1e-3, 20.0));
  CHECK(parse_complex("(1,-2)") == cplx(1.0, -2.0));
  CHECK(parse_complex("+3i") == cplx(0.0, 3.0));
  for (const char* bad : {"", "abc", "1+", "1+2", "(1,2,3)", "2ii", "nan"})
    CHECK_THROWS_AS(parse_complex(bad), std::invalid_argument);
  for (cplx z : {cplx(0.1, -0.3), cplx(-2.0, 0.0), cplx(0.0, 1e-7), cplx(1.0 / 3.0, 2.0 / 3.0)})
    CHECK(parse_complex(format_complex(z)) == z);
  const auto l = parse_complex_list("-i,-i,(1,2), 3");
  REQUIRE(l.size() == 4);
  CHECK(l[2] == cplx(1.0, 2.0));
  CHECK(parse_real_list("1, 3.5") == std::vector<double>{1.0, 3.5});
  CHECK(complex_from_json(json::array({1.0, -1.0})) == cplx(1.0, -1.0));
  CHECK(complex_from_json(json("2-i")) == cplx(2.0, -1.0));
  CHECK_THROWS_AS(complex_from_json(json::array({1.0})), std::invalid_argument);
}

TEST_CASE("system files round trip") {
  auto spec = ex21(-1i, cplx(0.5, -2.0), 2.0, 1.0);
  const std::vector<double> k{1.0, 2.0};
  spec.certificate = HermitianForm::diagonal(k);
  const auto back = system_from_json(system_to_json(spec));
  CHECK(back.masses[1] == 3.0);
  REQUIRE(back.nonlinearity.monomials().size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& a = spec.nonlinearity.monomials()[i];
    const auto& b = back.nonlinearity.monomials()[i];
    CHECK(a.target == b.target);
    CHECK(a.factors == b.factors);
    CHECK(a.sigma == b.sigma);
    CHECK(a.coeff == b.coeff);
  }
  REQUIRE(back.certificate.has_value());
  CHECK(back.certificate->diagonal_entries() == k);

  const std::vector<cplx> e{2.0, 1i, -1i, 2.0};
  const HermitianForm full(2, e);
  const auto fb = certificate_from_json(certificate_to_json(full), 2);
  CHECK(fb.entries() == full.entries());

  const auto j = json::parse(R"({"masses": [1, 3], "monomials": [{"j": 3, "k": 1, "l": 1, "m": 1, "sigma": "+++", "coeff": [1, 0]}]})");
  CHECK_THROWS_AS(system_from_json(j), std::invalid_argument);
  CHECK_THROWS_AS(system_from_json(json::array()), std::invalid_argument);
  CHECK_THROWS_AS(certificate_from_json(json::parse(R"({"diagonal": [1]})"), 2), std::invalid_argument);
}

TEST_CASE("trajectory and deviation csv") {
  Trajectory t;
  t.times = {0.0, 1.0};
  t.linf = {1.0, 0.5};
  t.l2 = {{1.0, 1.0}, {2.0, 2.0}};
  t.h1 = {3.0, 3.0};
  t.xweighted = {4.0, 4.0};
  std::ostringstream os;
  write_trajectory_csv(os, t);
  CHECK(os.str() == "t,linf,l2_1,l2_2,h1,a_mass,xweighted\n0,1,1,2,3,nan,4\n1,0.5,1,2,3,nan,4\n");
  DeviationSeries d{{10.0}, {0.0}, {0.25}};
  std::ostringstream ds;
  write_deviation_csv(ds, d);
  CHECK(ds.str() == "t,deviation,max_alpha\n10,0,0.25\n");
}

TEST_CASE("fit report shape") {
  DecayFit f;
  f.p = 0.5;
  const auto j = fit_to_json(f);
  for (const char* key : {"c", "p", "q", "residual", "window", "constrained"}) CHECK(j.contains(key));
  for (const char* key : {"c", "q", "residual"}) CHECK(j["constrained"].contains(key));
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("config defaults, overrides and validation") {
  auto c = cli::default_config("example21");
  CHECK_NOTHROW(cli::validate_config(c));
  cli::apply_override(c, "solver.dt=0.005");
  CHECK(c["solver"]["dt"].get<double>() == 0.005);
  cli::apply_override(c, "system.lambda=[\"-i\",\"-i\"]");
  CHECK(c["system"]["lambda"].is_array());
  cli::apply_override(c, "data.kind=sech");
  CHECK(c["data"]["kind"] == "sech");
  CHECK_THROWS_AS(cli::apply_override(c, "novalue"), std::invalid_argument);
  CHECK_THROWS_AS(cli::apply_override(c, "=3"), std::invalid_argument);

  auto bad = cli::default_config("example21");
  bad["grid"]["n"] = 1000;
  CHECK_THROWS(cli::validate_config(bad));
  bad = cli::default_config("example21");
  bad["solver"]["dt"] = -1.0;
  CHECK_THROWS(cli::validate_config(bad));
  bad = cli::default_config("example21");
  bad["grid"]["typo"] = 1;
  CHECK_THROWS(cli::validate_config(bad));
  bad = cli::default_config("example21");
  bad["grid"]["L"] = 0.0;
  CHECK_THROWS(cli::validate_config(bad));
  CHECK(cli::default_config("single")["data"]["epsilon"].get<double>() == 0.05);
}

TEST_CASE("check exit codes") {
  auto ok = invoke({"check", "--builtin", "example21", "--lambda", "-i,-i", "--mu", "1,1"});
  CHECK(ok.code == 0);
  const auto report = json::parse(ok.out);
  CHECK(report["classification"] == "strictly_dissipative");
  CHECK(report["gauge"]["passed"] == true);

  auto gauge = invoke({"check", "--builtin", "example21", "--masses", "1,2", "--lambda", "-i,-i", "--mu", "1,1"});
  CHECK(gauge.code == 1);
  const auto g = json::parse(gauge.out);
  CHECK(g["classification"] == "gauge_failure");
  int failing = 0;
  for (const auto& m : g["gauge"]["monomials"]) failing += m["passed"].get<bool>() ? 0 : 1;
  CHECK(failing == 2);

  CHECK(invoke({"check", "--config", "/nonexistent/config.json"}).code == 2);
  CHECK(invoke({"check", "--builtin", "single", "--lambda", "i"}).code == 1);
  CHECK(invoke({"check", "--builtin", "example22"}).code == 0);
  CHECK(invoke({"check", "--builtin", "example22", "--set", "check.require=decay"}).code == 1);
  CHECK(invoke({"check", "--builtin", "nosuch"}).code == 2);
  CHECK(invoke({"check", "--lambda", "garbage"}).code == 2);
  CHECK(invoke({"check", "--set", "grid.n=3"}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({}).code == 2);
}

TEST_CASE("check writes its report and honours certificates") {
  TempDir dir("check");
  const auto r = invoke({"check", "--builtin", "example21", "--mu", "2,1", "--out", dir / "c"});
  CHECK(r.code == 0);
  const auto j = read_json(dir / "c/check.json");
  const auto k = j["system"]["certificate"]["diagonal"].get<std::vector<double>>();
  CHECK(k[1] / k[0] == doctest::Approx(2.0).epsilon(1e-3));
  // identity certificate cannot work for mu = (6, 1) with decay required
  CHECK(invoke({"check", "--builtin", "example21", "--mu", "6,1", "--set", "system.certificate=\"identity\"", "--set",
             "check.require=decay"})
            .code == 1);
  CHECK(invoke({"check", "--builtin", "example21", "--out", dir / "c"}).code == 2);
}

TEST_CASE("thread count from the environment") {
  setenv("CNLS_NUM_THREADS", "zero", 1);
  CHECK(invoke({"check", "--builtin", "example21"}).code == 2);
  setenv("CNLS_NUM_THREADS", "1", 1);
  CHECK(invoke({"check", "--builtin", "example21"}).code == 0);
  unsetenv("CNLS_NUM_THREADS");
}

TEST_CASE("simulate and analyze pipeline, reproducibility") {
  TempDir dir("pipeline");
  const auto a = invoke(with({"simulate", "--builtin", "example21", "--out", dir / "a"}, quick()));
  REQUIRE(a.code == 0);
  for (const char* f : {"check.json", "system.json", "trajectory.csv", "final.dat", "manifest.json", "linf.dat",
                        "linf.gp", "snapshots/u_t00020.0000.dat"})
    CHECK(fs::exists(dir.path / "a" / f));
  const auto manifest = read_json(dir / "a/manifest.json");
  CHECK(manifest["run"]["status"] == "ok");
  CHECK(manifest["run"]["a_mass"]["monotone_nonincreasing"] == true);
  CHECK(manifest["config"]["grid"]["n"] == 1024);

  const auto b = invoke(with({"simulate", "--builtin", "example21", "--out", dir / "b"}, quick()));
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a/trajectory.csv") == slurp(dir / "b/trajectory.csv"));
  const auto c = invoke({"simulate", "--config", dir / "a/manifest.json", "--out", dir / "c"});
  REQUIRE(c.code == 0);
  CHECK(slurp(dir / "a/trajectory.csv") == slurp(dir / "c/trajectory.csv"));
  CHECK(slurp(dir / "a/final.dat") == slurp(dir / "c/final.dat"));

  CHECK(invoke(with({"simulate", "--builtin", "example21", "--out", dir / "a"}, quick())).code == 2);

  const auto an = invoke({"analyze", dir / "a"});
  REQUIRE(an.code == 0);
  const auto report = read_json(dir / "a/analysis.json");
  CHECK(report["optimality"]["passed"] == true);
  CHECK(report["deviation"]["relative_last"].get<double>() < 0.1);
  CHECK(report["fit"]["constrained"].contains("q"));
  CHECK(fs::exists(dir.path / "a" / "deviation.csv"));
  CHECK(fs::exists(dir.path / "a" / "reduced.gp"));
  CHECK(invoke({"analyze", dir / "a"}).code == 2);
  CHECK(invoke({"analyze", dir / "a", "--overwrite", "--set", "analysis.t0=15"}).code == 0);
  CHECK(invoke({"analyze", dir / "missing"}).code == 2);
}

TEST_CASE("simulate refuses failing systems unless forced") {
  TempDir dir("force");
  const auto r = invoke(with({"simulate", "--builtin", "example21", "--masses", "1,2", "--out", dir / "a"}, quick()));
  CHECK(r.code == 1);
  const auto f = invoke(with({"simulate", "--builtin", "example21", "--masses", "1,2", "--force", "--out", dir / "b"},
                          quick()));
  CHECK(f.code == 0);
  CHECK(read_json(dir / "b/manifest.json")["run"]["forced"] == true);
}

TEST_CASE("numerical failures map to exit 3") {
  TempDir dir("numerical");
  const auto wrap = invoke(with({"simulate", "--builtin", "example21", "--out", dir / "w"},
                             with(quick(), {"--set", "solver.t_end=100"})));
  CHECK(wrap.code == 3);
  CHECK(read_json(dir / "w/manifest.json")["run"]["status"] == "wrap_violation");

  const auto anti = invoke(with({"simulate", "--builtin", "single", "--lambda", "i", "--force", "--out", dir / "b"},
                             with(quick(), {"--set", "data.epsilon=20", "--set", "solver.blowup_threshold=50"})));
  if (anti.code == 0) {
    CHECK(read_json(dir / "b/manifest.json")["run"]["growth_flagged"] == true);
  } else {
    CHECK(anti.code == 3);
    CHECK(read_json(dir / "b/manifest.json")["run"]["status"] == "blowup");
  }
}

TEST_CASE("free system run follows the Gaussian law") {
  TempDir dir("free");
  {
    std::ofstream sys(dir / "free.json");
    sys << R"({"masses": [1], "monomials": []})";
  }
  const auto r = invoke(with({"simulate", "--system", dir / "free.json", "--out", dir / "run", "--set",
                           "data.amplitudes=[\"1\"]"},
                          quick()));
  REQUIRE(r.code == 0);
  std::ifstream csv(dir / "run/trajectory.csv");
  std::string line;
  std::getline(csv, line);
  double a0 = 0.0;
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string t, linf;
    std::getline(ls, t, ',');
    std::getline(ls, linf, ',');
    const double tv = std::stod(t), lv = std::stod(linf);
    if (rows++ == 0) a0 = lv;
    CHECK(std::abs(lv - a0 * std::pow(1.0 + tv * tv, -0.25)) < 1e-6);
  }
  CHECK(rows > 10);
  const auto an = invoke({"analyze", dir / "run"});
  REQUIRE(an.code == 0);
  const auto report = read_json(dir / "run/analysis.json");
  CHECK(report["deviation"]["max"].get<double>() < 1e-8);
  CHECK(std::abs(report["fit"]["q"].get<double>()) < 1e-6);
}

TEST_CASE("demo names") {
  CHECK(invoke({"demo", "bogus"}).code == 2);
  CHECK(invoke({"demo"}).code == 2);
}

}  // TEST_SUITE

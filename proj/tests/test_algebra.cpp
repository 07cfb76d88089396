#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cnls/algebra.hpp"
#include "support.hpp"

using namespace cnls;
using namespace cnls::testing;

TEST_SUITE("algebra") {

TEST_CASE("evaluate: example21 at z=(1,1)") {
  const auto spec = ex21();
  const std::vector<cplx> z{1.0, 1.0};
  const auto f = spec.nonlinearity(z);
  CHECK(std::abs(f[0] - cplx(1.0, -2.0)) < 1e-14);
  CHECK(std::abs(f[1] - cplx(1.0, -2.0)) < 1e-14);
}

TEST_CASE("evaluate: example22 at z=(1,i,1,1)") {
  const auto spec = ex22();
  const std::vector<cplx> z{1.0, 1i, 1.0, 1.0};
  const auto f = spec.nonlinearity(z);
  const std::vector<cplx> expect{-1i, 1.0, -1i, 3i};
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(f[j] - expect[j]) < 1e-14);
}

TEST_CASE("evaluate: zero input and dimension mismatch") {
  const auto spec = ex22();
  const std::vector<cplx> z(4, 0.0);
  for (const auto& v : spec.nonlinearity(z)) CHECK(v == cplx(0.0));
  const std::vector<cplx> bad(3, 1.0);
  CHECK_THROWS_AS(spec.nonlinearity(bad), std::invalid_argument);
}

TEST_CASE("duplicates are summed, zero coefficients dropped") {
  std::vector<CubicMonomial> ms(3);
  for (auto& m : ms) m.sigma = parse_sigma("+-+");
  ms[0].coeff = 1.0;
  ms[1].coeff = 2.0;
  ms[2].coeff = 0.0;
  const CubicNonlinearity f(1, ms);
  CHECK(f.monomials().size() == 2);
  const std::vector<cplx> z{2.0};
  CHECK(std::abs(f(z)[0] - 24.0) < 1e-12);
}

TEST_CASE("homogeneity of degree three") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (const auto& spec : {ex21(), ex22(), ex21(-0.3i, 2.0 - 1i, 0.7, -1.5i)}) {
    for (int trial = 0; trial < 50; ++trial) {
      auto z = random_vector(rng, spec.components());
      const double c = scale(rng);
      auto zc = z;
      for (auto& v : zc) v *= c;
      const auto f = spec.nonlinearity(z);
      const auto fc = spec.nonlinearity(zc);
      for (std::size_t j = 0; j < f.size(); ++j) {
        const double want = c * c * c * std::abs(f[j]);
        CHECK(std::abs(std::abs(fc[j]) - want) <= 1e-12 * std::max(want, 1e-300));
      }
    }
  }
}

TEST_CASE("sigma strings") {
  CHECK(sigma_string(parse_sigma("+-+")) == "+-+");
  CHECK(sigma_string(parse_sigma("---")) == "---");
  CHECK_THROWS_AS(parse_sigma("+-"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sigma("+x+"), std::invalid_argument);
}

TEST_CASE("mass vector and spec validation") {
  CHECK_THROWS_AS(MassVector(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(MassVector({1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(MassVector({1.0, -2.0}), std::invalid_argument);
  SystemSpec bad{MassVector({1.0}), ex21().nonlinearity, std::nullopt};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  std::vector<CubicMonomial> ms(1);
  ms[0].factors = {0, 0, 2};
  ms[0].coeff = 1.0;
  CHECK_THROWS_AS(CubicNonlinearity(2, ms), std::invalid_argument);
}

TEST_CASE("hermitian form") {
  const std::vector<cplx> e{2.0, 1i, -1i, 2.0};
  const HermitianForm a(2, e);
  CHECK(a.lambda_min() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.lambda_max() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_FALSE(a.is_diagonal());
  CHECK_THROWS_AS(HermitianForm(2, {1.0, 1i, 1i, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(HermitianForm(2, {1.0, 2.0, 2.0, 1.0}), std::invalid_argument);
  const std::vector<double> k{1.0, 2.0};
  CHECK(HermitianForm::diagonal(k).is_diagonal());

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = random_vector(rng, 2);
    const double q = a.quadratic(z.data());
    const double n2 = std::norm(z[0]) + std::norm(z[1]);
    CHECK(q >= a.lambda_min() * n2 * (1.0 - 1e-12));
    CHECK(q <= a.lambda_max() * n2 * (1.0 + 1e-12));
  }
}

TEST_CASE("gauge: example21 with resonant and non-resonant masses") {
  const auto ok = check_gauge_invariance(ex21());
  CHECK(ok.passed);
  CHECK(ok.phase_sampling_error < 1e-10);

  const auto bad = check_gauge_invariance(ex21(-1i, -1i, 1.0, 1.0, {1.0, 2.0}));
  CHECK_FALSE(bad.passed);
  std::vector<std::size_t> failing;
  for (const auto& r : bad.monomials)
    if (!r.passed) failing.push_back(r.index);
  // conj(u1)^2 u2 in F1 and u1^3 in F2
  REQUIRE(failing.size() == 2);
  const auto& ms = ex21().nonlinearity.monomials();
  CHECK(ms[failing[0]].target == 0);
  CHECK(sigma_string(ms[failing[0]].sigma) == "--+");
  CHECK(ms[failing[1]].target == 1);
  CHECK(sigma_string(ms[failing[1]].sigma) == "+++");
  CHECK(bad.monomials[failing[1]].residual == doctest::Approx(1.0));
  CHECK(bad.phase_sampling_error > 1e-6);
}

TEST_CASE("gauge: example22 and the single equation") {
  CHECK(check_gauge_invariance(ex22()).passed);
  for (double m : {0.3, 1.0, 7.5}) CHECK(check_gauge_invariance(single(-1i, m)).passed);
}

TEST_CASE("resonance soundness on random systems") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> mass(1, 4);
  std::uniform_int_distribution<int> bit(0, 1);
  int passing = 0, failing = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 3);
    std::uniform_int_distribution<std::size_t> idx(0, n - 1);
    std::vector<double> m(n);
    for (auto& v : m) v = mass(rng);
    std::vector<CubicMonomial> monos(1 + trial % 4);
    for (auto& mono : monos) {
      mono.target = idx(rng);
      mono.factors = {idx(rng), idx(rng), idx(rng)};
      for (auto& s : mono.sigma) s = bit(rng) ? Sign::plus : Sign::minus;
      const auto c = random_vector(rng, 1);
      mono.coeff = c[0];
    }
    const SystemSpec spec{MassVector(m), CubicNonlinearity(n, monos), std::nullopt};
    const auto r = check_gauge_invariance(spec, 1e-9, static_cast<std::uint64_t>(trial));
    if (r.passed) {
      ++passing;
      CHECK(r.phase_sampling_error < 1e-10 * std::max(1.0, spec.nonlinearity.max_abs_coeff() * 100.0));
    } else {
      ++failing;
      CHECK(r.phase_sampling_error > 1e-6);
    }
  }
  CHECK(passing > 5);
  CHECK(failing > 5);
}

TEST_CASE("dissipation functional examples") {
  const auto a2 = HermitianForm::identity(2);
  const std::vector<cplx> z2{1.0, 1.0};
  CHECK(dissipation_functional(ex21().nonlinearity, a2, z2) == doctest::Approx(-4.0).epsilon(1e-14));
  const std::vector<cplx> zero{0.0, 0.0};
  CHECK(dissipation_functional(ex21().nonlinearity, a2, zero) == 0.0);
  const std::vector<cplx> z4{1.0, 1i, 1.0, 1.0};
  CHECK(std::abs(dissipation_functional(ex22().nonlinearity, HermitianForm::identity(4), z4)) < 1e-14);
  CHECK_THROWS_AS(dissipation_functional(ex21().nonlinearity, HermitianForm::identity(3), z2),
                  std::invalid_argument);
}

TEST_CASE("example21 functional equals -|z|^4 everywhere") {
  std::mt19937_64 rng(5);
  const auto a = HermitianForm::identity(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = random_vector(rng, 2);
    const double n2 = std::norm(z[0]) + std::norm(z[1]);
    CHECK(dissipation_functional(ex21().nonlinearity, a, z) == doctest::Approx(-n2 * n2).epsilon(1e-12));
  }
}

TEST_CASE("certificate symmetry under the gauge action") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const std::vector<double> kappa{1.0, 2.0, 0.5, 3.0};
  for (const auto& spec : {ex21(-1i, 0.5 - 1i, 2.0, 1.0), ex22(1.0, 2.0, -1.0, 1i)}) {
    const std::vector<double> k(kappa.begin(), kappa.begin() + static_cast<long>(spec.components()));
    const auto a = HermitianForm::diagonal(k);
    for (int trial = 0; trial < 50; ++trial) {
      auto z = random_vector(rng, spec.components());
      const double theta = angle(rng);
      auto zr = z;
      for (std::size_t j = 0; j < z.size(); ++j) zr[j] *= std::polar(1.0, spec.masses[j] * theta);
      const double g = dissipation_functional(spec.nonlinearity, a, z);
      const double gr = dissipation_functional(spec.nonlinearity, a, zr);
      CHECK(std::abs(g - gr) < 1e-10 * std::max(1.0, std::abs(g)));
    }
  }
}

TEST_CASE("certify: example21 strictly dissipative with C_* = C^* = 1") {
  const auto c = certify_conditions(ex21().nonlinearity, HermitianForm::identity(2));
  CHECK(c.classification == Classification::strictly_dissipative);
  CHECK(c.bounds.c_star == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(c.bounds.c_upper == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(c.bounds.samples_used == 20000);
}

TEST_CASE("certify: example22 conservative, single lambda=+i violated") {
  const auto c = certify_conditions(ex22().nonlinearity, HermitianForm::identity(4));
  CHECK(c.classification == Classification::conservative);
  CHECK(std::abs(c.bounds.c_star) <= 1e-12);
  CHECK(std::abs(c.bounds.max_violation) <= 1e-12);
  const auto v = certify_conditions(single(1i).nonlinearity, HermitianForm::identity(1));
  CHECK(v.classification == Classification::violated);
  CHECK(v.bounds.max_violation == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("certify: weakly dissipative and precondition") {
  // Im lambda = 0 for u2's self-interaction leaves directions with g = 0.
  const auto spec = ex21(-1i, 0.0, 0.0, 0.0);
  const auto c = certify_conditions(spec.nonlinearity, HermitianForm::identity(2));
  CHECK(c.classification == Classification::weakly_dissipative);
  SphereSearchOptions few;
  few.n_samples = 999;
  CHECK_THROWS_AS(certify_conditions(spec.nonlinearity, HermitianForm::identity(2), few), std::invalid_argument);
}

TEST_CASE("certify: bounds bracket every sample") {
  const auto spec = ex21(-1i, -0.5i, 2.0, 1.0);
  const std::vector<double> k{1.0, 2.0};
  const auto a = HermitianForm::diagonal(k);
  const auto c = certify_conditions(spec.nonlinearity, a);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    auto z = random_vector(rng, 2);
    const double r = std::sqrt(std::norm(z[0]) + std::norm(z[1]));
    for (auto& v : z) v /= r;
    const double g = dissipation_functional(spec.nonlinearity, a, z);
    CHECK(g >= -c.bounds.c_star - c.tol);
    CHECK(g <= -c.bounds.c_upper + c.tol);
  }
  CHECK(c.bounds.c_star >= c.bounds.c_upper);
}

TEST_CASE("certify: serial and parallel scans agree") {
  SphereSearchOptions par, ser;
  ser.parallel = false;
  const auto spec = ex22(1.0, 2.0, 0.5, 1i);
  const auto a = HermitianForm::identity(4);
  const auto p = certify_conditions(spec.nonlinearity, a, par);
  const auto s = certify_conditions(spec.nonlinearity, a, ser);
  CHECK(p.bounds.c_star == s.bounds.c_star);
  CHECK(p.bounds.c_upper == s.bounds.c_upper);
  CHECK(p.classification == s.classification);
}

TEST_CASE("find_diagonal_certificate") {
  const auto a = find_diagonal_certificate(ex21(-1i, -1i, 2.0, 1.0).nonlinearity, CertificateMode::decay);
  REQUIRE(a.has_value());
  const auto k = a->diagonal_entries();
  CHECK(k[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(k[1] == doctest::Approx(2.0).epsilon(1e-3));

  const auto b = find_diagonal_certificate(ex22().nonlinearity, CertificateMode::sdge);
  REQUIRE(b.has_value());
  for (double v : b->diagonal_entries()) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));

  CHECK_FALSE(find_diagonal_certificate(single(1i).nonlinearity, CertificateMode::sdge).has_value());
  CHECK_FALSE(find_diagonal_certificate(ex22().nonlinearity, CertificateMode::decay).has_value());
}

TEST_CASE("builtin examples") {
  const auto a = ex21();
  CHECK(a.components() == 2);
  CHECK(a.nonlinearity.monomials().size() == 6);
  CHECK(a.masses[1] == 3.0);
  const auto s = single(-1i);
  REQUIRE(s.nonlinearity.monomials().size() == 1);
  const auto& m = s.nonlinearity.monomials()[0];
  CHECK(m.factors == std::array<std::size_t, 3>{0, 0, 0});
  CHECK(sigma_string(m.sigma) == "+-+");
  const auto b = ex22();
  CHECK(b.components() == 4);
  CHECK(b.nonlinearity.monomials().size() == 4);
  CHECK(b.masses[3] == 3.0);
  CHECK(check_gauge_invariance(b).passed);
  const std::vector<cplx> three{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(builtin_example("example21", three), std::invalid_argument);
  CHECK_THROWS_AS(builtin_example("nope", three), std::invalid_argument);
}

}  // TEST_SUITE

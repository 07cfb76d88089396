#include "cnls/algebra.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cnls {

MassVector::MassVector(std::vector<double> masses) : m_(std::move(masses)) {
  if (m_.empty()) throw std::invalid_argument("mass vector must have at least one entry");
  for (double m : m_) {
    if (!(m > 0.0) || !std::isfinite(m))
      throw std::invalid_argument("masses must be positive and finite");
  }
}

double MassVector::min() const { return *std::min_element(m_.begin(), m_.end()); }
double MassVector::max() const { return *std::max_element(m_.begin(), m_.end()); }

std::string sigma_string(const std::array<Sign, 3>& sigma) {
  std::string s;
  for (Sign v : sigma) s.push_back(v == Sign::plus ? '+' : '-');
  return s;
}

std::array<Sign, 3> parse_sigma(std::string_view text) {
  if (text.size() != 3) throw std::invalid_argument("sigma must have exactly three signs");
  std::array<Sign, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (text[i] == '+')
      out[i] = Sign::plus;
    else if (text[i] == '-')
      out[i] = Sign::minus;
    else
      throw std::invalid_argument("sigma entries must be '+' or '-'");
  }
  return out;
}

CubicNonlinearity::CubicNonlinearity(std::size_t n_components, std::vector<CubicMonomial> monomials)
    : n_(n_components) {
  if (n_ == 0) throw std::invalid_argument("nonlinearity needs at least one component");
  for (auto& mono : monomials) {
    if (mono.target >= n_) throw std::invalid_argument("monomial target index out of range");
    for (std::size_t f : mono.factors)
      if (f >= n_) throw std::invalid_argument("monomial factor index out of range");
    if (!std::isfinite(mono.coeff.real()) || !std::isfinite(mono.coeff.imag()))
      throw std::invalid_argument("monomial coefficient must be finite");
    if (mono.coeff == cplx{}) continue;
    terms_.push_back({mono.target,
                      mono.factors,
                      {mono.sigma[0] == Sign::minus, mono.sigma[1] == Sign::minus,
                       mono.sigma[2] == Sign::minus},
                      mono.coeff});
    monomials_.push_back(mono);
  }
}

double CubicNonlinearity::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& mono : monomials_) m = std::max(m, std::abs(mono.coeff));
  return m;
}

std::vector<cplx> CubicNonlinearity::operator()(std::span<const cplx> z) const {
  if (z.size() != n_) throw std::invalid_argument("evaluate: vector length does not match N");
  std::vector<cplx> out(n_);
  evaluate_into(z.data(), out.data());
  return out;
}

// ---- HermitianForm -------------------------------------------------------------

HermitianForm::HermitianForm(std::size_t n, std::vector<cplx> entries) : n_(n), a_(std::move(entries)) {
  if (n_ == 0 || a_.size() != n_ * n_)
    throw std::invalid_argument("Hermitian form needs N*N entries");
  diagonal_ = true;
  for (std::size_t r = 0; r < n_; ++r) {
    for (std::size_t c = 0; c < n_; ++c) {
      const cplx v = a_[r * n_ + c];
      if (std::abs(v - std::conj(a_[c * n_ + r])) > 1e-12)
        throw std::invalid_argument("certificate matrix is not Hermitian");
      if (r != c && v != cplx{}) diagonal_ = false;
    }
  }
  Eigen::MatrixXcd m(n_, n_);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t c = 0; c < n_; ++c) m(r, c) = a_[r * n_ + c];
  // Symmetrize away the sub-tolerance skew part before the eigen solve.
  const Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h, Eigen::EigenvaluesOnly);
  lambda_min_ = eig.eigenvalues().minCoeff();
  lambda_max_ = eig.eigenvalues().maxCoeff();
  if (!(lambda_min_ > 0.0)) throw std::invalid_argument("certificate matrix is not positive definite");
}

HermitianForm HermitianForm::diagonal(std::span<const double> kappa) {
  std::vector<cplx> a(kappa.size() * kappa.size());
  for (std::size_t j = 0; j < kappa.size(); ++j) a[j * kappa.size() + j] = kappa[j];
  return HermitianForm(kappa.size(), std::move(a));
}

HermitianForm HermitianForm::identity(std::size_t n) {
  std::vector<double> ones(n, 1.0);
  return diagonal(ones);
}

std::vector<double> HermitianForm::diagonal_entries() const {
  std::vector<double> d(n_);
  for (std::size_t j = 0; j < n_; ++j) d[j] = a_[j * n_ + j].real();
  return d;
}

void HermitianForm::apply_into(const cplx* z, cplx* out) const {
  for (std::size_t r = 0; r < n_; ++r) {
    if (diagonal_) {
      out[r] = a_[r * n_ + r] * z[r];
      continue;
    }
    cplx acc{};
    for (std::size_t c = 0; c < n_; ++c) acc += a_[r * n_ + c] * z[c];
    out[r] = acc;
  }
}

double HermitianForm::quadratic(const cplx* z) const {
  double acc = 0.0;
  if (diagonal_) {
    for (std::size_t j = 0; j < n_; ++j) acc += a_[j * n_ + j].real() * std::norm(z[j]);
    return acc;
  }
  for (std::size_t r = 0; r < n_; ++r) {
    cplx az{};
    for (std::size_t c = 0; c < n_; ++c) az += a_[r * n_ + c] * z[c];
    acc += (z[r] * std::conj(az)).real();
  }
  return acc;
}

double HermitianForm::im_pairing(const cplx* y, const cplx* z) const {
  double acc = 0.0;
  for (std::size_t r = 0; r < n_; ++r) {
    cplx az{};
    if (diagonal_) {
      az = a_[r * n_ + r] * z[r];
    } else {
      for (std::size_t c = 0; c < n_; ++c) az += a_[r * n_ + c] * z[c];
    }
    acc += (y[r] * std::conj(az)).imag();
  }
  return acc;
}

void SystemSpec::validate() const {
  if (nonlinearity.components() != masses.size())
    throw std::invalid_argument("nonlinearity and masses disagree on the number of components");
  if (certificate && certificate->size() != masses.size())
    throw std::invalid_argument("certificate size does not match the number of components");
}

// ---- gauge invariance ----------------------------------------------------------

GaugeReport check_gauge_invariance(const SystemSpec& spec, double tol, std::uint64_t seed,
                                   std::size_t phase_samples) {
  spec.validate();
  const auto& m = spec.masses;
  GaugeReport report;
  report.passed = true;
  const auto& monos = spec.nonlinearity.monomials();
  for (std::size_t i = 0; i < monos.size(); ++i) {
    const auto& mono = monos[i];
    double lhs = 0.0;
    for (std::size_t p = 0; p < 3; ++p) lhs += static_cast<int>(mono.sigma[p]) * m[mono.factors[p]];
    const double residual = lhs - m[mono.target];
    const bool ok = std::abs(residual) <= tol;
    report.monomials.push_back({i, residual, ok});
    report.passed = report.passed && ok;
  }

  const std::size_t n = spec.components();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<cplx> z(n), zr(n), f(n), fr(n);
  double worst = 0.0;
  for (std::size_t s = 0; s < phase_samples; ++s) {
    const double theta = angle(rng);
    for (auto& v : z) v = {normal(rng), normal(rng)};
    for (std::size_t j = 0; j < n; ++j) zr[j] = std::polar(1.0, m[j] * theta) * z[j];
    spec.nonlinearity.evaluate_into(z.data(), f.data());
    spec.nonlinearity.evaluate_into(zr.data(), fr.data());
    for (std::size_t j = 0; j < n; ++j)
      worst = std::max(worst, std::abs(fr[j] - std::polar(1.0, m[j] * theta) * f[j]));
  }
  report.phase_sampling_error = worst;
  report.phase_samples = phase_samples;
  return report;
}

double dissipation_functional(const CubicNonlinearity& f, const HermitianForm& a,
                              std::span<const cplx> z) {
  if (z.size() != f.components() || a.size() != f.components())
    throw std::invalid_argument("dissipation_functional: dimension mismatch");
  std::vector<cplx> fz(z.size());
  f.evaluate_into(z.data(), fz.data());
  return a.im_pairing(fz.data(), z.data());
}

std::string to_string(Classification c) {
  switch (c) {
    case Classification::strictly_dissipative: return "strictly_dissipative";
    case Classification::weakly_dissipative: return "weakly_dissipative";
    case Classification::conservative: return "conservative";
    case Classification::violated: return "violated";
  }
  return "unknown";
}

// ---- built-in systems ------------------------------------------------------------

namespace {

CubicMonomial mono(std::size_t j, std::size_t k, std::size_t l, std::size_t m, std::string_view sigma,
                   cplx coeff) {
  return {j - 1, {k - 1, l - 1, m - 1}, parse_sigma(sigma), coeff};
}

std::vector<double> resolve_masses(std::span<const double> given, std::size_t n,
                                   std::size_t n_free, auto&& complete) {
  std::vector<double> out;
  if (given.empty()) {
    out.assign(n_free, 1.0);
  } else if (given.size() == n_free || given.size() == n) {
    out.assign(given.begin(), given.end());
  } else {
    throw std::invalid_argument("wrong number of masses for the built-in example");
  }
  if (out.size() == n_free) complete(out);
  return out;
}

}  // namespace

SystemSpec builtin_example(std::string_view name, std::span<const cplx> params,
                           std::span<const double> masses) {
  if (name == "example_2_1" || name == "example21") {
    if (params.size() != 4) throw std::invalid_argument("example_2_1 takes (lambda1, lambda2, mu1, mu2)");
    const cplx l1 = params[0], l2 = params[1], mu1 = params[2], mu2 = params[3];
    auto m = resolve_masses(masses, 2, 1, [](std::vector<double>& v) { v.push_back(3.0 * v[0]); });
    std::vector<CubicMonomial> terms = {
        // F1 = l1 (|u1|^2 + |u2|^2) u1 + mu1 conj(u1)^2 u2
        mono(1, 1, 1, 1, "+-+", l1),
        mono(1, 2, 2, 1, "+-+", l1),
        mono(1, 1, 1, 2, "--+", mu1),
        // F2 = l2 (|u1|^2 + |u2|^2) u2 + mu2 u1^3
        mono(2, 1, 1, 2, "+-+", l2),
        mono(2, 2, 2, 2, "+-+", l2),
        mono(2, 1, 1, 1, "+++", mu2),
    };
    SystemSpec spec{MassVector(std::move(m)), CubicNonlinearity(2, std::move(terms)), std::nullopt};
    spec.validate();
    return spec;
  }
  if (name == "example_2_2" || name == "example22") {
    if (params.size() != 4) throw std::invalid_argument("example_2_2 takes (mu1, mu2, mu3, mu4)");
    auto m = resolve_masses(masses, 4, 3,
                            [](std::vector<double>& v) { v.push_back(v[0] + v[1] + v[2]); });
    std::vector<CubicMonomial> terms = {
        mono(1, 2, 3, 4, "--+", params[0]),
        mono(2, 3, 4, 1, "-+-", params[1]),
        mono(3, 4, 1, 2, "+--", params[2]),
        mono(4, 1, 2, 3, "+++", params[3]),
    };
    SystemSpec spec{MassVector(std::move(m)), CubicNonlinearity(4, std::move(terms)), std::nullopt};
    spec.validate();
    return spec;
  }
  if (name == "single") {
    if (params.size() != 1) throw std::invalid_argument("single takes (lambda)");
    auto m = resolve_masses(masses, 1, 1, [](std::vector<double>&) {});
    SystemSpec spec{MassVector(std::move(m)),
                    CubicNonlinearity(1, {mono(1, 1, 1, 1, "+-+", params[0])}), std::nullopt};
    spec.validate();
    return spec;
  }
  throw std::invalid_argument("unknown built-in example: " + std::string(name));
}

}  // namespace cnls

// Cubic gauge-invariant nonlinearities for N-component NLS systems: exact
// representation, the mass-resonance check and dissipativity certificates.
#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cnls {

using cplx = std::complex<double>;

/// Positive component masses m_1..m_N.
class MassVector {
 public:
  MassVector() = default;
  explicit MassVector(std::vector<double> masses);

  std::size_t size() const { return m_.size(); }
  double operator[](std::size_t j) const { return m_[j]; }
  std::span<const double> values() const { return m_; }
  double min() const;
  double max() const;

 private:
  std::vector<double> m_;
};

/// u^{(+)} = u, u^{(-)} = conj(u).
enum class Sign : int { plus = 1, minus = -1 };

/// coeff * z_k^{(s1)} z_l^{(s2)} z_m^{(s3)} contributing to component `target`.
/// Indices are 0-based here; file formats and reports use 1-based indices.
struct CubicMonomial {
  std::size_t target = 0;
  std::array<std::size_t, 3> factors{};
  std::array<Sign, 3> sigma{Sign::plus, Sign::plus, Sign::plus};
  cplx coeff{};
};

std::string sigma_string(const std::array<Sign, 3>& sigma);
std::array<Sign, 3> parse_sigma(std::string_view text);

/// F = (F_j) as a sparse monomial list. Duplicates are summed on evaluation;
/// zero coefficients are dropped at construction.
class CubicNonlinearity {
 public:
  CubicNonlinearity() = default;
  CubicNonlinearity(std::size_t n_components, std::vector<CubicMonomial> monomials);

  std::size_t components() const { return n_; }
  const std::vector<CubicMonomial>& monomials() const { return monomials_; }
  double max_abs_coeff() const;
  bool empty() const { return monomials_.empty(); }

  /// Hot path: no dimension checks. `out` is overwritten.
  void evaluate_into(const cplx* z, cplx* out) const {
    for (std::size_t j = 0; j < n_; ++j) out[j] = 0.0;
    for (const auto& t : terms_) {
      const cplx a = t.conj[0] ? std::conj(z[t.k[0]]) : z[t.k[0]];
      const cplx b = t.conj[1] ? std::conj(z[t.k[1]]) : z[t.k[1]];
      const cplx c = t.conj[2] ? std::conj(z[t.k[2]]) : z[t.k[2]];
      out[t.target] += t.coeff * (a * b * c);
    }
  }

  /// Checked evaluation; throws std::invalid_argument on a length mismatch.
  std::vector<cplx> operator()(std::span<const cplx> z) const;

 private:
  struct Term {
    std::size_t target;
    std::array<std::size_t, 3> k;
    std::array<bool, 3> conj;
    cplx coeff;
  };
  std::size_t n_ = 0;
  std::vector<CubicMonomial> monomials_;
  std::vector<Term> terms_;
};

inline std::vector<cplx> evaluate(const CubicNonlinearity& f, std::span<const cplx> z) {
  return f(z);
}

/// Positive definite Hermitian matrix A with cached extreme eigenvalues.
class HermitianForm {
 public:
  /// Row-major N x N entries. Throws std::invalid_argument unless A is
  /// Hermitian to 1e-12 and positive definite.
  HermitianForm(std::size_t n, std::vector<cplx> entries);
  static HermitianForm diagonal(std::span<const double> kappa);
  static HermitianForm identity(std::size_t n);

  std::size_t size() const { return n_; }
  cplx operator()(std::size_t r, std::size_t c) const { return a_[r * n_ + c]; }
  const std::vector<cplx>& entries() const { return a_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }
  bool is_diagonal() const { return diagonal_; }
  std::vector<double> diagonal_entries() const;

  /// out = A z (unchecked).
  void apply_into(const cplx* z, cplx* out) const;
  /// z . A z = sum_j z_j conj((Az)_j), real for Hermitian A (unchecked).
  double quadratic(const cplx* z) const;
  /// Im(y . A z) with y . w = sum_j y_j conj(w_j) (unchecked).
  double im_pairing(const cplx* y, const cplx* z) const;

 private:
  std::size_t n_ = 0;
  std::vector<cplx> a_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
  bool diagonal_ = false;
};

struct SystemSpec {
  MassVector masses;
  CubicNonlinearity nonlinearity;
  std::optional<HermitianForm> certificate;

  std::size_t components() const { return masses.size(); }
  /// Throws std::invalid_argument when the parts disagree on N.
  void validate() const;
};

// ---- gauge invariance --------------------------------------------------------

struct MonomialResonance {
  std::size_t index = 0;
  double residual = 0.0;  // s1 m_k + s2 m_l + s3 m_m - m_j
  bool passed = false;
};

struct GaugeReport {
  std::vector<MonomialResonance> monomials;
  bool passed = false;
  /// max |F_j(e^{i m theta} z) - e^{i m_j theta} F_j(z)| over the sampled (theta, z).
  double phase_sampling_error = 0.0;
  std::size_t phase_samples = 0;
};

GaugeReport check_gauge_invariance(const SystemSpec& spec, double tol = 1e-9,
                                   std::uint64_t seed = 0, std::size_t phase_samples = 100);

// ---- dissipativity -------------------------------------------------------------

/// Im(F(z) . A z).
double dissipation_functional(const CubicNonlinearity& f, const HermitianForm& a,
                              std::span<const cplx> z);

enum class Classification { strictly_dissipative, weakly_dissipative, conservative, violated };
std::string to_string(Classification c);

/// Quartic bounds -c_star |z|^4 <= Im(F(z).Az) <= -c_upper |z|^4 estimated on the unit sphere.
struct DissipationBounds {
  double c_star = 0.0;
  double c_upper = 0.0;
  double max_violation = 0.0;  // max g over the sphere
  std::size_t samples_used = 0;
};

struct Certification {
  DissipationBounds bounds;
  Classification classification = Classification::violated;
  double tol = 0.0;
};

struct SphereSearchOptions {
  std::size_t n_samples = 20000;
  double tol = -1.0;  // <= 0 selects 1e-9 * max|coeff|
  std::uint64_t seed = 0;
  std::size_t polish_starts = 10;
  bool parallel = true;
};

/// Throws std::invalid_argument when n_samples < 1000 or dimensions disagree.
Certification certify_conditions(const CubicNonlinearity& f, const HermitianForm& a,
                                 const SphereSearchOptions& options = {});

enum class CertificateMode { sdge, decay };

/// Searches A = diag(kappa) with kappa on the simplex; the result is rescaled
/// to min kappa = 1. Among admissible kappa it prefers those for which
/// Im(F(z).Az) does not depend on the relative phases of z.
std::optional<HermitianForm> find_diagonal_certificate(const CubicNonlinearity& f,
                                                       CertificateMode mode,
                                                       const SphereSearchOptions& options = {});

// ---- built-in systems ------------------------------------------------------------

/// name in {example_2_1, example_2_2, single} (aliases example21, example22).
/// params: (l1, l2, mu1, mu2) | (mu1..mu4) | (lambda).
/// masses: empty for defaults, a single leading mass (example_2_1, single),
/// the free masses (3 for example_2_2) or the full vector.
SystemSpec builtin_example(std::string_view name, std::span<const cplx> params,
                           std::span<const double> masses = {});

}  // namespace cnls

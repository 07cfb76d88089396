// Sphere search for the quartic dissipation bounds and the diagonal
// certificate search.
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>

#include "cnls/algebra.hpp"
#include "cnls/kernels.hpp"

namespace cnls {

namespace {

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
};

using Objective = std::function<double(std::span<const double>)>;

double gsl_trampoline(const gsl_vector* v, void* params) {
  const auto& f = *static_cast<const Objective*>(params);
  return f(std::span<const double>(v->data, v->size));
}

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0, double step, double size_tol,
                             std::size_t max_iter) {
  const std::size_t n = x0.size();
  gsl_set_error_handler_off();
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n),
      &gsl_multimin_fminimizer_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(n), &gsl_vector_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> ss(gsl_vector_alloc(n), &gsl_vector_free);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x.get(), i, x0[i]);
  gsl_vector_set_all(ss.get(), step);

  gsl_multimin_function fn{&gsl_trampoline, n, const_cast<Objective*>(&f)};
  gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), ss.get());
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), size_tol) == GSL_SUCCESS) break;
  }
  NelderMeadResult r;
  r.x.assign(s->x->data, s->x->data + n);
  r.value = s->fval;
  return r;
}

double sphere_value(const CubicNonlinearity& f, const HermitianForm& a, std::span<const double> v,
                    std::vector<cplx>& z, std::vector<cplx>& fz) {
  const std::size_t n = f.components();
  double norm2 = 0.0;
  for (double c : v) norm2 += c * c;
  if (!(norm2 > 0.0)) return 0.0;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t j = 0; j < n; ++j) z[j] = {v[2 * j] * inv, v[2 * j + 1] * inv};
  f.evaluate_into(z.data(), fz.data());
  return a.im_pairing(fz.data(), z.data());
}

// Local polish of one extreme (sign = +1 for the minimum, -1 for the maximum).
double polish(const CubicNonlinearity& f, const HermitianForm& a, const std::vector<cplx>& start,
              double sign) {
  const std::size_t n = f.components();
  std::vector<cplx> z(n), fz(n);
  Objective obj = [&](std::span<const double> v) { return sign * sphere_value(f, a, v, z, fz); };
  std::vector<double> x0(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    x0[2 * j] = start[j].real();
    x0[2 * j + 1] = start[j].imag();
  }
  const auto r = nelder_mead(obj, x0, 0.05, 1e-12, 4000 * n);
  return sign * r.value;
}

}  // namespace

Certification certify_conditions(const CubicNonlinearity& f, const HermitianForm& a,
                                 const SphereSearchOptions& options) {
  if (options.n_samples < 1000) throw std::invalid_argument("certify_conditions needs n_samples >= 1000");
  if (a.size() != f.components()) throw std::invalid_argument("certificate size does not match N");
  const std::size_t n = f.components();

  Certification cert;
  cert.tol = options.tol > 0.0 ? options.tol
                               : 1e-9 * std::max(f.max_abs_coeff(), 1e-300) * a.lambda_max();

  const auto scan = options.parallel
                        ? kernels::scan_sphere(f, a, options.n_samples, options.seed, options.polish_starts)
                        : kernels::scan_sphere_serial(f, a, options.n_samples, options.seed,
                                                      options.polish_starts);
  double lo = scan.min_value, hi = scan.max_value;
  for (const auto& c : scan.lowest)
    lo = std::min(lo, polish(f, a, kernels::sphere_point(c.index, n, options.seed), 1.0));
  for (const auto& c : scan.highest)
    hi = std::max(hi, polish(f, a, kernels::sphere_point(c.index, n, options.seed), -1.0));

  cert.bounds.c_star = -lo;
  cert.bounds.c_upper = -hi;
  cert.bounds.max_violation = hi;
  cert.bounds.samples_used = scan.samples;

  const double tol = cert.tol;
  if (std::max(std::abs(lo), std::abs(hi)) <= tol && scan.max_abs <= tol)
    cert.classification = Classification::conservative;
  else if (hi <= -tol)
    cert.classification = Classification::strictly_dissipative;
  else if (hi <= tol)
    cert.classification = Classification::weakly_dissipative;
  else
    cert.classification = Classification::violated;
  return cert;
}

namespace {

// Q_{jk} = E_moduli[Cov_phases(g_j, g_k)] with g_j(z) = Im(F_j(z) conj(z_j)).
// kappa^T Q kappa vanishes exactly when Im(F(z).diag(kappa)z) is phase independent.
std::vector<double> phase_covariance(const CubicNonlinearity& f, std::uint64_t seed) {
  const std::size_t n = f.components();
  constexpr std::size_t moduli_samples = 64;
  constexpr std::size_t phase_samples = 32;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<double> q(n * n, 0.0);
  std::vector<cplx> z(n), fz(n);
  std::vector<double> g(phase_samples * n);
  const double scale = std::max(f.max_abs_coeff(), 1e-300);
  for (std::size_t r = 0; r < moduli_samples; ++r) {
    const auto base = kernels::sphere_point(r, n, seed);
    for (std::size_t p = 0; p < phase_samples; ++p) {
      for (std::size_t j = 0; j < n; ++j) z[j] = std::polar(std::abs(base[j]), angle(rng));
      f.evaluate_into(z.data(), fz.data());
      for (std::size_t j = 0; j < n; ++j) g[p * n + j] = (fz[j] * std::conj(z[j])).imag() / scale;
    }
    std::vector<double> mean(n, 0.0);
    for (std::size_t p = 0; p < phase_samples; ++p)
      for (std::size_t j = 0; j < n; ++j) mean[j] += g[p * n + j] / phase_samples;
    for (std::size_t p = 0; p < phase_samples; ++p)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          q[j * n + k] += (g[p * n + j] - mean[j]) * (g[p * n + k] - mean[k]) /
                          static_cast<double>(phase_samples * moduli_samples);
  }
  return q;
}

std::vector<double> softmax_simplex(std::span<const double> y) {
  std::vector<double> kappa(y.size() + 1);
  double top = 0.0;
  for (double v : y) top = std::max(top, v);
  kappa[0] = std::exp(-top);
  double sum = kappa[0];
  for (std::size_t i = 0; i < y.size(); ++i) {
    kappa[i + 1] = std::exp(y[i] - top);
    sum += kappa[i + 1];
  }
  for (double& k : kappa) k /= sum;
  return kappa;
}

void compositions(std::size_t parts, std::size_t total, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
  if (parts == 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (std::size_t first = 1; first + (parts - 1) <= total; ++first) {
    cur.push_back(first);
    compositions(parts - 1, total - first, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::optional<HermitianForm> find_diagonal_certificate(const CubicNonlinearity& f, CertificateMode mode,
                                                       const SphereSearchOptions& options) {
  const std::size_t n = f.components();
  auto admissible = [&](const std::vector<double>& kappa) {
    const auto a = HermitianForm::diagonal(kappa);
    const auto cert = certify_conditions(f, a, options);
    if (mode == CertificateMode::decay) return cert.classification == Classification::strictly_dissipative;
    return cert.classification != Classification::violated;
  };
  auto normalized = [](std::vector<double> kappa) {
    const double lo = *std::min_element(kappa.begin(), kappa.end());
    for (double& k : kappa) k /= lo;
    return HermitianForm::diagonal(kappa);
  };

  if (n == 1) {
    std::vector<double> one{1.0};
    if (admissible(one)) return normalized(one);
    return std::nullopt;
  }

  const auto q = phase_covariance(f, options.seed);
  constexpr double tie_break = 1e-10;
  auto score = [&](const std::vector<double>& kappa) {
    double v = 0.0, spread = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) v += kappa[j] * q[j * n + k] * kappa[k];
      const double d = kappa[j] - 1.0 / static_cast<double>(n);
      spread += d * d;
    }
    return v + tie_break * spread;
  };

  // Coarse lattice of strictly positive points on the simplex.
  const std::size_t resolution = std::max<std::size_t>(12, n);
  std::vector<std::vector<std::size_t>> lattice;
  std::vector<std::size_t> cur;
  compositions(n, resolution, cur, lattice);

  struct Candidate {
    std::vector<double> kappa;
    double score;
  };
  std::vector<Candidate> grid;
  grid.reserve(lattice.size());
  for (const auto& c : lattice) {
    std::vector<double> kappa(n);
    for (std::size_t j = 0; j < n; ++j) kappa[j] = static_cast<double>(c[j]) / resolution;
    grid.push_back({kappa, score(kappa)});
  }
  std::sort(grid.begin(), grid.end(), [](const Candidate& a, const Candidate& b) { return a.score < b.score; });

  std::vector<Candidate> refined;
  constexpr std::size_t refine_starts = 5;
  for (std::size_t i = 0; i < std::min(refine_starts, grid.size()); ++i) {
    std::vector<double> y0(n - 1);
    for (std::size_t j = 1; j < n; ++j) y0[j - 1] = std::log(grid[i].kappa[j] / grid[i].kappa[0]);
    Objective obj = [&](std::span<const double> y) { return score(softmax_simplex(y)); };
    const auto r = nelder_mead(obj, y0, 0.1, 1e-12, 20000);
    refined.push_back({softmax_simplex(r.x), r.value});
  }
  std::sort(refined.begin(), refined.end(),
            [](const Candidate& a, const Candidate& b) { return a.score < b.score; });

  constexpr std::size_t max_grid_checks = 20;
  for (const auto& c : refined)
    if (admissible(c.kappa)) return normalized(c.kappa);
  for (std::size_t i = 0; i < std::min(max_grid_checks, grid.size()); ++i)
    if (admissible(grid[i].kappa)) return normalized(grid[i].kappa);
  return std::nullopt;
}

}  // namespace cnls

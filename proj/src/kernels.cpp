#include "cnls/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cnls::kernels {

namespace {

// Columns are advanced in blocks of kBlock, stored as separate real and
// imaginary planes so the per-term loops vectorize.
constexpr std::size_t kBlock = 256;

// -i * coeff * w_a w_b w_c with conj folded into a sign on the imaginary part.
struct RhsTerm {
  std::size_t target;
  std::array<std::size_t, 3> k;
  std::array<double, 3> im_sign;
  double cr, ci;
};

std::vector<RhsTerm> compile_rhs(const CubicNonlinearity& f) {
  std::vector<RhsTerm> out;
  for (const auto& m : f.monomials()) {
    RhsTerm t;
    t.target = m.target;
    t.k = m.factors;
    for (int i = 0; i < 3; ++i) t.im_sign[i] = m.sigma[i] == Sign::minus ? -1.0 : 1.0;
    const cplx c = cplx(0.0, -1.0) * m.coeff;
    t.cr = c.real();
    t.ci = c.imag();
    out.push_back(t);
  }
  return out;
}

struct BlockScratch {
  explicit BlockScratch(std::size_t n) : n(n) {
    for (auto* v : {&zr, &zi, &tr, &ti, &k1r, &k1i, &k2r, &k2i, &k3r, &k3i, &k4r, &k4i}) v->assign(n * kBlock, 0.0);
  }
  std::size_t n;
  std::vector<double> zr, zi, tr, ti, k1r, k1i, k2r, k2i, k3r, k3i, k4r, k4i;
};

void block_rhs(const std::vector<RhsTerm>& terms, std::size_t n, std::size_t w, const double* __restrict yr,
               const double* __restrict yi, double* __restrict kr, double* __restrict ki) {
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < w; ++c) kr[j * kBlock + c] = ki[j * kBlock + c] = 0.0;
  for (const auto& t : terms) {
    const double* ar = yr + t.k[0] * kBlock;
    const double* ai = yi + t.k[0] * kBlock;
    const double* br = yr + t.k[1] * kBlock;
    const double* bi = yi + t.k[1] * kBlock;
    const double* cr = yr + t.k[2] * kBlock;
    const double* ci = yi + t.k[2] * kBlock;
    double* outr = kr + t.target * kBlock;
    double* outi = ki + t.target * kBlock;
    const double sa = t.im_sign[0], sb = t.im_sign[1], sc = t.im_sign[2];
    const double qr = t.cr, qi = t.ci;
    for (std::size_t c = 0; c < w; ++c) {
      const double xr = ar[c], xi = sa * ai[c];
      const double yr2 = br[c], yi2 = sb * bi[c];
      const double pr = xr * yr2 - xi * yi2;
      const double pi = xr * yi2 + xi * yr2;
      const double zr2 = cr[c], zi2 = sc * ci[c];
      const double ur = pr * zr2 - pi * zi2;
      const double ui = pr * zi2 + pi * zr2;
      outr[c] += qr * ur - qi * ui;
      outi[c] += qr * ui + qi * ur;
    }
  }
}

bool advance_block(ComplexMatrix& m, std::size_t first, const std::vector<RhsTerm>& terms, double h,
                   std::size_t steps, BlockScratch& s) {
  const std::size_t n = m.rows();
  const std::size_t w = std::min(kBlock, m.cols() - first);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < w; ++c) {
      const cplx v = m(j, first + c);
      s.zr[j * kBlock + c] = v.real();
      s.zi[j * kBlock + c] = v.imag();
    }
  const double half = 0.5 * h;
  const double sixth = h / 6.0;
  double* __restrict zr = s.zr.data();
  double* __restrict zi = s.zi.data();
  double* __restrict tr = s.tr.data();
  double* __restrict ti = s.ti.data();
  double *k1r = s.k1r.data(), *k1i = s.k1i.data(), *k2r = s.k2r.data(), *k2i = s.k2i.data();
  double *k3r = s.k3r.data(), *k3i = s.k3i.data(), *k4r = s.k4r.data(), *k4i = s.k4i.data();
  for (std::size_t step = 0; step < steps; ++step) {
    block_rhs(terms, n, w, zr, zi, k1r, k1i);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = j * kBlock; i < j * kBlock + w; ++i) {
        tr[i] = zr[i] + half * k1r[i];
        ti[i] = zi[i] + half * k1i[i];
      }
    block_rhs(terms, n, w, tr, ti, k2r, k2i);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = j * kBlock; i < j * kBlock + w; ++i) {
        tr[i] = zr[i] + half * k2r[i];
        ti[i] = zi[i] + half * k2i[i];
      }
    block_rhs(terms, n, w, tr, ti, k3r, k3i);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = j * kBlock; i < j * kBlock + w; ++i) {
        tr[i] = zr[i] + h * k3r[i];
        ti[i] = zi[i] + h * k3i[i];
      }
    block_rhs(terms, n, w, tr, ti, k4r, k4i);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = j * kBlock; i < j * kBlock + w; ++i) {
        zr[i] += sixth * (k1r[i] + 2.0 * (k2r[i] + k3r[i]) + k4r[i]);
        zi[i] += sixth * (k1i[i] + 2.0 * (k2i[i] + k3i[i]) + k4i[i]);
      }
  }
  bool finite = true;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < w; ++c) {
      const double re = zr[j * kBlock + c], im = zi[j * kBlock + c];
      m(j, first + c) = {re, im};
      finite = finite && std::isfinite(re) && std::isfinite(im);
    }
  return finite;
}

std::vector<unsigned> first_primes(std::size_t count) {
  std::vector<unsigned> primes;
  for (unsigned c = 2; primes.size() < count; ++c) {
    bool prime = true;
    for (unsigned p : primes) {
      if (p * p > c) break;
      if (c % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(c);
  }
  return primes;
}

double radical_inverse(std::size_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

void keep_lowest(std::vector<SphereCandidate>& v, SphereCandidate c, std::size_t keep) {
  auto less = [](const SphereCandidate& a, const SphereCandidate& b) {
    return a.value < b.value || (a.value == b.value && a.index < b.index);
  };
  if (keep == 0) return;
  if (v.size() == keep) {
    if (!less(c, v.back())) return;
    v.back() = c;
  } else {
    v.push_back(c);
  }
  std::sort(v.begin(), v.end(), less);
}

void keep_highest(std::vector<SphereCandidate>& v, SphereCandidate c, std::size_t keep) {
  auto better = [](const SphereCandidate& a, const SphereCandidate& b) {
    return a.value > b.value || (a.value == b.value && a.index < b.index);
  };
  if (keep == 0) return;
  if (v.size() == keep) {
    if (!better(c, v.back())) return;
    v.back() = c;
  } else {
    v.push_back(c);
  }
  std::sort(v.begin(), v.end(), better);
}

struct SphereGenerator {
  SphereGenerator(std::size_t n, std::uint64_t seed) : n(n), primes(first_primes(2 * n)), shift(2 * n) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& s : shift) s = u(rng);
  }

  void point(std::size_t index, cplx* z) const {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double u1 = radical_inverse(index + 1, primes[2 * j]) + shift[2 * j];
      double u2 = radical_inverse(index + 1, primes[2 * j + 1]) + shift[2 * j + 1];
      u1 = 1.0 - (u1 - std::floor(u1));  // (0, 1]
      u2 -= std::floor(u2);
      const double r = std::sqrt(-2.0 * std::log(std::max(u1, 1e-300)));
      z[j] = std::polar(r, 2.0 * std::numbers::pi * u2);
      norm2 += std::norm(z[j]);
    }
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
    if (inv == 0.0) {
      z[0] = 1.0;
      return;
    }
    for (std::size_t j = 0; j < n; ++j) z[j] *= inv;
  }

  std::size_t n;
  std::vector<unsigned> primes;
  std::vector<double> shift;
};

void merge(SphereScan& into, const SphereScan& part, std::size_t keep) {
  if (part.samples == 0) return;
  if (into.samples == 0) {
    into = part;
    return;
  }
  into.min_value = std::min(into.min_value, part.min_value);
  into.max_value = std::max(into.max_value, part.max_value);
  into.max_abs = std::max(into.max_abs, part.max_abs);
  into.samples += part.samples;
  for (const auto& c : part.lowest) keep_lowest(into.lowest, c, keep);
  for (const auto& c : part.highest) keep_highest(into.highest, c, keep);
}

void scan_range(const CubicNonlinearity& f, const HermitianForm& a, const SphereGenerator& gen,
                std::size_t begin, std::size_t end, std::size_t keep, SphereScan& out) {
  const std::size_t n = f.components();
  std::vector<cplx> z(n), fz(n);
  for (std::size_t i = begin; i < end; ++i) {
    gen.point(i, z.data());
    f.evaluate_into(z.data(), fz.data());
    const double g = a.im_pairing(fz.data(), z.data());
    if (out.samples == 0) {
      out.min_value = out.max_value = g;
      out.max_abs = std::abs(g);
    } else {
      out.min_value = std::min(out.min_value, g);
      out.max_value = std::max(out.max_value, g);
      out.max_abs = std::max(out.max_abs, std::abs(g));
    }
    ++out.samples;
    keep_lowest(out.lowest, {g, i}, keep);
    keep_highest(out.highest, {g, i}, keep);
  }
}

}  // namespace

bool rk4_columns(ComplexMatrix& z, const CubicNonlinearity& f, double h, std::size_t steps) {
  const auto terms = compile_rhs(f);
  const auto blocks = static_cast<std::ptrdiff_t>((z.cols() + kBlock - 1) / kBlock);
  bool finite = true;
#pragma omp parallel reduction(&& : finite) if (blocks > 1)
  {
    BlockScratch scratch(z.rows());
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b)
      finite = advance_block(z, static_cast<std::size_t>(b) * kBlock, terms, h, steps, scratch) && finite;
  }
  return finite;
}

bool rk4_columns_serial(ComplexMatrix& z, const CubicNonlinearity& f, double h, std::size_t steps) {
  const auto terms = compile_rhs(f);
  BlockScratch scratch(z.rows());
  bool finite = true;
  for (std::size_t first = 0; first < z.cols(); first += kBlock)
    finite = advance_block(z, first, terms, h, steps, scratch) && finite;
  return finite;
}

std::vector<cplx> sphere_point(std::size_t index, std::size_t n, std::uint64_t seed) {
  SphereGenerator gen(n, seed);
  std::vector<cplx> z(n);
  gen.point(index, z.data());
  return z;
}

SphereScan scan_sphere(const CubicNonlinearity& f, const HermitianForm& a, std::size_t n_samples,
                       std::uint64_t seed, std::size_t keep) {
  const SphereGenerator gen(f.components(), seed);
  SphereScan total;
#pragma omp parallel
  {
    SphereScan local;
#ifdef _OPENMP
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t tid = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t nt = 1, tid = 0;
#endif
    const std::size_t chunk = (n_samples + nt - 1) / nt;
    const std::size_t begin = std::min(n_samples, tid * chunk);
    const std::size_t end = std::min(n_samples, begin + chunk);
    scan_range(f, a, gen, begin, end, keep, local);
#pragma omp critical
    merge(total, local, keep);
  }
  return total;
}

SphereScan scan_sphere_serial(const CubicNonlinearity& f, const HermitianForm& a,
                              std::size_t n_samples, std::uint64_t seed, std::size_t keep) {
  const SphereGenerator gen(f.components(), seed);
  SphereScan out;
  scan_range(f, a, gen, 0, n_samples, keep, out);
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace cnls::kernels

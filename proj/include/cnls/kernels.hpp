// Data-parallel inner loops. Every OpenMP kernel has a `_serial` twin that
// tests use as the reference; both produce bit-identical results because the
// per-point work is independent and the reductions are min/max only.
#pragma once

#include <cstdint>
#include <vector>

#include "cnls/algebra.hpp"
#include "cnls/matrix.hpp"

namespace cnls::kernels {

/// Advances dz/dt = -i F(z) independently in every column by `steps` classical
/// RK4 steps of size h. Returns false if any entry became non-finite.
bool rk4_columns(ComplexMatrix& z, const CubicNonlinearity& f, double h, std::size_t steps);
bool rk4_columns_serial(ComplexMatrix& z, const CubicNonlinearity& f, double h, std::size_t steps);

/// Deterministic quasi-random direction on the unit sphere of C^n ~ R^{2n}:
/// Halton point `index` with a seeded Cranley-Patterson shift, mapped through
/// Box-Muller and normalized.
std::vector<cplx> sphere_point(std::size_t index, std::size_t n, std::uint64_t seed);

struct SphereCandidate {
  double value = 0.0;
  std::size_t index = 0;
};

struct SphereScan {
  double min_value = 0.0;
  double max_value = 0.0;
  double max_abs = 0.0;
  std::vector<SphereCandidate> lowest;   // ascending by (value, index)
  std::vector<SphereCandidate> highest;  // descending by value, ascending index
  std::size_t samples = 0;
};

/// Evaluates g(z) = Im(F(z).Az) at `n_samples` sphere points and keeps the
/// `keep` extreme candidates on each side.
SphereScan scan_sphere(const CubicNonlinearity& f, const HermitianForm& a, std::size_t n_samples,
                       std::uint64_t seed, std::size_t keep);
SphereScan scan_sphere_serial(const CubicNonlinearity& f, const HermitianForm& a,
                              std::size_t n_samples, std::uint64_t seed, std::size_t keep);

/// Number of threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

}  // namespace cnls::kernels

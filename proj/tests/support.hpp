// Shared fixtures for the unit tests.
#pragma once

#include <complex>
#include <random>
#include <vector>

#include "cnls/algebra.hpp"
#include "cnls/solver.hpp"
#include "cnls/spectral.hpp"

namespace cnls::testing {

using namespace std::complex_literals;

inline SystemSpec ex21(cplx l1 = -1i, cplx l2 = -1i, cplx mu1 = 1.0, cplx mu2 = 1.0,
                       std::vector<double> masses = {}) {
  const std::vector<cplx> p{l1, l2, mu1, mu2};
  return builtin_example("example_2_1", p, masses);
}

inline SystemSpec ex22(cplx mu1 = 1.0, cplx mu2 = 1.0, cplx mu3 = 1.0, cplx mu4 = 3.0,
                       std::vector<double> masses = {1.0, 1.0, 1.0}) {
  const std::vector<cplx> p{mu1, mu2, mu3, mu4};
  return builtin_example("example_2_2", p, masses);
}

inline SystemSpec single(cplx lambda, double m = 1.0) {
  const std::vector<cplx> p{lambda};
  const std::vector<double> ms{m};
  return builtin_example("single", p, ms);
}

inline SystemSpec free_system(std::vector<double> masses) {
  const std::size_t n = masses.size();
  return {MassVector(std::move(masses)), CubicNonlinearity(n, {}), std::nullopt};
}

inline std::vector<cplx> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g;
  std::vector<cplx> z(n);
  for (auto& v : z) v = {scale * g(rng), scale * g(rng)};
  return z;
}

inline double max_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) d = std::max(d, std::abs(a.data()[k] - b.data()[k]));
  return d;
}

inline double max_abs(const ComplexMatrix& a) {
  double d = 0.0;
  for (const auto& v : a.data()) d = std::max(d, std::abs(v));
  return d;
}

/// Gaussian exp(-x^2/2) times amplitude in every component.
inline Field gaussian(GridPtr grid, std::vector<cplx> amplitudes, double width = 1.0) {
  return make_initial_data(InitialKind::gaussian, amplitudes, width, std::move(grid));
}

}  // namespace cnls::testing

// Periodic grid on [-L, L), Fourier transforms in the symmetric 1/sqrt(2 pi)
// convention and the free-evolution operator toolbox.
//
// Conventions:
//   forward:  c(eta_k)   = dx/sqrt(2 pi) * sum_x exp(-i eta_k x) u(x)
//   backward: u(x)       = deta/sqrt(2 pi) * sum_k exp(+i eta_k x) c(eta_k)
//   free group U_j(t):   c -> exp(-i t eta^2 / (2 m_j)) c
//   profile alpha_j(xi): sqrt(m_j) e^{-i pi/4} exp(+i t eta^2/(2 m_j)) c(eta), xi = eta / m_j
#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "cnls/algebra.hpp"
#include "cnls/matrix.hpp"

namespace cnls {

namespace detail {
struct FftPlans;
}

/// Immutable after construction; safe to share between threads.
class Grid {
 public:
  /// Throws std::invalid_argument unless L > 0 and n is a power of two >= 16.
  Grid(double half_length, std::size_t n_points);
  ~Grid();
  Grid(const Grid&) = delete;
  Grid& operator=(const Grid&) = delete;

  double half_length() const { return half_length_; }
  std::size_t size() const { return n_; }
  double dx() const { return dx_; }
  double deta() const { return deta_; }
  std::span<const double> positions() const { return x_; }
  /// FFT order: 0, deta, ..., (n/2-1) deta, -n/2 deta, ..., -deta.
  std::span<const double> frequencies() const { return eta_; }

  /// Unnormalized in-place DFTs (exp(-2 pi i jk/n) forward, +i backward).
  void dft_forward(std::span<cplx> data) const;
  void dft_backward(std::span<cplx> data) const;

 private:
  double half_length_;
  std::size_t n_;
  double dx_;
  double deta_;
  std::vector<double> x_;
  std::vector<double> eta_;
  std::unique_ptr<detail::FftPlans> plans_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid(double half_length, std::size_t n_points);

/// Physical-space samples; row j is component j at the grid points.
struct Field {
  double time = 0.0;
  GridPtr grid;
  ComplexMatrix values;

  std::size_t components() const { return values.rows(); }
  /// Throws std::invalid_argument on a shape mismatch or non-finite values.
  void validate() const;
};

/// Fourier coefficients in FFT order.
struct SpectralField {
  double time = 0.0;
  GridPtr grid;
  ComplexMatrix coeffs;
};

Field zero_field(GridPtr grid, std::size_t components, double time = 0.0);

SpectralField forward_transform(const Field& f);
Field backward_transform(const SpectralField& g);

/// Cached per-component multipliers exp(-i dt eta^2/(2 m_j)) / n.
class FreePropagator {
 public:
  FreePropagator(GridPtr grid, const MassVector& masses, double dt);
  /// Applies U(dt) to every row of `values` (physical space, in place).
  void apply(ComplexMatrix& values) const;
  double dt() const { return dt_; }

 private:
  GridPtr grid_;
  double dt_;
  ComplexMatrix multipliers_;
};

/// Applies U(dt) (negative dt gives U(-|dt|)); time advances by dt.
Field free_propagate(const Field& f, const MassVector& masses, double dt);
void free_propagate_inplace(Field& f, const MassVector& masses, double dt);

/// Per-component profiles on their native frequency grids xi = eta / m_j,
/// stored in ascending xi order.
struct Profile {
  double time = 0.0;
  std::vector<std::vector<double>> xi;
  std::vector<std::vector<cplx>> alpha;

  std::size_t components() const { return alpha.size(); }
};

/// Throws std::invalid_argument if f.time < 0.
Profile compute_profile(const Field& f, const MassVector& masses);

/// Local cubic (4-point Lagrange) interpolation of real and imaginary parts
/// onto `target`. Throws std::out_of_range outside a component's native range.
ComplexMatrix resample_profiles(const Profile& profiles, std::span<const double> target);

/// W(t) = G M(t) G^{-1} acting on native-grid profiles; inverse applies
/// W(t)^{-1} = G M(-t) G^{-1}. Throws std::invalid_argument for t <= 0.
Profile apply_W(const Profile& p, const Grid& grid, const MassVector& masses, double t, bool inverse);

struct FieldNorms {
  std::vector<double> l2;  // per component
  double linf = 0.0;       // max over components and grid points
  double h1 = 0.0;         // sum_j ||<i d_x> u_j||_{L2}
  double weighted = 0.0;   // sum_j ||x U_j(-t) u_j||_{L2}
};

FieldNorms norms(const Field& f, const MassVector& masses);

/// ||u||_{H^{1,0}} + ||u||_{H^{0,1}}, summed over components.
double epsilon_norm(const Field& f);

/// Fraction of spectral mass in the top 10% of |eta| bins.
double aliasing_fraction(const Field& f);

struct WrapCheck {
  double reach = 0.0;  // max_j (eta_sig / m_j * horizon + r_j)
  double half_length = 0.0;
  bool ok = true;
};

/// No-wrap criterion for a run of length `horizon` starting from f.
WrapCheck check_no_wrap(const Field& f, const MassVector& masses, double horizon,
                        double tail_fraction = 1e-10);

// ---- line-oriented snapshot files ------------------------------------------------
// Header line "t L n N", then N blocks of n lines "x re im" (or "xi re im").

void write_field(std::ostream& os, const Field& f);
/// Throws std::runtime_error on malformed input.
Field read_field(std::istream& is);
void write_profile(std::ostream& os, const Profile& p, const Grid& grid);

}  // namespace cnls

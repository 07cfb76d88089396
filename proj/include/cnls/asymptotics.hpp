// Frequency-pointwise reduced dynamics d(alpha)/ds = -i F(alpha), s = log t,
// its comparison with PDE profiles, and decay-law fits.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cnls/algebra.hpp"
#include "cnls/matrix.hpp"
#include "cnls/spectral.hpp"

namespace cnls {

/// Profiles of a run resampled onto one common xi grid.
struct ProfileSeries {
  std::vector<double> xi;
  std::vector<double> times;
  std::vector<ComplexMatrix> values;  // N x |xi| per time

  std::size_t size() const { return times.size(); }
};

struct ProfileSeriesOptions {
  double t_min = 1.0;          // snapshots before t_min are skipped
  double crop_relative = 1e-6;  // keep the xi range where max_j |alpha_j(t_first)| exceeds this fraction
};

/// The common grid has spacing deta / m_min and stays inside every
/// component's native frequency range. Throws std::invalid_argument when
/// snapshots disagree on the grid or no snapshot has t >= t_min.
ProfileSeries build_profile_series(const std::vector<Field>& snapshots, const MassVector& masses,
                                   const ProfileSeriesOptions& options = {});

struct ReducedState {
  double s = 0.0;
  ComplexMatrix alpha;  // N x |xi|
};

/// -i F(alpha).
std::vector<cplx> reduced_rhs(std::span<const cplx> alpha, const CubicNonlinearity& f);

/// RK4 in s, column by column. The state is returned at s0 and at each entry
/// of `sample_s` (sorted, inside (s0, s1]) plus s1; the step is shrunk so the
/// samples are hit exactly. Throws NumericalBlowup on non-finite values.
std::vector<ReducedState> integrate_reduced(const ComplexMatrix& alpha0, const CubicNonlinearity& f, double s0,
                                            double s1, double ds, std::span<const double> sample_s = {},
                                            bool parallel = true);

/// Evenly spaced samples s0 + k (s1 - s0) / count, k = 1..count.
std::vector<double> uniform_samples(double s0, double s1, std::size_t count);

struct LyapunovSeries {
  std::vector<double> time;                       // s or t
  std::vector<std::vector<double>> values;        // [time][xi] alpha . A alpha
  std::vector<std::vector<double>> differences;   // [time-1][xi] forward differences
};

LyapunovSeries lyapunov_series(const std::vector<ReducedState>& series, const HermitianForm& a);
LyapunovSeries lyapunov_series(const ProfileSeries& series, const HermitianForm& a);

struct DeviationSeries {
  std::vector<double> t;
  std::vector<double> deviation;  // max_{j, xi} |alpha_pde - alpha_ode|
  std::vector<double> max_alpha;  // max_{j, xi} |alpha_pde|
};

/// Integrates the reduced ODE from the first PDE profile and compares at every
/// later sample time.
DeviationSeries compare_pde_ode(const ProfileSeries& pde, const SystemSpec& spec, double ds);

/// Bounds are in log t so that windows may reach t = e^{10^4}.
struct FitWindow {
  double log_t_min = 0.0;
  double log_t_max = 0.0;
};

struct ConstrainedFit {
  double log_c = 0.0;
  double c = 0.0;
  double q = 0.0;
  double residual = 0.0;
};

/// log a = log c - p log t - q log log t.
struct DecayFit {
  double log_c = 0.0;
  double c = 0.0;
  double p = 0.0;
  double q = 0.0;
  double residual = 0.0;  // RMS in log a
  FitWindow window;       // actual extent of the samples used
  std::size_t samples = 0;
  bool degenerate = false;
  double condition = 0.0;
  ConstrainedFit constrained;  // p fixed at 1/2
};

/// Samples given as (log t, log a); a = t^{-1/2}|alpha| underflows long
/// before s = log t reaches 10^4. Throws std::invalid_argument unless the
/// window holds >= 10 finite samples with t >= 2.
DecayFit fit_decay_log(std::span<const double> log_t, std::span<const double> log_a, FitWindow window);
/// Same on plain (t, a) pairs; non-positive amplitudes are skipped.
DecayFit fit_decay(std::span<const double> t, std::span<const double> a, FitWindow window);

struct OptimalityResult {
  double liminf_estimate = 0.0;  // min of s (alpha . A alpha) over the final quarter
  double floor = 0.0;            // lambda_min(A)^2 / (4 C_*)
  bool passed = false;
  std::size_t xi_index = 0;
};

/// Throws std::invalid_argument if the series does not reach s >= 100 or the
/// initial profile vanishes.
OptimalityResult optimality_check(const std::vector<ReducedState>& series, const HermitianForm& a, double c_star);

/// Column selection for long reduced runs: at most `max_columns` evenly spaced
/// indices, always including `must_include`.
std::vector<std::size_t> subsample_columns(std::size_t n_columns, std::size_t max_columns, std::size_t must_include);

/// log(t^{-1/2} max_xi |alpha(xi)|) at t = e^s for each state, |.| the norm on C^N.
std::vector<double> reduced_log_amplitude(const std::vector<ReducedState>& series);

/// max_{j, xi} |alpha| and the column where it is attained.
std::pair<double, std::size_t> max_abs_column(const ComplexMatrix& alpha);

}  // namespace cnls

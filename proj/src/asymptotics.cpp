#include "cnls/asymptotics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cnls/kernels.hpp"
#include "cnls/solver.hpp"

namespace cnls {

ProfileSeries build_profile_series(const std::vector<Field>& snapshots, const MassVector& masses,
                                   const ProfileSeriesOptions& options) {
  if (!(options.t_min > 0.0)) throw std::invalid_argument("profile series: t_min must be positive");
  std::vector<const Field*> used;
  for (const auto& f : snapshots)
    if (f.time >= options.t_min * (1.0 - 1e-12)) used.push_back(&f);
  if (used.empty()) throw std::invalid_argument("profile series: no snapshot at t >= t_min");
  std::sort(used.begin(), used.end(), [](const Field* a, const Field* b) { return a->time < b->time; });
  const Grid& g = *used.front()->grid;
  for (const Field* f : used) {
    if (f->grid->size() != g.size() || std::abs(f->grid->half_length() - g.half_length()) > 1e-12 * g.half_length())
      throw std::invalid_argument("profile series: snapshots live on different grids");
    if (f->components() != masses.size()) throw std::invalid_argument("profile series: component count mismatch");
  }
  for (std::size_t i = 1; i < used.size(); ++i)
    if (!(used[i]->time > used[i - 1]->time)) throw std::invalid_argument("profile series: repeated snapshot time");

  const double h = g.deta() / masses.min();
  const double reach = (static_cast<double>(g.size() / 2) - 1.0) * g.deta() / masses.max();
  const auto half = static_cast<long>(std::floor(reach / h * (1.0 + 1e-12)));
  std::vector<double> full(static_cast<std::size_t>(2 * half + 1));
  for (long i = -half; i <= half; ++i) full[static_cast<std::size_t>(i + half)] = static_cast<double>(i) * h;

  const auto first = resample_profiles(compute_profile(*used.front(), masses), full);
  std::vector<double> col_max(full.size(), 0.0);
  double peak = 0.0;
  for (std::size_t c = 0; c < full.size(); ++c) {
    for (std::size_t j = 0; j < first.rows(); ++j) col_max[c] = std::max(col_max[c], std::abs(first(j, c)));
    peak = std::max(peak, col_max[c]);
  }
  std::size_t lo = 0, hi = full.size() - 1;
  if (peak > 0.0) {
    const double cut = options.crop_relative * peak;
    while (lo < hi && col_max[lo] < cut) ++lo;
    while (hi > lo && col_max[hi] < cut) --hi;
    lo = lo >= 2 ? lo - 2 : 0;
    hi = std::min(hi + 2, full.size() - 1);
  }

  ProfileSeries out;
  out.xi.assign(full.begin() + static_cast<std::ptrdiff_t>(lo), full.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
  for (const Field* f : used) {
    out.times.push_back(f->time);
    out.values.push_back(resample_profiles(compute_profile(*f, masses), out.xi));
  }
  return out;
}

std::vector<cplx> reduced_rhs(std::span<const cplx> alpha, const CubicNonlinearity& f) {
  auto out = f(alpha);
  for (cplx& v : out) v = cplx(v.imag(), -v.real());
  return out;
}

std::vector<double> uniform_samples(double s0, double s1, std::size_t count) {
  std::vector<double> out;
  for (std::size_t k = 1; k <= count; ++k)
    out.push_back(s0 + (s1 - s0) * static_cast<double>(k) / static_cast<double>(count));
  return out;
}

std::vector<ReducedState> integrate_reduced(const ComplexMatrix& alpha0, const CubicNonlinearity& f, double s0,
                                            double s1, double ds, std::span<const double> sample_s, bool parallel) {
  if (!(s1 > s0)) throw std::invalid_argument("integrate_reduced: need s0 < s1");
  if (!(ds > 0.0)) throw std::invalid_argument("integrate_reduced: ds must be positive");
  if (alpha0.rows() != f.components()) throw std::invalid_argument("integrate_reduced: component count mismatch");
  std::vector<double> stops;
  for (double s : sample_s)
    if (s > s0 && s < s1) stops.push_back(s);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  stops.push_back(s1);

  std::vector<ReducedState> out;
  out.push_back({s0, alpha0});
  ComplexMatrix z = alpha0;
  double s = s0;
  for (double stop : stops) {
    const double span = stop - s;
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(span / ds - 1e-9)));
    const double h = span / static_cast<double>(steps);
    const bool ok = f.empty() || (parallel ? kernels::rk4_columns(z, f, h, steps)
                                           : kernels::rk4_columns_serial(z, f, h, steps));
    if (!ok) throw NumericalBlowup("reduced ODE produced a non-finite value before s=" + std::to_string(stop), s);
    s = stop;
    out.push_back({s, z});
  }
  return out;
}

namespace {

std::vector<double> column_quadratics(const ComplexMatrix& alpha, const HermitianForm& a) {
  if (alpha.rows() != a.size()) throw std::invalid_argument("lyapunov_series: dimension mismatch");
  std::vector<double> out(alpha.cols());
  std::vector<cplx> z(alpha.rows());
  for (std::size_t c = 0; c < alpha.cols(); ++c) {
    for (std::size_t j = 0; j < alpha.rows(); ++j) z[j] = alpha(j, c);
    out[c] = a.quadratic(z.data());
  }
  return out;
}

void fill_differences(LyapunovSeries& ls) {
  for (std::size_t i = 1; i < ls.values.size(); ++i) {
    std::vector<double> d(ls.values[i].size());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = ls.values[i][c] - ls.values[i - 1][c];
    ls.differences.push_back(std::move(d));
  }
}

}  // namespace

LyapunovSeries lyapunov_series(const std::vector<ReducedState>& series, const HermitianForm& a) {
  LyapunovSeries ls;
  for (const auto& st : series) {
    ls.time.push_back(st.s);
    ls.values.push_back(column_quadratics(st.alpha, a));
  }
  fill_differences(ls);
  return ls;
}

LyapunovSeries lyapunov_series(const ProfileSeries& series, const HermitianForm& a) {
  LyapunovSeries ls;
  for (std::size_t i = 0; i < series.size(); ++i) {
    ls.time.push_back(series.times[i]);
    ls.values.push_back(column_quadratics(series.values[i], a));
  }
  fill_differences(ls);
  return ls;
}

std::pair<double, std::size_t> max_abs_column(const ComplexMatrix& alpha) {
  double best = 0.0;
  std::size_t at = 0;
  for (std::size_t c = 0; c < alpha.cols(); ++c)
    for (std::size_t j = 0; j < alpha.rows(); ++j)
      if (std::abs(alpha(j, c)) > best) {
        best = std::abs(alpha(j, c));
        at = c;
      }
  return {best, at};
}

std::vector<double> reduced_log_amplitude(const std::vector<ReducedState>& series) {
  std::vector<double> out;
  for (const auto& st : series) {
    double peak = 0.0;
    for (std::size_t c = 0; c < st.alpha.cols(); ++c) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < st.alpha.rows(); ++j) norm2 += std::norm(st.alpha(j, c));
      peak = std::max(peak, norm2);
    }
    out.push_back(-0.5 * st.s + 0.5 * std::log(peak));
  }
  return out;
}

DeviationSeries compare_pde_ode(const ProfileSeries& pde, const SystemSpec& spec, double ds) {
  if (pde.size() == 0) throw std::invalid_argument("compare_pde_ode: empty profile series");
  if (pde.times.front() < 1.0) throw std::invalid_argument("compare_pde_ode: first profile time must be >= 1");
  for (const auto& v : pde.values)
    if (v.rows() != spec.components() || v.cols() != pde.xi.size())
      throw std::invalid_argument("compare_pde_ode: profile grid mismatch");

  DeviationSeries out;
  const double s0 = std::log(pde.times.front());
  std::vector<ReducedState> ode{{s0, pde.values.front()}};
  if (pde.size() > 1) {
    std::vector<double> samples;
    for (std::size_t i = 1; i < pde.size(); ++i) samples.push_back(std::log(pde.times[i]));
    ode = integrate_reduced(pde.values.front(), spec.nonlinearity, s0, samples.back(), ds, samples);
  }
  if (ode.size() != pde.size()) throw std::logic_error("compare_pde_ode: sample bookkeeping mismatch");
  for (std::size_t i = 0; i < pde.size(); ++i) {
    double dev = 0.0;
    const auto& a = pde.values[i];
    const auto& b = ode[i].alpha;
    for (std::size_t k = 0; k < a.data().size(); ++k) dev = std::max(dev, std::abs(a.data()[k] - b.data()[k]));
    out.t.push_back(pde.times[i]);
    out.deviation.push_back(dev);
    out.max_alpha.push_back(max_abs_column(a).first);
  }
  return out;
}

DecayFit fit_decay(std::span<const double> t, std::span<const double> a, FitWindow window) {
  if (t.size() != a.size()) throw std::invalid_argument("fit_decay: length mismatch");
  std::vector<double> lt, la;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || !(a[i] > 0.0)) continue;
    lt.push_back(std::log(t[i]));
    la.push_back(std::log(a[i]));
  }
  return fit_decay_log(lt, la, window);
}

DecayFit fit_decay_log(std::span<const double> log_t, std::span<const double> log_a, FitWindow window) {
  if (log_t.size() != log_a.size()) throw std::invalid_argument("fit_decay: length mismatch");
  const double log2 = std::log(2.0);
  std::vector<double> lt, la;
  for (std::size_t i = 0; i < log_t.size(); ++i) {
    const double x = log_t[i];
    if (x < window.log_t_min || x > window.log_t_max || x < log2) continue;
    if (!std::isfinite(log_a[i])) continue;
    lt.push_back(x);
    la.push_back(log_a[i]);
  }
  const std::size_t m = lt.size();
  if (m < 10) throw std::invalid_argument("fit_decay: window holds " + std::to_string(m) + " usable samples (need 10)");

  DecayFit fit;
  fit.samples = m;
  fit.window = {*std::min_element(lt.begin(), lt.end()), *std::max_element(lt.begin(), lt.end())};

  // Columns [1, -log t, -log log t], scaled to unit norm before the QR.
  Eigen::MatrixXd x(m, 3);
  Eigen::VectorXd y(m);
  for (std::size_t i = 0; i < m; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = -lt[i];
    x(i, 2) = -std::log(lt[i]);
    y(i) = la[i];
  }
  Eigen::Vector3d scale;
  for (int c = 0; c < 3; ++c) {
    scale(c) = x.col(c).norm();
    if (scale(c) == 0.0) scale(c) = 1.0;
    x.col(c) /= scale(c);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const auto diag = qr.matrixR().diagonal().cwiseAbs();
  fit.condition = diag.minCoeff() > 0.0 ? diag.maxCoeff() / diag.minCoeff() : std::numeric_limits<double>::infinity();
  fit.degenerate = qr.rank() < 3 || fit.condition > 1e10;
  Eigen::Vector3d beta = qr.solve(y);
  fit.residual = std::sqrt((x * beta - y).squaredNorm() / static_cast<double>(m));
  beta = beta.cwiseQuotient(scale);
  fit.log_c = beta(0);
  fit.c = std::exp(beta(0));
  fit.p = beta(1);
  fit.q = beta(2);

  // p = 1/2: log a + log t / 2 = log c - q log log t.
  double mx = 0.0, my = 0.0;
  std::vector<double> u(m), v(m);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = -std::log(lt[i]);
    v[i] = la[i] + 0.5 * lt[i];
    mx += u[i] / static_cast<double>(m);
    my += v[i] / static_cast<double>(m);
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (u[i] - mx) * (u[i] - mx);
    sxy += (u[i] - mx) * (v[i] - my);
  }
  auto& cf = fit.constrained;
  cf.q = sxx > 0.0 ? sxy / sxx : 0.0;
  cf.log_c = my - cf.q * mx;
  cf.c = std::exp(cf.log_c);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = cf.log_c + cf.q * u[i] - v[i];
    ss += r * r;
  }
  cf.residual = std::sqrt(ss / static_cast<double>(m));
  if (!(sxx > 0.0)) fit.degenerate = true;
  return fit;
}

OptimalityResult optimality_check(const std::vector<ReducedState>& series, const HermitianForm& a, double c_star) {
  if (series.empty() || series.back().s < 100.0)
    throw std::invalid_argument("optimality_check: the series must reach s >= 100");
  const auto [peak, col] = max_abs_column(series.front().alpha);
  if (!(peak > 0.0)) throw std::invalid_argument("optimality_check: initial profile is identically zero");

  OptimalityResult r;
  r.xi_index = col;
  r.floor = c_star > 0.0 ? a.lambda_min() * a.lambda_min() / (4.0 * c_star) : 0.0;
  const double s_from = series.front().s + 0.75 * (series.back().s - series.front().s);
  std::vector<cplx> z(a.size());
  r.liminf_estimate = std::numeric_limits<double>::infinity();
  for (const auto& st : series) {
    if (st.s < s_from) continue;
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = st.alpha(j, col);
    r.liminf_estimate = std::min(r.liminf_estimate, st.s * a.quadratic(z.data()));
  }
  r.passed = r.liminf_estimate > r.floor;
  return r;
}

std::vector<std::size_t> subsample_columns(std::size_t n_columns, std::size_t max_columns, std::size_t must_include) {
  std::vector<std::size_t> out;
  if (n_columns == 0) return out;
  if (n_columns <= max_columns) {
    for (std::size_t i = 0; i < n_columns; ++i) out.push_back(i);
    return out;
  }
  if (max_columns < 3) return {std::min(must_include, n_columns - 1)};
  const std::size_t picks = max_columns - 1;
  for (std::size_t i = 0; i < picks; ++i)
    out.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(n_columns - 1) /
                                                        static_cast<double>(picks - 1))));
  out.push_back(std::min(must_include, n_columns - 1));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace cnls

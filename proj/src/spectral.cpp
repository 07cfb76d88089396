#include "cnls/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cnls {

namespace detail {

// fftw planning is not thread safe; execution with new arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftPlans {
  explicit FftPlans(std::size_t n) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_complex* buf = fftw_alloc_complex(n);
    const int len = static_cast<int>(n);
    forward = fftw_plan_dft_1d(len, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    backward = fftw_plan_dft_1d(len, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!forward || !backward) throw std::runtime_error("fftw plan creation failed");
  }
  ~FftPlans() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

}  // namespace detail

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2 pi)
const cplx kRootMinusI = std::polar(1.0, -std::numbers::pi / 4.0);

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// e^{i eta_k L} = (-1)^k for the grid origin at -L.
inline double parity(std::size_t k) { return (k & 1U) ? -1.0 : 1.0; }

inline std::size_t to_ascending(std::size_t k, std::size_t n) { return (k + n / 2) % n; }

}  // namespace

Grid::Grid(double half_length, std::size_t n_points)
    : half_length_(half_length), n_(n_points), dx_(0.0), deta_(0.0) {
  if (!(half_length > 0.0) || !std::isfinite(half_length))
    throw std::invalid_argument("grid half length must be positive");
  if (n_points < 16 || !is_power_of_two(n_points))
    throw std::invalid_argument("grid size must be a power of two >= 16");
  dx_ = 2.0 * half_length_ / static_cast<double>(n_);
  deta_ = std::numbers::pi / half_length_;
  x_.resize(n_);
  eta_.resize(n_);
  for (std::size_t k = 0; k < n_; ++k) {
    x_[k] = -half_length_ + static_cast<double>(k) * dx_;
    const auto signed_k = k < n_ / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n_);
    eta_[k] = signed_k * deta_;
  }
  plans_ = std::make_unique<detail::FftPlans>(n_);
}

Grid::~Grid() = default;

void Grid::dft_forward(std::span<cplx> data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plans_->forward, p, p);
}

void Grid::dft_backward(std::span<cplx> data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plans_->backward, p, p);
}

GridPtr make_grid(double half_length, std::size_t n_points) {
  return std::make_shared<const Grid>(half_length, n_points);
}

void Field::validate() const {
  if (!grid) throw std::invalid_argument("field has no grid");
  if (values.cols() != grid->size()) throw std::invalid_argument("field length does not match its grid");
  for (const cplx& v : values.data())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::invalid_argument("field contains non-finite values");
}

Field zero_field(GridPtr grid, std::size_t components, double time) {
  const std::size_t n = grid->size();
  return Field{time, std::move(grid), ComplexMatrix(components, n)};
}

SpectralField forward_transform(const Field& f) {
  const Grid& g = *f.grid;
  SpectralField out{f.time, f.grid, f.values};
  const double scale = g.dx() * kInvSqrt2Pi;
  for (std::size_t j = 0; j < out.coeffs.rows(); ++j) {
    auto row = out.coeffs.row(j);
    g.dft_forward(row);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] *= scale * parity(k);
  }
  return out;
}

Field backward_transform(const SpectralField& s) {
  const Grid& g = *s.grid;
  Field out{s.time, s.grid, s.coeffs};
  const double scale = 1.0 / (g.dx() * kInvSqrt2Pi * static_cast<double>(g.size()));
  for (std::size_t j = 0; j < out.values.rows(); ++j) {
    auto row = out.values.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] *= scale * parity(k);
    g.dft_backward(row);
  }
  return out;
}

FreePropagator::FreePropagator(GridPtr grid, const MassVector& masses, double dt)
    : grid_(std::move(grid)), dt_(dt), multipliers_(masses.size(), grid_->size()) {
  const auto eta = grid_->frequencies();
  const double inv_n = 1.0 / static_cast<double>(grid_->size());
  for (std::size_t j = 0; j < masses.size(); ++j) {
    const double w = dt / (2.0 * masses[j]);
    for (std::size_t k = 0; k < eta.size(); ++k)
      multipliers_(j, k) = std::polar(inv_n, -w * eta[k] * eta[k]);
  }
}

void FreePropagator::apply(ComplexMatrix& values) const {
  if (values.rows() != multipliers_.rows() || values.cols() != multipliers_.cols())
    throw std::invalid_argument("free propagation: field shape does not match the propagator");
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(values.rows());
#pragma omp parallel for schedule(static) if (rows > 1)
  for (std::ptrdiff_t j = 0; j < rows; ++j) {
    auto row = values.row(static_cast<std::size_t>(j));
    const auto mult = multipliers_.row(static_cast<std::size_t>(j));
    grid_->dft_forward(row);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] *= mult[k];
    grid_->dft_backward(row);
  }
}

void free_propagate_inplace(Field& f, const MassVector& masses, double dt) {
  if (masses.size() != f.components()) throw std::invalid_argument("free_propagate: mass count mismatch");
  if (dt != 0.0) FreePropagator(f.grid, masses, dt).apply(f.values);
  f.time += dt;
}

Field free_propagate(const Field& f, const MassVector& masses, double dt) {
  Field out = f;
  free_propagate_inplace(out, masses, dt);
  return out;
}

Profile compute_profile(const Field& f, const MassVector& masses) {
  if (f.time < 0.0) throw std::invalid_argument("compute_profile: negative time");
  if (masses.size() != f.components()) throw std::invalid_argument("compute_profile: mass count mismatch");
  const auto spec = forward_transform(f);
  const auto eta = f.grid->frequencies();
  const std::size_t n = eta.size();
  Profile p;
  p.time = f.time;
  p.xi.assign(f.components(), std::vector<double>(n));
  p.alpha.assign(f.components(), std::vector<cplx>(n));
  for (std::size_t j = 0; j < f.components(); ++j) {
    const double m = masses[j];
    const cplx pre = std::sqrt(m) * kRootMinusI;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t a = to_ascending(k, n);
      p.xi[j][a] = eta[k] / m;
      p.alpha[j][a] = pre * std::polar(1.0, f.time * eta[k] * eta[k] / (2.0 * m)) * spec.coeffs(j, k);
    }
  }
  return p;
}

ComplexMatrix resample_profiles(const Profile& profiles, std::span<const double> target) {
  const std::size_t n_comp = profiles.components();
  ComplexMatrix out(n_comp, target.size());
  for (std::size_t j = 0; j < n_comp; ++j) {
    const auto& xi = profiles.xi[j];
    const auto& a = profiles.alpha[j];
    const std::size_t n = xi.size();
    if (n < 4 || a.size() != n) throw std::invalid_argument("resample_profiles: malformed profile");
    const double x0 = xi.front();
    const double h = (xi.back() - xi.front()) / static_cast<double>(n - 1);
    const double slack = 1e-9 * h;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double x = target[i];
      if (x < xi.front() - slack || x > xi.back() + slack)
        throw std::out_of_range("resample_profiles: target outside the native frequency range");
      const double t = std::clamp((x - x0) / h, 0.0, static_cast<double>(n - 1));
      const auto cell = static_cast<std::size_t>(std::floor(t));
      const std::size_t base = std::min(cell > 0 ? cell - 1 : 0, n - 4);
      const double u = t - static_cast<double>(base);  // in [0, 3]
      const double w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
      const double w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
      const double w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
      const double w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
      out(j, i) = w0 * a[base] + w1 * a[base + 1] + w2 * a[base + 2] + w3 * a[base + 3];
    }
  }
  return out;
}

Profile apply_W(const Profile& p, const Grid& grid, const MassVector& masses, double t, bool inverse) {
  if (!(t > 0.0)) throw std::invalid_argument("apply_W requires t > 0");
  if (masses.size() != p.components()) throw std::invalid_argument("apply_W: mass count mismatch");
  const std::size_t n = grid.size();
  const auto x = grid.positions();
  const double sign = inverse ? -1.0 : 1.0;
  Profile out = p;
  std::vector<cplx> buf(n);
  for (std::size_t j = 0; j < p.components(); ++j) {
    if (p.alpha[j].size() != n) throw std::invalid_argument("apply_W: profile does not match the grid");
    // The sqrt(m/i) factors of G and G^{-1} cancel; what remains is the chirp
    // conjugated by the unitary transform pair on the native grid.
    for (std::size_t k = 0; k < n; ++k) buf[k] = p.alpha[j][to_ascending(k, n)] * parity(k);
    grid.dft_backward(buf);
    const double w = sign * masses[j] / (2.0 * t);
    for (std::size_t k = 0; k < n; ++k) buf[k] *= std::polar(1.0 / static_cast<double>(n), w * x[k] * x[k]);
    grid.dft_forward(buf);
    for (std::size_t k = 0; k < n; ++k) out.alpha[j][to_ascending(k, n)] = buf[k] * parity(k);
  }
  return out;
}

FieldNorms norms(const Field& f, const MassVector& masses) {
  const Grid& g = *f.grid;
  const double dx = g.dx(), deta = g.deta();
  const auto x = g.positions();
  const auto eta = g.frequencies();
  FieldNorms out;
  out.l2.resize(f.components());
  for (std::size_t j = 0; j < f.components(); ++j) {
    double s = 0.0;
    for (const cplx& v : f.values.row(j)) {
      s += std::norm(v);
      out.linf = std::max(out.linf, std::abs(v));
    }
    out.l2[j] = std::sqrt(s * dx);
  }
  const auto spec = forward_transform(f);
  for (std::size_t j = 0; j < f.components(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < eta.size(); ++k) s += (1.0 + eta[k] * eta[k]) * std::norm(spec.coeffs(j, k));
    out.h1 += std::sqrt(s * deta);
  }
  Field back = f;
  if (f.time != 0.0) FreePropagator(f.grid, masses, -f.time).apply(back.values);
  for (std::size_t j = 0; j < f.components(); ++j) {
    double s = 0.0;
    const auto row = back.values.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) s += x[k] * x[k] * std::norm(row[k]);
    out.weighted += std::sqrt(s * dx);
  }
  return out;
}

double epsilon_norm(const Field& f) {
  const Grid& g = *f.grid;
  const auto x = g.positions();
  const auto eta = g.frequencies();
  const auto spec = forward_transform(f);
  double total = 0.0;
  for (std::size_t j = 0; j < f.components(); ++j) {
    double h10 = 0.0, h01 = 0.0;
    for (std::size_t k = 0; k < eta.size(); ++k) {
      h10 += (1.0 + eta[k] * eta[k]) * std::norm(spec.coeffs(j, k));
      h01 += (1.0 + x[k] * x[k]) * std::norm(f.values(j, k));
    }
    total += std::sqrt(h10 * g.deta()) + std::sqrt(h01 * g.dx());
  }
  return total;
}

double aliasing_fraction(const Field& f) {
  const auto spec = forward_transform(f);
  const std::size_t n = f.grid->size();
  const std::size_t top = n / 20;  // top 10% of bins: |k| > n/2 - n/20
  double tail = 0.0, total = 0.0;
  for (std::size_t j = 0; j < f.components(); ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t mag = k <= n / 2 ? k : n - k;
      const double w = std::norm(spec.coeffs(j, k));
      total += w;
      if (mag + top >= n / 2) tail += w;
    }
  }
  return total > 0.0 ? tail / total : 0.0;
}

WrapCheck check_no_wrap(const Field& f, const MassVector& masses, double horizon, double tail_fraction) {
  const Grid& g = *f.grid;
  const std::size_t n = g.size();
  const auto spec = forward_transform(f);
  WrapCheck out;
  out.half_length = g.half_length();
  for (std::size_t j = 0; j < f.components(); ++j) {
    // Mass bucketed by |k| (frequency) and by distance from the origin.
    std::vector<double> by_freq(n / 2 + 1, 0.0), by_pos(n / 2 + 1, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double w = std::norm(spec.coeffs(j, k));
      by_freq[k <= n / 2 ? k : n - k] += w;
      total += w;
      const std::size_t d = k >= n / 2 ? k - n / 2 : n / 2 - k;  // |x_k| / dx
      by_pos[d] += std::norm(f.values(j, k));
    }
    if (!(total > 0.0)) continue;
    double pos_total = 0.0;
    for (double w : by_pos) pos_total += w;
    auto cutoff = [&](const std::vector<double>& mass, double tot) {
      double tail = 0.0;
      std::size_t idx = mass.size() - 1;
      while (idx > 0) {
        if (tail + mass[idx] > tail_fraction * tot) break;
        tail += mass[idx];
        --idx;
      }
      return idx;
    };
    const double eta_sig = static_cast<double>(cutoff(by_freq, total)) * g.deta();
    const double radius = static_cast<double>(cutoff(by_pos, pos_total)) * g.dx();
    out.reach = std::max(out.reach, eta_sig / masses[j] * horizon + radius);
  }
  out.ok = out.reach < out.half_length;
  return out;
}

// ---- files ---------------------------------------------------------------------------

namespace {

void write_header(std::ostream& os, double t, double L, std::size_t n, std::size_t comps) {
  os << t << ' ' << L << ' ' << n << ' ' << comps << '\n';
}

bool next_data_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace

void write_field(std::ostream& os, const Field& f) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  write_header(os, f.time, f.grid->half_length(), f.grid->size(), f.components());
  const auto x = f.grid->positions();
  for (std::size_t j = 0; j < f.components(); ++j)
    for (std::size_t k = 0; k < x.size(); ++k)
      os << x[k] << ' ' << f.values(j, k).real() << ' ' << f.values(j, k).imag() << '\n';
  os.flags(flags);
  os.precision(prec);
}

Field read_field(std::istream& is) {
  std::string line;
  if (!next_data_line(is, line)) throw std::runtime_error("snapshot: missing header");
  double t = 0.0, L = 0.0;
  long long n = 0, comps = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> t >> L >> n >> comps) || n <= 0 || comps <= 0)
      throw std::runtime_error("snapshot: malformed header '" + line + "'");
  }
  GridPtr grid;
  try {
    grid = make_grid(L, static_cast<std::size_t>(n));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("snapshot: ") + e.what());
  }
  Field f = zero_field(grid, static_cast<std::size_t>(comps), t);
  const auto x = grid->positions();
  for (std::size_t j = 0; j < f.components(); ++j) {
    for (std::size_t k = 0; k < grid->size(); ++k) {
      if (!next_data_line(is, line)) throw std::runtime_error("snapshot: truncated data");
      std::istringstream ls(line);
      double xv = 0.0, re = 0.0, im = 0.0;
      if (!(ls >> xv >> re >> im)) throw std::runtime_error("snapshot: malformed row '" + line + "'");
      if (std::abs(xv - x[k]) > 1e-9 * (1.0 + L)) throw std::runtime_error("snapshot: x column does not match the grid");
      f.values(j, k) = {re, im};
    }
  }
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("snapshot: ") + e.what());
  }
  return f;
}

void write_profile(std::ostream& os, const Profile& p, const Grid& grid) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  write_header(os, p.time, grid.half_length(), grid.size(), p.components());
  for (std::size_t j = 0; j < p.components(); ++j)
    for (std::size_t k = 0; k < p.xi[j].size(); ++k)
      os << p.xi[j][k] << ' ' << p.alpha[j][k].real() << ' ' << p.alpha[j][k].imag() << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace cnls

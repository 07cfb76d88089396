// Strang-split pseudospectral integration of
//   i d_t u_j + (1/2m_j) d_x^2 u_j = F_j(u)
// on the periodic grid, with observers sampled at stride boundaries.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnls/algebra.hpp"
#include "cnls/spectral.hpp"

namespace cnls {

class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(const std::string& what, double last_good_time)
      : std::runtime_error(what), time_(last_good_time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class WrapViolation : public std::runtime_error {
 public:
  WrapViolation(const std::string& what, WrapCheck check) : std::runtime_error(what), check_(check) {}
  const WrapCheck& check() const { return check_; }

 private:
  WrapCheck check_;
};

/// The system fails the gauge (mass-resonance) condition.
class StructuralViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WrapPolicy { refuse, warn };

struct SolverConfig {
  double dt = 0.01;
  double t_end = 100.0;
  std::size_t observer_stride = 1;
  std::size_t nonlinear_substeps = 1;
  /// Must be multiples of dt inside [0, t_end].
  std::vector<double> snapshot_times;
  WrapPolicy wrap_policy = WrapPolicy::refuse;
  bool skip_structural_checks = false;
  double blowup_threshold = 1e6;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  std::size_t steps() const;
};

struct GuardStatus {
  bool gauge_checked = false;
  bool gauge_passed = false;
  WrapCheck wrap;
  double final_aliasing = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> linf;
  std::vector<std::vector<double>> l2;  // l2[j][i] for component j at times[i]
  std::vector<double> h1;
  std::vector<double> a_mass;  // empty without a certificate
  std::vector<double> xweighted;
  std::vector<Field> snapshots;
  GuardStatus guards;

  std::size_t size() const { return times.size(); }
};

/// Called at every recorded time with the current field.
using Observer = std::function<void(const Field&)>;

/// dz/dt = -i F(z) pointwise, RK4 with `substeps` substeps. Throws
/// NumericalBlowup (carrying `time`) if a value becomes non-finite.
void nonlinear_step(ComplexMatrix& z, const CubicNonlinearity& f, double dt, std::size_t substeps = 1,
                    double time = 0.0);

/// One unfused Strang step: U(dt/2), N(dt), U(dt/2).
Field strang_step(const Field& f, const SystemSpec& spec, double dt, std::size_t substeps = 1);

/// Q_A = sum_{j,k} A_jk int u_k conj(u_j) dx.
double a_mass(const Field& f, const HermitianForm& a);
/// int Im(F(u) . A u) dx, so that dQ_A/dt = 2 * a_mass_rate.
double a_mass_rate(const Field& f, const CubicNonlinearity& nl, const HermitianForm& a);

/// Throws StructuralViolation, WrapViolation, NumericalBlowup or
/// std::invalid_argument.
Trajectory integrate(const SystemSpec& spec, const Field& u0, const SolverConfig& config,
                     const std::vector<Observer>& observers = {});

enum class InitialKind { gaussian, sech, file };

InitialKind parse_initial_kind(const std::string& name);
std::string to_string(InitialKind kind);

/// Component j is amplitudes[j] * profile(x / width) with profile exp(-x^2/2)
/// or sech(x). Throws std::invalid_argument for width <= 0.
Field make_initial_data(InitialKind kind, std::span<const cplx> amplitudes, double width, GridPtr grid);
/// Reads a snapshot file; throws std::runtime_error if it is missing or malformed.
Field load_initial_data(const std::filesystem::path& path);
/// Scales f so that epsilon_norm(f) == eps. Throws for a zero field.
void rescale_to_epsilon(Field& f, double eps);

}  // namespace cnls

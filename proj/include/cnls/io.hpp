// JSON and CSV formats shared by the command-line pipeline.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cnls/algebra.hpp"
#include "cnls/asymptotics.hpp"
#include "cnls/solver.hpp"

namespace cnls {

using json = nlohmann::json;

/// Accepts "2", "-i", "i", "1+2i", "-0.5-1e-3i", "(1,2)". Throws
/// std::invalid_argument otherwise.
cplx parse_complex(std::string_view text);
std::string format_complex(cplx z);
/// A comma-separated list of complex numbers.
std::vector<cplx> parse_complex_list(std::string_view text);
std::vector<double> parse_real_list(std::string_view text);

/// Complex values in JSON: a number, a string accepted by parse_complex, or [re, im].
cplx complex_from_json(const json& j);
json complex_to_json(cplx z);

/// {"masses": [...], "monomials": [{"j","k","l","m" (1-based), "sigma": "+-+",
/// "coeff": [re, im]}], "certificate": {"diagonal": [...]} | {"matrix": [[[re, im], ...], ...]}}
SystemSpec system_from_json(const json& j);
json system_to_json(const SystemSpec& spec);
HermitianForm certificate_from_json(const json& j, std::size_t n);
json certificate_to_json(const HermitianForm& a);

/// Columns t, linf, l2_1..l2_N, h1, a_mass, xweighted; a_mass is nan without a certificate.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
/// Columns t, deviation, max_alpha.
void write_deviation_csv(std::ostream& os, const DeviationSeries& dev);

/// {c, p, q, residual, window, constrained: {c, q, residual}} plus bookkeeping;
/// window bounds are reported in log t.
json fit_to_json(const DecayFit& fit);
json gauge_to_json(const GaugeReport& report, const SystemSpec& spec);
json certification_to_json(const Certification& cert);

}  // namespace cnls

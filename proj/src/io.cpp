#include "cnls/io.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cnls {

namespace {

std::string trim(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') out.push_back(c);
  return out;
}

double parse_real(std::string_view s, std::string_view whole) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw std::invalid_argument("cannot parse number '" + std::string(whole) + "'");
  return v;
}

std::vector<std::string> split_commas(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

cplx parse_complex(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty complex number");
  if (s.front() == '(' && s.back() == ')') {
    const auto parts = split_commas(std::string_view(s).substr(1, s.size() - 2));
    if (parts.size() != 2) throw std::invalid_argument("cannot parse complex number '" + s + "'");
    return {parse_real(parts[0], s), parse_real(parts[1], s)};
  }
  const char last = s.back();
  if (last != 'i' && last != 'j') return {parse_real(s, s), 0.0};
  const std::string_view body = std::string_view(s).substr(0, s.size() - 1);
  std::size_t split = std::string_view::npos;
  for (std::size_t p = body.size(); p-- > 1;) {
    if ((body[p] == '+' || body[p] == '-') && body[p - 1] != 'e' && body[p - 1] != 'E') {
      split = p;
      break;
    }
  }
  const std::string_view re = split == std::string_view::npos ? std::string_view{} : body.substr(0, split);
  std::string_view im = split == std::string_view::npos ? body : body.substr(split);
  double imv = 0.0;
  if (im.empty() || im == "+") imv = 1.0;
  else if (im == "-") imv = -1.0;
  else imv = parse_real(im, s);
  return {re.empty() ? 0.0 : parse_real(re, s), imv};
}

std::string format_complex(cplx z) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  if (z.imag() == 0.0) {
    os << z.real();
  } else {
    if (z.real() != 0.0) os << z.real() << (z.imag() >= 0.0 ? "+" : "");
    os << z.imag() << 'i';
  }
  return os.str();
}

std::vector<cplx> parse_complex_list(std::string_view text) {
  std::vector<cplx> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split_commas(text)) out.push_back(parse_complex(part));
  return out;
}

std::vector<double> parse_real_list(std::string_view text) {
  std::vector<double> out;
  const std::string t = trim(text);
  if (t.empty()) return out;
  for (const auto& part : split_commas(t)) out.push_back(parse_real(part, t));
  return out;
}

cplx complex_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_string()) return parse_complex(j.get<std::string>());
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw std::invalid_argument("expected a complex number, got " + j.dump());
}

json complex_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

HermitianForm certificate_from_json(const json& j, std::size_t n) {
  if (j.contains("diagonal")) {
    const auto kappa = j.at("diagonal").get<std::vector<double>>();
    if (kappa.size() != n) throw std::invalid_argument("certificate diagonal has the wrong length");
    return HermitianForm::diagonal(kappa);
  }
  if (j.contains("matrix")) {
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || rows.size() != n) throw std::invalid_argument("certificate matrix has the wrong shape");
    std::vector<cplx> entries;
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != n) throw std::invalid_argument("certificate matrix has the wrong shape");
      for (const auto& e : row) entries.push_back(complex_from_json(e));
    }
    return HermitianForm(n, std::move(entries));
  }
  throw std::invalid_argument("certificate needs 'diagonal' or 'matrix'");
}

json certificate_to_json(const HermitianForm& a) {
  if (a.is_diagonal()) return {{"diagonal", a.diagonal_entries()}};
  json rows = json::array();
  for (std::size_t r = 0; r < a.size(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < a.size(); ++c) row.push_back(complex_to_json(a(r, c)));
    rows.push_back(row);
  }
  return {{"matrix", rows}};
}

SystemSpec system_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("system description must be a JSON object");
  const auto masses = j.at("masses").get<std::vector<double>>();
  const std::size_t n = masses.size();
  if (n == 0) throw std::invalid_argument("system needs at least one mass");
  std::vector<CubicMonomial> monos;
  auto index = [n](const json& m, const char* key) {
    const long v = m.at(key).get<long>();
    if (v < 1 || static_cast<std::size_t>(v) > n)
      throw std::invalid_argument(std::string("monomial index '") + key + "' out of range 1.." + std::to_string(n));
    return static_cast<std::size_t>(v - 1);
  };
  for (const auto& m : j.value("monomials", json::array())) {
    CubicMonomial mono;
    mono.target = index(m, "j");
    mono.factors = {index(m, "k"), index(m, "l"), index(m, "m")};
    mono.sigma = parse_sigma(m.at("sigma").get<std::string>());
    mono.coeff = complex_from_json(m.at("coeff"));
    monos.push_back(mono);
  }
  SystemSpec spec{MassVector(masses), CubicNonlinearity(n, std::move(monos)), std::nullopt};
  if (j.contains("certificate") && !j.at("certificate").is_null())
    spec.certificate = certificate_from_json(j.at("certificate"), n);
  spec.validate();
  return spec;
}

json system_to_json(const SystemSpec& spec) {
  json monos = json::array();
  for (const auto& m : spec.nonlinearity.monomials())
    monos.push_back({{"j", m.target + 1},
                     {"k", m.factors[0] + 1},
                     {"l", m.factors[1] + 1},
                     {"m", m.factors[2] + 1},
                     {"sigma", sigma_string(m.sigma)},
                     {"coeff", complex_to_json(m.coeff)}});
  const auto mv = spec.masses.values();
  json j{{"masses", std::vector<double>(mv.begin(), mv.end())}, {"monomials", monos}};
  if (spec.certificate) j["certificate"] = certificate_to_json(*spec.certificate);
  return j;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t,linf";
  for (std::size_t j = 0; j < traj.l2.size(); ++j) os << ",l2_" << j + 1;
  os << ",h1,a_mass,xweighted\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    os << traj.times[i] << ',' << traj.linf[i];
    for (const auto& series : traj.l2) os << ',' << series[i];
    os << ',' << traj.h1[i] << ',';
    if (traj.a_mass.empty()) os << "nan";
    else os << traj.a_mass[i];
    os << ',' << traj.xweighted[i] << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

void write_deviation_csv(std::ostream& os, const DeviationSeries& dev) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t,deviation,max_alpha\n";
  for (std::size_t i = 0; i < dev.t.size(); ++i)
    os << dev.t[i] << ',' << dev.deviation[i] << ',' << dev.max_alpha[i] << '\n';
  os.flags(flags);
  os.precision(prec);
}

json fit_to_json(const DecayFit& fit) {
  return {{"c", fit.c},
          {"log_c", fit.log_c},
          {"p", fit.p},
          {"q", fit.q},
          {"residual", fit.residual},
          {"window", {{"log_t_min", fit.window.log_t_min}, {"log_t_max", fit.window.log_t_max}}},
          {"samples", fit.samples},
          {"degenerate", fit.degenerate},
          {"condition", fit.condition},
          {"constrained",
           {{"c", fit.constrained.c},
            {"log_c", fit.constrained.log_c},
            {"q", fit.constrained.q},
            {"residual", fit.constrained.residual}}}};
}

json gauge_to_json(const GaugeReport& report, const SystemSpec& spec) {
  json monos = json::array();
  const auto& ms = spec.nonlinearity.monomials();
  for (const auto& r : report.monomials) {
    const auto& m = ms.at(r.index);
    monos.push_back({{"index", r.index + 1},
                     {"j", m.target + 1},
                     {"k", m.factors[0] + 1},
                     {"l", m.factors[1] + 1},
                     {"m", m.factors[2] + 1},
                     {"sigma", sigma_string(m.sigma)},
                     {"residual", r.residual},
                     {"passed", r.passed}});
  }
  return {{"passed", report.passed},
          {"monomials", monos},
          {"phase_sampling_error", report.phase_sampling_error},
          {"phase_samples", report.phase_samples}};
}

json certification_to_json(const Certification& cert) {
  return {{"classification", to_string(cert.classification)},
          {"c_star", cert.bounds.c_star},
          {"c_upper", cert.bounds.c_upper},
          {"max_violation", cert.bounds.max_violation},
          {"samples", cert.bounds.samples_used},
          {"tol", cert.tol}};
}

}  // namespace cnls

#pragma once

// Declarative description of a staged co-deployment problem: a set of
// subsystems with power-law deployment costs, known first-stage demand,
// an uncertain second-stage demand interval, and directed linear demand
// couplings between subsystems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <json.hpp>

namespace codeploy {

/// One subsystem of the deployed system.
///
/// Capacity built in stage 1 costs c1 * x^alpha, capacity added in stage 2
/// costs c2 * dx^alpha. Stage-1 demand d1 is known; stage-2 demand is
/// uniform on [d2_low, d2_high] and discretized into s_own scenarios.
struct SubsystemSpec {
  std::string id;
  double c1 = 0.0;
  double c2 = 0.0;
  double alpha = 1.0;
  double d1 = 0.0;
  double d2_low = 0.0;
  double d2_high = 0.0;
  int s_own = 1;
};

/// Directed coupling: each unit of the origin subsystem's capacity adds
/// d_coef units of demand to the destination subsystem.
struct CouplingSpec {
  std::string dest;
  std::string origin;
  double d_coef = 0.0;
};

struct ProblemSpec {
  std::vector<SubsystemSpec> subsystems;  // declaration order fixes dimension order
  std::vector<CouplingSpec> couplings;
  double saa_fraction = 0.05;
  double smoothing_eps = 1e-8;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(subsystems.size()); }

  std::optional<int> index_of(const std::string& id) const {
    for (int i = 0; i < count(); ++i)
      if (subsystems[i].id == id) return i;
    return std::nullopt;
  }

  /// Coupling coefficient d_ij (dest i, origin j); 0 when absent.
  double coef(int dest, int origin) const {
    for (const auto& c : couplings) {
      auto di = index_of(c.dest ), oj = index_of(c.origin);
      if (di && oj && *di == dest && *oj == origin) return c.d_coef;
    }
    return 0.0;
  }

  /// N x N matrix M with M(i,j) = d_ij and zero diagonal.
  Eigen::MatrixXd coupling_matrix() const {
    const int n = count();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& c : couplings) {
      auto di = index_of(c.dest), oj = index_of(c.origin);
      if (di && oj && *di != *oj) m(*di, *oj) = c.d_coef;
    }
    return m;
  }
};

struct ValidationIssue {
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool pass() const { return issues.empty(); }
  std::string to_string() const {
    if (pass()) return "ok";
    std::ostringstream os;
    for (const auto& it : issues) os << it.location << ": " << it.message << "\n";
    return os.str();
  }
};

inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

/// Check every structural invariant of a problem description.
/// Pure: the same spec always yields the same report.
inline ValidationReport validate(const ProblemSpec& spec) {
  ValidationReport rep;
  auto fail = [&rep](std::string where, std::string what) {
    rep.issues.push_back({std::move(where), std::move(what)});
  };

  for (int i = 0; i < spec.count(); ++i) {
    const auto& s = spec.subsystems[i];
    const std::string at = "subsystems[" + std::to_string(i) + "]";
    if (s.id.empty()) fail(at + ".id", "empty id");
    for (int k = 0; k < i; ++k)
      if (spec.subsystems[k].id == s.id) fail(at + ".id", "duplicate id '" + s.id + "'");
    if (!(s.c1 > 0.0)) fail(at + ".c1", "must be > 0");
    if (!(s.c2 > 0.0)) fail(at + ".c2", "must be > 0");
    if (!(s.alpha > 0.0 && s.alpha <= 1.0)) fail(at + ".alpha", "must be in (0, 1]");
    if (!(s.d1 >= 0.0)) fail(at + ".d1", "must be >= 0");
    if (!(s.d2_low >= 0.0)) fail(at + ".d2_low", "must be >= 0");
    if (!(s.d2_low <= s.d2_high)) fail(at + ".d2_high", "interval must satisfy d2_low <= d2_high");
    if (s.s_own < 1) fail(at + ".s_own", "must be >= 1");
  }

  bool refs_ok = true;
  for (std::size_t c = 0; c < spec.couplings.size(); ++c) {
    const auto& cp = spec.couplings[c];
    const std::string at = "couplings[" + std::to_string(c) + "]";
    auto di = spec.index_of(cp.dest), oj = spec.index_of(cp.origin);
    if (!di) { fail(at + ".dest", "unknown subsystem '" + cp.dest + "'"); refs_ok = false; }
    if (!oj) { fail(at + ".origin", "unknown subsystem '" + cp.origin + "'"); refs_ok = false; }
    if (di && oj && *di == *oj) fail(at, "dest must differ from origin");
    if (!(cp.d_coef >= 0.0)) fail(at + ".d_coef", "must be >= 0");
    for (std::size_t k = 0; k < c; ++k)
      if (spec.couplings[k].dest == cp.dest && spec.couplings[k].origin == cp.origin)
        fail(at, "duplicate coupling (" + cp.dest + " <- " + cp.origin + ")");
  }

  if (!(spec.saa_fraction > 0.0 && spec.saa_fraction <= 1.0))
    fail("saa_fraction", "must be in (0, 1]");
  if (!(spec.smoothing_eps > 0.0)) fail("smoothing_eps", "must be > 0");

  if (refs_ok && spec.count() > 0) {
    const double rho = spectral_radius(spec.coupling_matrix());
    // The conservative fixed point x = b + M x only exists (nonnegative,
    // unique) when the coupling matrix is a contraction.
    if (!(rho < 1.0))
      fail("couplings", "spectral radius of the coupling matrix is " +
                            std::to_string(rho) + "; must be < 1");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// JSON problem files.
//
// Top-level keys: subsystems, couplings, alpha (shared default, optional),
// saa_fraction, smoothing_eps, seed. Unknown keys anywhere are rejected.

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) { ok = true; break; }
    if (!ok)
      throw std::runtime_error("unknown key '" + it.key() + "' in " + where);
  }
}

inline double require_number(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw std::runtime_error("missing key '" + std::string(key) + "' in " + where);
  if (!j.at(key).is_number()) throw std::runtime_error("key '" + std::string(key) + "' in " + where + " must be a number");
  return j.at(key).get<double>();
}

}  // namespace detail

inline ProblemSpec problem_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  if (!j.is_object()) throw std::runtime_error("problem file must be a JSON object");
  detail::check_keys(j, {"subsystems", "couplings", "alpha", "saa_fraction", "smoothing_eps", "seed"},
                     "problem");

  ProblemSpec spec;
  std::optional<double> shared_alpha;
  if (j.contains("alpha")) shared_alpha = j.at("alpha").get<double>();

  if (!j.contains("subsystems") || !j.at("subsystems").is_array())
    throw std::runtime_error("problem file needs a 'subsystems' array");
  for (const auto& js : j.at("subsystems")) {
    detail::check_keys(js, {"id", "c1", "c2", "alpha", "d1", "d2_low", "d2_high", "s_own"},
                       "subsystem");
    SubsystemSpec s;
    if (!js.contains("id")) throw std::runtime_error("subsystem without 'id'");
    s.id = js.at("id").get<std::string>();
    const std::string where = "subsystem '" + s.id + "'";
    s.c1 = detail::require_number(js, "c1", where);
    s.c2 = detail::require_number(js, "c2", where);
    if (js.contains("alpha")) s.alpha = js.at("alpha").get<double>();
    else if (shared_alpha) s.alpha = *shared_alpha;
    else throw std::runtime_error(where + " has no 'alpha' and the problem has no shared default");
    s.d1 = detail::require_number(js, "d1", where);
    s.d2_low = detail::require_number(js, "d2_low", where);
    s.d2_high = detail::require_number(js, "d2_high", where);
    s.s_own = js.contains("s_own") ? js.at("s_own").get<int>() : 1;
    spec.subsystems.push_back(std::move(s));
  }

  if (j.contains("couplings")) {
    if (!j.at("couplings").is_array()) throw std::runtime_error("'couplings' must be an array");
    for (const auto& jc : j.at("couplings")) {
      detail::check_keys(jc, {"dest", "origin", "d_coef"}, "coupling");
      CouplingSpec c;
      c.dest = jc.at("dest").get<std::string>();
      c.origin = jc.at("origin").get<std::string>();
      c.d_coef = detail::require_number(jc, "d_coef", "coupling");
      spec.couplings.push_back(std::move(c));
    }
  }

  if (j.contains("saa_fraction")) spec.saa_fraction = j.at("saa_fraction").get<double>();
  if (j.contains("smoothing_eps")) spec.smoothing_eps = j.at("smoothing_eps").get<double>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

inline nlohmann::json problem_to_json(const ProblemSpec& spec) {
  nlohmann::json j;
  j["subsystems"] = nlohmann::json::array();
  for (const auto& s : spec.subsystems) {
    j["subsystems"].push_back({{"id", s.id}, {"c1", s.c1}, {"c2", s.c2},
                               {"alpha", s.alpha}, {"d1", s.d1},
                               {"d2_low", s.d2_low}, {"d2_high", s.d2_high},
                               {"s_own", s.s_own}});
  }
  j["couplings"] = nlohmann::json::array();
  for (const auto& c : spec.couplings)
    j["couplings"].push_back({{"dest", c.dest}, {"origin", c.origin}, {"d_coef", c.d_coef}});
  j["saa_fraction"] = spec.saa_fraction;
  j["smoothing_eps"] = spec.smoothing_eps;
  j["seed"] = spec.seed;
  return j;
}

inline ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file: " + path);
  nlohmann::json j;
  in >> j;
  return problem_from_json(j);
}

/// Copy of `spec` with every subsystem's scenario count replaced by `s`.
inline ProblemSpec with_scenarios(ProblemSpec spec, int s) {
  for (auto& sub : spec.subsystems) sub.s_own = s;
  return spec;
}

}  // namespace codeploy

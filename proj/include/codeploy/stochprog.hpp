#pragma once

// Assembly of the optimization programs: explicit variable layout, linear
// rows, and a separable smoothed power-law objective.
//
// Variables per subsystem i: stage-1 capacity x1[i], and per local scenario
// t a stage-2 capacity x2[i][t] and expansion dx[i][t]. Coupling values are
// substituted away: a destination's demand row references the origin's
// stage-2 capacity at a representative origin scenario, so no coupling
// variables appear in the layout.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <json.hpp>

#include "codeploy/scenario.hpp"

namespace codeploy {

enum class ProgramKind { deterministic, fully_flexible, locally_discretized, standalone };
enum class Relation { ge, eq };

/// How a destination's coupling bands bind to the origin's capacities.
///
/// representative: each band reads the origin's capacity at one
///   representative origin scenario (band median; last band anchored at
///   the origin's worst scenario), with the origin's reverse band matched
///   to the destination's own index.
/// force_equal: all origin capacities whose own index falls in a band are
///   constrained equal, and the band reads the shared value.
enum class ConsistencyMode { representative, force_equal };

struct AssembleOptions {
  ConsistencyMode consistency = ConsistencyMode::representative;
};

struct LinTerm {
  std::int64_t var;
  double coef;
};

struct LinRow {
  std::vector<LinTerm> terms;
  Relation rel = Relation::ge;
  double rhs = 0.0;
};

/// One objective term: weight * coef * phi(value of var), phi the
/// smoothed power v -> (v + eps)^alpha - eps^alpha.
struct ObjectiveTerm {
  std::int64_t var;
  double coef;
  double alpha;
  double weight;
};

struct VariableLayout {
  int n_subsystems = 0;
  std::vector<std::int64_t> totals;
  std::vector<std::int64_t> x2_base, dx_base;
  std::int64_t n_var = 0;

  std::int64_t x1(int i) const { return i; }
  std::int64_t x2(int i, std::int64_t t) const { return x2_base[i] + t; }
  std::int64_t dx(int i, std::int64_t t) const { return dx_base[i] + t; }
};

inline VariableLayout make_layout(const std::vector<std::int64_t>& totals) {
  VariableLayout lay;
  lay.n_subsystems = static_cast<int>(totals.size());
  lay.totals = totals;
  std::int64_t next = lay.n_subsystems;
  lay.x2_base.resize(totals.size());
  lay.dx_base.resize(totals.size());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    lay.x2_base[i] = next;
    next += totals[i];
    lay.dx_base[i] = next;
    next += totals[i];
  }
  lay.n_var = next;
  return lay;
}

struct AssembledProgram {
  VariableLayout layout;
  std::vector<LinRow> rows;
  std::vector<ObjectiveTerm> objective;
  std::vector<double> initial_point;
  std::vector<double> lower, upper;
  double smoothing_eps = 1e-8;
  ProgramKind kind = ProgramKind::fully_flexible;
  std::vector<std::string> subsystem_ids;

  std::string var_name(std::int64_t v) const {
    const auto& lay = layout;
    if (v < lay.n_subsystems) return "x1[" + subsystem_ids[v] + "]";
    for (int i = 0; i < lay.n_subsystems; ++i) {
      if (v >= lay.x2_base[i] && v < lay.x2_base[i] + lay.totals[i])
        return "x2[" + subsystem_ids[i] + "][" + std::to_string(v - lay.x2_base[i]) + "]";
      if (v >= lay.dx_base[i] && v < lay.dx_base[i] + lay.totals[i])
        return "dx[" + subsystem_ids[i] + "][" + std::to_string(v - lay.dx_base[i]) + "]";
    }
    return "v" + std::to_string(v);
  }
};

// ---------------------------------------------------------------------------
// Smoothed power cost.

inline double phi_smooth(double v, double alpha, double eps) {
  v = std::max(v, 0.0);
  return std::pow(v + eps, alpha) - std::pow(eps, alpha);
}

inline double phi_smooth_grad(double v, double alpha, double eps) {
  v = std::max(v, 0.0);
  return alpha * std::pow(v + eps, alpha - 1.0);
}

struct ObjectiveEval {
  double value = 0.0;
  std::vector<double> gradient;
  bool clamped = false;
};

/// Cost and analytic gradient at a point. Negative components are clamped
/// to zero and flagged; bound handling belongs to the solver.
inline ObjectiveEval evaluate_objective(const AssembledProgram& p, const std::vector<double>& x,
                                        double eps_override = -1.0) {
  if (static_cast<std::int64_t>(x.size()) != p.layout.n_var)
    throw std::invalid_argument("evaluate_objective: point dimension mismatch");
  const double eps = eps_override > 0.0 ? eps_override : p.smoothing_eps;
  ObjectiveEval ev;
  ev.gradient.assign(x.size(), 0.0);
  for (const auto& t : p.objective) {
    const double v = x[t.var];
    if (v < 0.0) ev.clamped = true;
    ev.value += t.weight * t.coef * phi_smooth(v, t.alpha, eps);
    ev.gradient[t.var] += t.weight * t.coef * phi_smooth_grad(v, t.alpha, eps);
  }
  return ev;
}

/// Largest violation across rows (scaled to unit max coefficient) and box
/// bounds; 0 for a feasible point.
inline double max_violation(const AssembledProgram& p, const std::vector<double>& x) {
  double worst = 0.0;
  for (const auto& row : p.rows) {
    double lhs = 0.0, scale = 1.0;
    for (const auto& t : row.terms) {
      lhs += t.coef * x[t.var];
      scale = std::max(scale, std::abs(t.coef));
    }
    const double v = row.rel == Relation::ge ? std::max(0.0, row.rhs - lhs) : std::abs(lhs - row.rhs);
    worst = std::max(worst, v / scale);
  }
  for (std::int64_t v = 0; v < p.layout.n_var; ++v) {
    worst = std::max(worst, p.lower[v] - x[v]);
    worst = std::max(worst, x[v] - p.upper[v]);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Closed-form conservative solution.

struct DeterministicSolution {
  std::vector<double> stage1;        // worst-case stage-2 fixed point x = b + M x
  std::vector<double> stage1_floor;  // stage-1 demand fixed point x = d1 + M x
  double cost = 0.0;                 // sum of c1 * stage1^alpha
};

inline DeterministicSolution solve_deterministic_closed_form(const ProblemSpec& spec) {
  const int n = spec.count();
  const Eigen::MatrixXd m = spec.coupling_matrix();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - m;
  Eigen::VectorXd b(n), d1(n);
  for (int i = 0; i < n; ++i) {
    // stage-1 capacity must cover the known stage-1 demand as well as the
    // worst stage-2 demand when no expansion is planned
    b(i) = std::max(spec.subsystems[i].d2_high, spec.subsystems[i].d1);
    d1(i) = spec.subsystems[i].d1;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::VectorXd x = lu.solve(b);
  const Eigen::VectorXd y = lu.solve(d1);
  DeterministicSolution sol;
  sol.stage1.assign(x.data(), x.data() + n);
  sol.stage1_floor.assign(y.data(), y.data() + n);
  sol.cost = 0.0;
  for (int i = 0; i < n; ++i)
    sol.cost += spec.subsystems[i].c1 * std::pow(sol.stage1[i], spec.subsystems[i].alpha);
  return sol;
}

// ---------------------------------------------------------------------------
// Assembly engine.

namespace detail {

struct LinkTable {
  int n = 0;
  std::vector<const CouplingLink*> ptr;  // n x n, row = dest
  const CouplingLink* at(int dest, int origin) const { return ptr[dest * n + origin]; }
};

inline LinkTable make_link_table(int n, const std::vector<CouplingLink>& links) {
  LinkTable tab;
  tab.n = n;
  tab.ptr.assign(static_cast<std::size_t>(n) * n, nullptr);
  for (const auto& l : links) tab.ptr[l.dest * n + l.origin] = &l;
  return tab;
}

/// World own-index of subsystem k implied by destination i's scenario with
/// multi-index m: the destination's own index carries over directly, other
/// axes resolve through the destination's band representatives. An absent
/// link behaves as a single band whose representative is the worst
/// scenario.
inline int world_index(int i, int k, const std::vector<int>& m, const LinkTable& links,
                       const std::vector<ScenarioGrid>& grids) {
  if (k == i) return m[i];
  if (const CouplingLink* l = links.at(i, k)) return l->rep_of[m[k]];
  return grids[k].dim_sizes[k] - 1;
}

/// Origin j's local scenario referenced by destination i's scenario m.
inline std::int64_t representative_scenario(int i, const std::vector<int>& m, int j,
                                            const LinkTable& links,
                                            const std::vector<ScenarioGrid>& grids) {
  const int n = static_cast<int>(grids.size());
  std::vector<int> u(n, 0);
  const CouplingLink* lij = links.at(i, j);
  u[j] = lij->rep_of[m[j]];
  for (int k = 0; k < n; ++k) {
    if (k == j) continue;
    const int sigma = world_index(i, k, m, links, grids);
    if (const CouplingLink* ljk = links.at(j, k)) u[k] = ljk->group_of[sigma];
    else u[k] = 0;
  }
  return flat_index(u, grids[j].dim_sizes);
}

/// force_equal representative: lowest own index of the band, every other
/// axis at its first position.
inline std::int64_t band_base_scenario(const CouplingLink& l, int g,
                                       const std::vector<ScenarioGrid>& grids) {
  const int n = static_cast<int>(grids.size());
  std::vector<int> u(n, 0);
  u[l.origin] = l.band_lo(g);
  return flat_index(u, grids[l.origin].dim_sizes);
}

}  // namespace detail

/// Shared assembly of every program variant from per-subsystem grids and
/// coupling band structures.
inline AssembledProgram assemble_program(const ProblemSpec& spec, const LocalDiscretization& disc,
                                         ProgramKind kind, const AssembleOptions& opts,
                                         const DeterministicSolution& det) {
  const int n = spec.count();
  const auto& grids = disc.grids;
  const Eigen::MatrixXd coef = spec.coupling_matrix();
  std::vector<std::int64_t> totals(n);
  for (int i = 0; i < n; ++i) totals[i] = grids[i].total;

  AssembledProgram p;
  p.layout = make_layout(totals);
  p.kind = kind;
  p.smoothing_eps = spec.smoothing_eps;
  for (const auto& s : spec.subsystems) p.subsystem_ids.push_back(s.id);

  const auto links = detail::make_link_table(n, disc.links);

  // Stage-1 demand rows: x1[i] - sum_j d_ij x1[j] >= d1_i.
  for (int i = 0; i < n; ++i) {
    LinRow row;
    row.terms.push_back({p.layout.x1(i), 1.0});
    for (int j = 0; j < n; ++j) {
      const double d = coef(i, j);
      if (d > 0.0) row.terms.push_back({p.layout.x1(j), -d});
    }
    row.rel = Relation::ge;
    row.rhs = spec.subsystems[i].d1;
    p.rows.push_back(std::move(row));
  }

  // Stage-2 demand rows and expansion epigraph rows.
  for (int i = 0; i < n; ++i) {
    for (std::int64_t t = 0; t < grids[i].total; ++t) {
      const std::vector<int> m = multi_index(t, grids[i].dim_sizes);
      LinRow row;
      row.terms.push_back({p.layout.x2(i, t), 1.0});
      for (int j = 0; j < n; ++j) {
        const double d = coef(i, j);
        if (!(d > 0.0)) continue;
        std::int64_t u;
        if (opts.consistency == ConsistencyMode::force_equal)
          u = detail::band_base_scenario(*links.at(i, j), m[j], grids);
        else
          u = detail::representative_scenario(i, m, j, links, grids);
        row.terms.push_back({p.layout.x2(j, u), -d});
      }
      row.rel = Relation::ge;
      row.rhs = grids[i].demand[t];
      p.rows.push_back(std::move(row));

      LinRow epi;
      epi.terms.push_back({p.layout.dx(i, t), 1.0});
      epi.terms.push_back({p.layout.x2(i, t), -1.0});
      epi.terms.push_back({p.layout.x1(i), 1.0});
      epi.rel = Relation::ge;
      epi.rhs = 0.0;
      p.rows.push_back(std::move(epi));
    }
  }

  // force_equal: capacities of all origin scenarios in one band are equal.
  if (opts.consistency == ConsistencyMode::force_equal) {
    for (const auto& l : disc.links) {
      const auto& og = grids[l.origin];
      for (int g = 0; g < l.s_coupling; ++g) {
        const std::int64_t base = detail::band_base_scenario(l, g, grids);
        for (std::int64_t u = 0; u < og.total; ++u) {
          if (u == base) continue;
          if (l.group_of[og.own_index(u)] != g) continue;
          LinRow eq;
          eq.terms.push_back({p.layout.x2(l.origin, u), 1.0});
          eq.terms.push_back({p.layout.x2(l.origin, base), -1.0});
          eq.rel = Relation::eq;
          eq.rhs = 0.0;
          p.rows.push_back(std::move(eq));
        }
      }
    }
  }

  // Objective: stage-1 build cost, expected stage-2 expansion cost with
  // equal scenario weights per subsystem grid.
  for (int i = 0; i < n; ++i)
    p.objective.push_back({p.layout.x1(i), spec.subsystems[i].c1, spec.subsystems[i].alpha, 1.0});
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / static_cast<double>(grids[i].total);
    for (std::int64_t t = 0; t < grids[i].total; ++t)
      p.objective.push_back({p.layout.dx(i, t), spec.subsystems[i].c2, spec.subsystems[i].alpha, w});
  }

  // Bounds and the lifted conservative initial point.
  p.lower.assign(p.layout.n_var, 0.0);
  p.upper.assign(p.layout.n_var, 0.0);
  p.initial_point.assign(p.layout.n_var, 0.0);
  for (int i = 0; i < n; ++i) {
    const double cap = 10.0 * std::max(det.stage1[i], 1.0);
    p.upper[p.layout.x1(i)] = cap;
    p.initial_point[p.layout.x1(i)] = det.stage1[i];
    for (std::int64_t t = 0; t < grids[i].total; ++t) {
      p.upper[p.layout.x2(i, t)] = cap;
      p.upper[p.layout.dx(i, t)] = cap;
      p.initial_point[p.layout.x2(i, t)] = det.stage1[i];
      p.initial_point[p.layout.dx(i, t)] = 0.0;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Program variants.

struct DeterministicBuild {
  AssembledProgram program;
  DeterministicSolution closed_form;
};

/// Conservative single-scenario program: stage-2 demand pinned at the
/// interval's upper end.
inline DeterministicBuild build_deterministic(const ProblemSpec& spec,
                                              const AssembleOptions& opts = {}) {
  const int n = spec.count();
  const DeterministicSolution det = solve_deterministic_closed_form(spec);
  LocalDiscretization disc;
  for (int i = 0; i < n; ++i) {
    DemandGrid g;
    g.owner = i;
    g.values = {spec.subsystems[i].d2_high};
    disc.grids.push_back(detail::make_grid(i, std::vector<int>(n, 1), g));
  }
  for (const auto& c : spec.couplings)
    if (c.d_coef > 0.0)
      disc.links.push_back(make_link(*spec.index_of(c.dest), *spec.index_of(c.origin), 1, 1));
  AssembleOptions o = opts;
  o.consistency = ConsistencyMode::representative;  // bands are trivial here
  return {assemble_program(spec, disc, ProgramKind::deterministic, o, det), det};
}

/// Fully flexible program over the shared tensor: assembled directly with
/// same-index coupling substitution (independent of the band machinery).
inline AssembledProgram build_fully_flexible(const ProblemSpec& spec,
                                             const std::vector<ScenarioGrid>& full_grids) {
  const int n = spec.count();
  const DeterministicSolution det = solve_deterministic_closed_form(spec);
  std::vector<std::int64_t> totals(n);
  for (int i = 0; i < n; ++i) totals[i] = full_grids[i].total;

  AssembledProgram p;
  p.layout = make_layout(totals);
  p.kind = ProgramKind::fully_flexible;
  p.smoothing_eps = spec.smoothing_eps;
  const Eigen::MatrixXd coef = spec.coupling_matrix();
  for (const auto& s : spec.subsystems) p.subsystem_ids.push_back(s.id);

  for (int i = 0; i < n; ++i) {
    LinRow row;
    row.terms.push_back({p.layout.x1(i), 1.0});
    for (int j = 0; j < n; ++j) {
      const double d = coef(i, j);
      if (d > 0.0) row.terms.push_back({p.layout.x1(j), -d});
    }
    row.rel = Relation::ge;
    row.rhs = spec.subsystems[i].d1;
    p.rows.push_back(std::move(row));
  }
  for (int i = 0; i < n; ++i) {
    for (std::int64_t t = 0; t < full_grids[i].total; ++t) {
      LinRow row;
      row.terms.push_back({p.layout.x2(i, t), 1.0});
      for (int j = 0; j < n; ++j) {
        const double d = coef(i, j);
        if (d > 0.0) row.terms.push_back({p.layout.x2(j, t), -d});
      }
      row.rel = Relation::ge;
      row.rhs = full_grids[i].demand[t];
      p.rows.push_back(std::move(row));

      LinRow epi;
      epi.terms.push_back({p.layout.dx(i, t), 1.0});
      epi.terms.push_back({p.layout.x2(i, t), -1.0});
      epi.terms.push_back({p.layout.x1(i), 1.0});
      epi.rel = Relation::ge;
      epi.rhs = 0.0;
      p.rows.push_back(std::move(epi));
    }
  }
  for (int i = 0; i < n; ++i)
    p.objective.push_back({p.layout.x1(i), spec.subsystems[i].c1, spec.subsystems[i].alpha, 1.0});
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / static_cast<double>(full_grids[i].total);
    for (std::int64_t t = 0; t < full_grids[i].total; ++t)
      p.objective.push_back({p.layout.dx(i, t), spec.subsystems[i].c2, spec.subsystems[i].alpha, w});
  }
  p.lower.assign(p.layout.n_var, 0.0);
  p.upper.assign(p.layout.n_var, 0.0);
  p.initial_point.assign(p.layout.n_var, 0.0);
  for (int i = 0; i < n; ++i) {
    const double cap = 10.0 * std::max(det.stage1[i], 1.0);
    p.upper[p.layout.x1(i)] = cap;
    p.initial_point[p.layout.x1(i)] = det.stage1[i];
    for (std::int64_t t = 0; t < full_grids[i].total; ++t) {
      p.upper[p.layout.x2(i, t)] = cap;
      p.upper[p.layout.dx(i, t)] = cap;
      p.initial_point[p.layout.x2(i, t)] = det.stage1[i];
    }
  }
  return p;
}

/// Fully flexible program restricted to a subset of shared-tensor
/// scenarios (equal weights over the subset).
inline AssembledProgram build_subset_program(const ProblemSpec& spec,
                                             const std::vector<ScenarioGrid>& full_grids,
                                             const std::vector<std::int64_t>& subset) {
  if (subset.empty()) throw std::invalid_argument("build_subset_program: empty subset");
  const int n = spec.count();
  std::vector<ScenarioGrid> restricted(n);
  for (int i = 0; i < n; ++i) {
    ScenarioGrid g;
    g.owner = 0;  // single axis: position within the subset
    g.dim_sizes = {static_cast<int>(subset.size())};
    g.strides = {1};
    g.total = static_cast<std::int64_t>(subset.size());
    for (std::int64_t s : subset) g.demand.push_back(full_grids[i].demand[s]);
    restricted[i] = std::move(g);
  }
  // same-index substitution, exactly as in the unrestricted program
  return build_fully_flexible(spec, restricted);
}

/// Locally discretized program from grids and links built by
/// build_local_grid.
inline AssembledProgram build_locally_discretized(const ProblemSpec& spec,
                                                  const LocalDiscretization& disc,
                                                  const AssembleOptions& opts = {}) {
  const DeterministicSolution det = solve_deterministic_closed_form(spec);
  return assemble_program(spec, disc, ProgramKind::locally_discretized, opts, det);
}

struct StandaloneBuild {
  AssembledProgram program;
  ProblemSpec reduced_spec;
  std::vector<int> member_index;  // position -> original subsystem index
};

/// Program over a subsystem subset: couplings crossing the subset boundary
/// are dropped and their scenario dimensions removed.
inline StandaloneBuild build_standalone(const ProblemSpec& spec, const std::vector<int>& members,
                                        const CouplingPlan& plan, const AssembleOptions& opts = {}) {
  if (members.empty()) throw std::invalid_argument("build_standalone: empty member set");
  StandaloneBuild out;
  out.member_index = members;

  ProblemSpec sub;
  sub.saa_fraction = spec.saa_fraction;
  sub.smoothing_eps = spec.smoothing_eps;
  sub.seed = spec.seed;
  for (int i : members) sub.subsystems.push_back(spec.subsystems[i]);
  auto inside = [&](const std::string& id) { return sub.index_of(id).has_value(); };
  for (const auto& c : spec.couplings)
    if (inside(c.dest) && inside(c.origin)) sub.couplings.push_back(c);

  CouplingPlan sub_plan;
  sub_plan.method = plan.method;
  for (const auto& e : plan.entries) {
    auto d = sub.index_of(spec.subsystems[e.dest].id);
    auto o = sub.index_of(spec.subsystems[e.origin].id);
    if (d && o) sub_plan.entries.push_back({*d, *o, e.delta_rel, e.s_coupling});
  }

  const auto grids = demand_grids(sub);
  const auto disc = build_local_grid(sub, grids, sub_plan);
  const DeterministicSolution det = solve_deterministic_closed_form(sub);
  out.program = assemble_program(sub, disc, ProgramKind::standalone, opts, det);
  out.reduced_spec = std::move(sub);
  return out;
}

// ---------------------------------------------------------------------------

inline nlohmann::json program_to_json(const AssembledProgram& p) {
  nlohmann::json j;
  switch (p.kind) {
    case ProgramKind::deterministic: j["kind"] = "deterministic"; break;
    case ProgramKind::fully_flexible: j["kind"] = "fully_flexible"; break;
    case ProgramKind::locally_discretized: j["kind"] = "locally_discretized"; break;
    case ProgramKind::standalone: j["kind"] = "standalone"; break;
  }
  j["n_var"] = p.layout.n_var;
  j["smoothing_eps"] = p.smoothing_eps;
  j["variables"] = nlohmann::json::array();
  for (std::int64_t v = 0; v < p.layout.n_var; ++v)
    j["variables"].push_back({{"name", p.var_name(v)}, {"lower", p.lower[v]}, {"upper", p.upper[v]},
                              {"initial", p.initial_point[v]}});
  j["constraints"] = nlohmann::json::array();
  for (const auto& row : p.rows) {
    nlohmann::json jr;
    jr["rel"] = row.rel == Relation::ge ? ">=" : "==";
    jr["rhs"] = row.rhs;
    jr["terms"] = nlohmann::json::array();
    for (const auto& t : row.terms) jr["terms"].push_back({{"var", t.var}, {"coef", t.coef}});
    j["constraints"].push_back(std::move(jr));
  }
  j["objective"] = nlohmann::json::array();
  for (const auto& t : p.objective)
    j["objective"].push_back({{"var", t.var}, {"coef", t.coef}, {"alpha", t.alpha}, {"weight", t.weight}});
  return j;
}

}  // namespace codeploy

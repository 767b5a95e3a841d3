#pragma once

// Local solver for the assembled programs: linearly constrained, smooth
// separable increasing objective, feasible start.
//
// The method keeps every iterate feasible. Equality rows (pairwise
// variable ties) are merged away; expansion variables defined by a single
// epigraph row are substituted by their active value; the remaining
// inequality rows each have a single unit-coefficient output variable, so
// zero-cost capacities settle at the least fixed point of the demand
// system and the cost-bearing stage-1 variables descend monotonically
// under a step-doubling/halving line search with constraint repair.
// A smoothing continuation (large eps first, the program's eps last)
// governs how the nondifferentiable expansion costs are approached; the
// returned objective always uses the program's own smoothing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "codeploy/stochprog.hpp"

namespace codeploy {

struct SolverConfig {
  std::int64_t max_iterations = 0;  // 0: 100 * n_var
  double feasibility_tol = 1e-6;
  double stationarity_tol = 1e-6;
  double smoothing_eps = -1.0;      // < 0: use the program's
  double continuation_start = 1e-2;
  double continuation_factor = 100.0;
  bool trace = false;
};

struct TracePoint {
  std::int64_t iteration;
  double objective;
  double feasibility;
};

struct SolveResult {
  std::vector<double> point;
  double objective = 0.0;
  std::vector<double> stage1;
  double feasibility = 0.0;
  std::int64_t iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
  std::vector<TracePoint> trace;
};

namespace detail {

struct UnionFind {
  std::vector<std::int64_t> parent;
  explicit UnionFind(std::int64_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::int64_t find(std::int64_t a) {
    while (parent[a] != a) { parent[a] = parent[parent[a]]; a = parent[a]; }
    return a;
  }
  void unite(std::int64_t a, std::int64_t b) {
    a = find(a); b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct ReducedRow {
  int out = -1;                              // slot of the output variable
  std::vector<std::pair<int, double>> dep;   // y[out] >= rhs + sum d * y[dep]
  double rhs = 0.0;
};

struct DirectTerm { int slot; double c, alpha, w; };
struct ElimTerm { int slot; double uval, c, alpha, w; };

struct ReducedObjective {
  std::vector<DirectTerm> direct;
  std::vector<ElimTerm> elim;
  double constant = 0.0;

  double value(const std::vector<double>& y, double eps) const {
    double f = constant;
    for (const auto& t : direct) f += t.w * t.c * phi_smooth(y[t.slot], t.alpha, eps);
    for (const auto& t : elim) f += t.w * t.c * phi_smooth(t.uval - y[t.slot], t.alpha, eps);
    return f;
  }
  void gradient(const std::vector<double>& y, double eps, std::vector<double>& g) const {
    std::fill(g.begin(), g.end(), 0.0);
    for (const auto& t : direct) g[t.slot] += t.w * t.c * phi_smooth_grad(y[t.slot], t.alpha, eps);
    for (const auto& t : elim)
      if (t.uval - y[t.slot] > 0.0) g[t.slot] -= t.w * t.c * phi_smooth_grad(t.uval - y[t.slot], t.alpha, eps);
  }
};

inline void repair_rows(const std::vector<ReducedRow>& rows, const std::vector<double>& lo,
                        const std::vector<double>& up, std::vector<double>& y) {
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::min(std::max(y[k], lo[k]), up[k]);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double moved = 0.0;
    for (const auto& r : rows) {
      double need = r.rhs;
      for (const auto& [slot, d] : r.dep) need += d * y[slot];
      if (y[r.out] < need) {
        moved = std::max(moved, need - y[r.out]);
        y[r.out] = std::min(need, up[r.out]);
      }
    }
    if (moved < 1e-14) break;
  }
}

}  // namespace detail

/// Minimize the program's objective from its (feasible) initial point.
///
/// Contract: the result is feasible within tolerance, its objective never
/// exceeds the initial point's, identical inputs give identical results,
/// and hitting the iteration cap is reported through `converged = false`.
inline SolveResult solve(const AssembledProgram& p, const SolverConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t n = p.layout.n_var;
  const std::int64_t max_iter = cfg.max_iterations > 0 ? cfg.max_iterations : 100 * n;
  const double eps_final = cfg.smoothing_eps > 0.0 ? cfg.smoothing_eps : p.smoothing_eps;

  if (static_cast<std::int64_t>(p.initial_point.size()) != n)
    throw std::invalid_argument("solve: initial point dimension mismatch");
  if (max_violation(p, p.initial_point) > cfg.feasibility_tol)
    throw std::runtime_error("solve: initial point is infeasible (assembly bug)");

  // --- presolve: merge pairwise-equality rows ----------------------------
  detail::UnionFind uf(n);
  for (const auto& row : p.rows) {
    if (row.rel != Relation::eq) continue;
    if (row.terms.size() != 2 || row.rhs != 0.0 ||
        std::abs(row.terms[0].coef + row.terms[1].coef) > 1e-12 ||
        std::abs(std::abs(row.terms[0].coef) - 1.0) > 1e-12)
      throw std::runtime_error("solve: unsupported equality row");
    uf.unite(row.terms[0].var, row.terms[1].var);
  }

  std::vector<double> lo(n), up(n);
  for (std::int64_t v = 0; v < n; ++v) {
    const std::int64_t r = uf.find(v);
    lo[r] = 0.0; up[r] = 0.0;
  }
  for (std::int64_t v = 0; v < n; ++v) {
    const std::int64_t r = uf.find(v);
    lo[r] = std::max(lo[r], p.lower[v]);
    up[r] = (up[r] == 0.0 ? p.upper[v] : std::min(up[r], p.upper[v]));
  }

  // Remap inequality rows onto root variables (terms combined, no
  // structure imposed yet).
  struct RawRow { std::vector<std::pair<std::int64_t, double>> terms; double rhs; };
  std::vector<RawRow> raw_rows;
  std::vector<int> occurrences(n, 0);
  for (const auto& row : p.rows) {
    if (row.rel != Relation::ge) continue;
    RawRow r;
    r.rhs = row.rhs;
    for (const auto& t : row.terms) {
      const std::int64_t v = uf.find(t.var);
      bool merged = false;
      for (auto& [cv, cc] : r.terms)
        if (cv == v) { cc += t.coef; merged = true; break; }
      if (!merged) r.terms.push_back({v, t.coef});
    }
    std::erase_if(r.terms, [](const auto& t) { return std::abs(t.second) < 1e-15; });
    for (const auto& [v, c] : r.terms) occurrences[v]++;
    raw_rows.push_back(std::move(r));
  }

  std::vector<char> in_objective(n, 0);
  for (const auto& t : p.objective) in_objective[uf.find(t.var)] = 1;

  // --- eliminate expansion variables -------------------------------------
  // Pattern: variable with zero lower bound, present in the objective and
  // in exactly one row  v - u + w >= 0;  its active value is max(u - w, 0).
  struct Elim { std::int64_t v, u, w; };
  std::vector<Elim> elim;
  std::vector<std::int64_t> elim_of(n, -1);
  {
    std::vector<RawRow> kept;
    for (auto& r : raw_rows) {
      bool eliminated = false;
      if (r.terms.size() == 3 && r.rhs == 0.0) {
        std::int64_t v = -1, u = -1, w = -1;
        for (const auto& [a, ca] : r.terms) {
          if (std::abs(ca + 1.0) < 1e-12) u = a;
          else if (std::abs(ca - 1.0) < 1e-12 && occurrences[a] == 1 && in_objective[a] &&
                   p.lower[a] == 0.0 && v == -1)
            v = a;
          else w = a;
        }
        if (v != -1 && u != -1 && w != -1) {
          elim_of[v] = static_cast<std::int64_t>(elim.size());
          elim.push_back({v, u, w});
          eliminated = true;
        }
      }
      if (!eliminated) kept.push_back(std::move(r));
    }
    raw_rows = std::move(kept);
  }

  // Remaining rows: a single unit-coefficient output variable, all other
  // coefficients negative.
  struct Row { std::int64_t out; std::vector<std::pair<std::int64_t, double>> dep; double rhs; };
  std::vector<Row> ge_rows;
  for (const auto& raw : raw_rows) {
    Row r;
    r.rhs = raw.rhs;
    r.out = -1;
    for (const auto& [v, c] : raw.terms) {
      if (c > 0.0) {
        if (r.out != -1 || std::abs(c - 1.0) > 1e-12)
          throw std::runtime_error("solve: unsupported inequality row structure");
        r.out = v;
      } else {
        r.dep.push_back({v, -c});
      }
    }
    if (r.out == -1) throw std::runtime_error("solve: inequality row without output variable");
    ge_rows.push_back(std::move(r));
  }

  // --- split remaining variables into cost-bearing and auxiliary ---------
  std::vector<char> is_obj(n, 0), is_aux(n, 0), is_root(n, 0);
  for (std::int64_t v = 0; v < n; ++v) is_root[uf.find(v)] = 1;
  for (std::int64_t v = 0; v < n; ++v) {
    if (!is_root[v] || elim_of[v] >= 0) continue;
    if (in_objective[v]) is_obj[v] = 1;
    else is_aux[v] = 1;
  }
  for (const auto& e : elim)
    if (!is_obj[uf.find(e.w)] || !is_aux[uf.find(e.u)])
      throw std::runtime_error("solve: unsupported expansion pattern");

  // Auxiliary system: least fixed point (cheapest feasible capacities).
  std::vector<double> z(n, 0.0);
  std::vector<Row> aux_rows, obj_rows;
  for (auto& r : ge_rows) {
    bool aux_out = is_aux[r.out];
    for (const auto& [v, d] : r.dep)
      if (is_aux[v] != aux_out || is_obj[v] != is_obj[r.out])
        throw std::runtime_error("solve: mixed demand row (unsupported structure)");
    (aux_out ? aux_rows : obj_rows).push_back(std::move(r));
  }
  for (std::int64_t v = 0; v < n; ++v) z[v] = lo[v];
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double moved = 0.0;
    for (const auto& r : aux_rows) {
      double need = r.rhs;
      for (const auto& [v, d] : r.dep) need += d * z[v];
      if (z[r.out] < need) {
        moved = std::max(moved, need - z[r.out]);
        z[r.out] = std::min(need, up[r.out]);
      }
    }
    if (moved < 1e-14) break;
  }

  // --- reduced descent problem over the cost-bearing variables -----------
  std::vector<std::int64_t> slot_var;       // slot -> root var
  std::vector<int> slot_of(n, -1);
  for (std::int64_t v = 0; v < n; ++v)
    if (is_obj[v]) { slot_of[v] = static_cast<int>(slot_var.size()); slot_var.push_back(v); }
  const int m = static_cast<int>(slot_var.size());

  detail::ReducedObjective obj;
  std::vector<std::pair<std::int64_t, ObjectiveTerm>> aux_obj_terms;
  for (const auto& t : p.objective) {
    const std::int64_t v = uf.find(t.var);
    if (elim_of[v] >= 0) {
      const auto& e = elim[elim_of[v]];
      obj.elim.push_back({slot_of[uf.find(e.w)], z[uf.find(e.u)], t.coef, t.alpha, t.weight});
    } else if (is_obj[v]) {
      obj.direct.push_back({slot_of[v], t.coef, t.alpha, t.weight});
    } else {
      aux_obj_terms.push_back({v, t});  // constant at the auxiliary fixed point
    }
  }

  std::vector<detail::ReducedRow> red_rows;
  for (const auto& r : obj_rows) {
    detail::ReducedRow rr;
    rr.out = slot_of[r.out];
    rr.rhs = r.rhs;
    for (const auto& [v, d] : r.dep) rr.dep.push_back({slot_of[v], d});
    red_rows.push_back(std::move(rr));
  }
  std::vector<double> slo(m), sup(m), y(m);
  for (int s = 0; s < m; ++s) {
    slo[s] = lo[slot_var[s]];
    sup[s] = up[slot_var[s]];
    y[s] = p.initial_point[slot_var[s]];
  }
  detail::repair_rows(red_rows, slo, sup, y);

  // --- smoothing continuation + descent ----------------------------------
  std::vector<double> stages;
  {
    double e = std::max(cfg.continuation_start, eps_final);
    while (e > eps_final * (1.0 + 1e-12)) {
      stages.push_back(e);
      e /= cfg.continuation_factor;
    }
    stages.push_back(eps_final);
  }

  SolveResult res;
  std::int64_t trials = 0;
  bool budget_hit = false;
  std::vector<double> g(m), ytrial(m);

  for (double eps : stages) {
    double aux_const = 0.0;
    for (const auto& [v, t] : aux_obj_terms) aux_const += t.weight * t.coef * phi_smooth(z[v], t.alpha, eps);
    obj.constant = aux_const;

    double f = obj.value(y, eps);
    bool phase_moved = true;
    while (phase_moved && !budget_hit) {
      phase_moved = false;

      // gradient phase
      obj.gradient(y, eps, g);
      double alpha = 0.0;
      {
        double gmax = 0.0, ymax = 0.0;
        for (int s = 0; s < m; ++s) { gmax = std::max(gmax, std::abs(g[s])); ymax = std::max(ymax, std::abs(y[s])); }
        alpha = gmax > 0.0 ? 1e-4 * (1.0 + ymax) / gmax : 0.0;
      }
      while (alpha > 0.0 && !budget_hit) {
        obj.gradient(y, eps, g);
        double gmax = 0.0;
        for (int s = 0; s < m; ++s) gmax = std::max(gmax, std::abs(g[s]));
        if (gmax <= cfg.stationarity_tol * (1.0 + std::abs(f))) break;
        for (int s = 0; s < m; ++s) ytrial[s] = y[s] - alpha * g[s];
        detail::repair_rows(red_rows, slo, sup, ytrial);
        const double ft = obj.value(ytrial, eps);
        ++trials;
        if (trials >= max_iter) { budget_hit = true; break; }
        if (ft < f - 1e-13 * (1.0 + std::abs(f))) {
          y = ytrial; f = ft; alpha *= 2.0; phase_moved = true;
          ++res.iterations;
          if (cfg.trace) res.trace.push_back({res.iterations, f, 0.0});
        } else {
          alpha *= 0.5;
          double ymax = 0.0;
          for (int s = 0; s < m; ++s) ymax = std::max(ymax, std::abs(y[s]));
          if (alpha * gmax < 1e-12 * (1.0 + ymax)) break;
        }
      }

      // coordinate sweep: catches moves the joint direction rejects when a
      // single coordinate sits against an expansion kink
      obj.gradient(y, eps, g);
      for (int s = 0; s < m && !budget_hit; ++s) {
        if (g[s] == 0.0) continue;
        const double dir = g[s] > 0.0 ? -1.0 : 1.0;
        double step = 1e-4 * (1.0 + std::abs(y[s]));
        while (step > 1e-12 * (1.0 + std::abs(y[s])) && !budget_hit) {
          ytrial = y;
          ytrial[s] = y[s] + dir * step;
          detail::repair_rows(red_rows, slo, sup, ytrial);
          const double ft = obj.value(ytrial, eps);
          ++trials;
          if (trials >= max_iter) { budget_hit = true; break; }
          if (ft < f - 1e-13 * (1.0 + std::abs(f))) {
            y = ytrial; f = ft; step *= 2.0; phase_moved = true;
            ++res.iterations;
            if (cfg.trace) res.trace.push_back({res.iterations, f, 0.0});
          } else {
            step *= 0.5;
          }
        }
      }
    }
    if (budget_hit) break;
  }

  // --- expand to the full variable vector ---------------------------------
  std::vector<double> x(n, 0.0);
  for (std::int64_t v = 0; v < n; ++v) {
    const std::int64_t r = uf.find(v);
    if (elim_of[r] >= 0) continue;
    x[v] = is_obj[r] ? y[slot_of[r]] : z[r];
  }
  for (std::int64_t v = 0; v < n; ++v) {
    const std::int64_t r = uf.find(v);
    if (elim_of[r] >= 0) {
      const auto& e = elim[elim_of[r]];
      x[v] = std::max(x[uf.find(e.u)] - x[uf.find(e.w)], 0.0);
    }
  }

  const double f_init = evaluate_objective(p, p.initial_point).value;
  double f_final = evaluate_objective(p, x).value;
  if (f_final > f_init + 1e-9) {  // monotone-descent safeguard
    x = p.initial_point;
    f_final = f_init;
  }

  res.point = std::move(x);
  res.objective = f_final;
  res.stage1.resize(p.layout.n_subsystems);
  for (int i = 0; i < p.layout.n_subsystems; ++i) res.stage1[i] = res.point[p.layout.x1(i)];
  res.feasibility = max_violation(p, res.point);
  res.converged = !budget_hit && res.feasibility <= cfg.feasibility_tol;
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace codeploy

#pragma once

// Sampled pre-processing solve: run the fully flexible program over a
// small scenario subset, then read off per-subsystem samples of every
// uncertainty source (own demand, inflowing origin capacities) and the
// subsystem cost for the regression step.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "codeploy/coupling.hpp"
#include "codeploy/solver.hpp"
#include "codeploy/stochprog.hpp"

namespace codeploy {

struct SaaRun {
  bool skipped = false;
  bool converged = false;
  std::int64_t n_var = 0;
  double wall_time = 0.0;
  std::vector<std::int64_t> subset;
  std::vector<std::optional<SaaSample>> samples;  // per subsystem
  std::optional<SolveResult> result;
};

/// Solve the fully flexible program restricted to `subset` and extract one
/// sample row per sampled scenario for every subsystem.
inline SaaRun run_saa(const ProblemSpec& spec, const std::vector<ScenarioGrid>& full_grids,
                      const std::vector<std::int64_t>& subset, const SolverConfig& cfg = {}) {
  if (subset.empty()) throw std::invalid_argument("run_saa: empty subset");
  SaaRun run;
  run.subset = subset;
  run.samples.assign(spec.count(), std::nullopt);

  const AssembledProgram prog = build_subset_program(spec, full_grids, subset);
  run.n_var = prog.layout.n_var;
  const SolveResult sol = solve(prog, cfg);
  run.converged = sol.converged;
  run.wall_time = sol.wall_time;
  run.result = sol;
  if (!sol.converged) return run;

  const auto k = static_cast<Eigen::Index>(subset.size());
  for (int i = 0; i < spec.count(); ++i) {
    SaaSample smp;
    smp.owner = spec.subsystems[i].id;
    smp.input_names.push_back("D[" + smp.owner + "]");
    smp.input_origins.push_back(-1);
    std::vector<int> origins;
    for (int j = 0; j < spec.count(); ++j) {
      if (j == i || !(spec.coef(i, j) > 0.0)) continue;
      origins.push_back(j);
      smp.input_names.push_back("x[" + smp.owner + "<-" + spec.subsystems[j].id + "]");
      smp.input_origins.push_back(j);
    }
    smp.inputs.resize(k, static_cast<Eigen::Index>(1 + origins.size()));
    smp.output.resize(k);
    const auto& lay = prog.layout;
    for (Eigen::Index r = 0; r < k; ++r) {
      const std::int64_t s = subset[r];
      smp.inputs(r, 0) = full_grids[i].demand[s];
      for (std::size_t c = 0; c < origins.size(); ++c)
        smp.inputs(r, static_cast<Eigen::Index>(c + 1)) = sol.point[lay.x2(origins[c], r)];
      const auto& sub = spec.subsystems[i];
      smp.output(r) = sub.c1 * std::pow(sol.point[lay.x1(i)], sub.alpha) +
                      sub.c2 * phi_smooth(sol.point[lay.dx(i, r)], sub.alpha, spec.smoothing_eps);
    }
    run.samples[i] = std::move(smp);
  }
  return run;
}

struct Approach2Result {
  CouplingPlan plan;
  SaaRun saa;
};

/// Full regression-based pre-processing: subset selection, sampled solve,
/// standardized-coefficient regression, plan assembly. Falls back to one
/// scenario per coupling when the subset would be empty or the sampled
/// solve does not converge.
inline Approach2Result approach2_preprocess(const ProblemSpec& spec,
                                            const std::vector<ScenarioGrid>& full_grids,
                                            std::uint64_t seed, const SolverConfig& cfg = {}) {
  Approach2Result out;
  std::int64_t full_total = 1;
  for (int i = 0; i < spec.count(); ++i) full_total *= spec.subsystems[i].s_own;

  SplitMix64 rng(seed);
  const auto subset = saa_subset(spec, full_total, rng);
  if (!subset) {
    out.saa.skipped = true;
    out.plan = approach2_plan(spec, std::vector<std::optional<SaaSample>>(spec.count()));
    out.plan.diagnostics.saa_skipped = true;
    return out;
  }
  out.saa = run_saa(spec, full_grids, *subset, cfg);
  if (!out.saa.converged) {
    out.plan = approach2_plan(spec, std::vector<std::optional<SaaSample>>(spec.count()));
    out.plan.diagnostics.saa_converged = false;
    out.plan.diagnostics.subset_size = static_cast<std::int64_t>(subset->size());
    out.plan.diagnostics.notes.push_back("sampled solve did not converge; using default plan");
    return out;
  }
  out.plan = approach2_plan(spec, out.saa.samples);
  out.plan.diagnostics.subset_size = static_cast<std::int64_t>(subset->size());
  return out;
}

}  // namespace codeploy

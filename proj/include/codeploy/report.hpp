#pragma once

// End-to-end pipelines behind the command-line interface: run one method
// on a problem, or sweep methods across scenario counts and render a
// comparison table.

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeploy/partition.hpp"
#include "codeploy/saa.hpp"

namespace codeploy {

struct RunOptions {
  int scenarios = 0;            // 0: keep the file's per-subsystem counts
  int runs = 10;                // approach2 repetitions
  std::optional<std::uint64_t> seed;
  std::string partition;        // "A,B|C"; empty: pick the best ranked
  std::int64_t ss_ub = -1;      // subproblem-size bound; -1: whole-system size minus one
  AssembleOptions assemble;
  SolverConfig solver;
};

struct RunReport {
  std::string method;
  int scenarios = 0;                  // uniform count; 0 when taken from the file
  double objective = 0.0;
  std::vector<std::string> ids;
  std::vector<double> stage1;
  double n_var_main = 0.0;            // mean over runs (fractional when averaged)
  std::optional<double> n_var_saa;    // absent: sampling skipped everywhere
  double wall_time = 0.0;             // solver time only, summed over stages
  std::uint64_t seed = 0;
  int runs_averaged = 1;
  bool converged = true;
  std::string partition_label;
  nlohmann::json details;             // method-specific extras for JSON output
};

namespace detail {

inline void fill_common(RunReport& rep, const ProblemSpec& spec) {
  for (const auto& s : spec.subsystems) rep.ids.push_back(s.id);
  rep.stage1.assign(spec.subsystems.size(), 0.0);
}

inline void attach_trace(RunReport& rep, const SolveResult& sol) {
  if (sol.trace.empty()) return;
  nlohmann::json jt = nlohmann::json::array();
  for (const auto& t : sol.trace) jt.push_back({t.iteration, t.objective, t.feasibility});
  rep.details["trace"] = std::move(jt);
}

}  // namespace detail

inline RunReport run_deterministic(const ProblemSpec& spec, const RunOptions& opt) {
  RunReport rep;
  rep.method = "deterministic";
  detail::fill_common(rep, spec);
  const auto build = build_deterministic(spec, opt.assemble);
  const SolveResult sol = solve(build.program, opt.solver);
  rep.objective = sol.objective;
  rep.stage1 = sol.stage1;
  rep.n_var_main = static_cast<double>(build.program.layout.n_var);
  rep.wall_time = sol.wall_time;
  rep.converged = sol.converged;
  rep.details["closed_form_cost"] = build.closed_form.cost;
  rep.details["closed_form_stage1"] = build.closed_form.stage1;
  detail::attach_trace(rep, sol);
  return rep;
}

inline RunReport run_fully_flexible(const ProblemSpec& spec, const RunOptions& opt) {
  RunReport rep;
  rep.method = "full";
  detail::fill_common(rep, spec);
  const auto grids = build_full_grid(spec, demand_grids(spec));
  const AssembledProgram prog = build_fully_flexible(spec, grids);
  const SolveResult sol = solve(prog, opt.solver);
  rep.objective = sol.objective;
  rep.stage1 = sol.stage1;
  rep.n_var_main = static_cast<double>(prog.layout.n_var);
  rep.wall_time = sol.wall_time;
  rep.converged = sol.converged;
  detail::attach_trace(rep, sol);
  return rep;
}

inline RunReport run_approach1(const ProblemSpec& spec, const RunOptions& opt) {
  RunReport rep;
  rep.method = "approach1";
  detail::fill_common(rep, spec);
  const CouplingPlan plan = approach1_plan(spec);
  const auto disc = build_local_grid(spec, demand_grids(spec), plan);
  const AssembledProgram prog = build_locally_discretized(spec, disc, opt.assemble);
  const SolveResult sol = solve(prog, opt.solver);
  rep.objective = sol.objective;
  rep.stage1 = sol.stage1;
  rep.n_var_main = static_cast<double>(prog.layout.n_var);
  rep.wall_time = sol.wall_time;
  rep.converged = sol.converged;
  rep.details["plan"] = plan_to_json(spec, plan);
  detail::attach_trace(rep, sol);
  return rep;
}

inline RunReport run_approach2(const ProblemSpec& spec, const RunOptions& opt) {
  RunReport rep;
  rep.method = "approach2";
  detail::fill_common(rep, spec);
  rep.seed = opt.seed.value_or(spec.seed);
  rep.runs_averaged = std::max(1, opt.runs);

  const auto grids = build_full_grid(spec, demand_grids(spec));
  double sum_obj = 0.0, sum_nvar = 0.0, sum_time = 0.0;
  double sum_saa_nvar = 0.0;
  int saa_runs = 0;
  std::vector<double> sum_stage1(spec.count(), 0.0);
  rep.details["runs"] = nlohmann::json::array();

  for (int r = 0; r < rep.runs_averaged; ++r) {
    SplitMix64 rng = derived_rng(rep.seed, static_cast<std::uint64_t>(r));
    const std::uint64_t run_seed = rng.next();
    Approach2Result pre = approach2_preprocess(spec, grids, run_seed, opt.solver);

    const auto disc = build_local_grid(spec, demand_grids(spec), pre.plan);
    const AssembledProgram prog = build_locally_discretized(spec, disc, opt.assemble);
    const SolveResult sol = solve(prog, opt.solver);

    sum_obj += sol.objective;
    sum_nvar += static_cast<double>(prog.layout.n_var);
    sum_time += sol.wall_time + pre.saa.wall_time;
    for (int i = 0; i < spec.count(); ++i) sum_stage1[i] += sol.stage1[i];
    if (!pre.plan.diagnostics.saa_skipped) {
      sum_saa_nvar += static_cast<double>(pre.saa.n_var);
      ++saa_runs;
    }
    rep.converged = rep.converged && sol.converged;

    nlohmann::json jr;
    jr["seed"] = run_seed;
    jr["objective"] = sol.objective;
    jr["stage1"] = sol.stage1;
    jr["n_var_main"] = prog.layout.n_var;
    jr["saa_skipped"] = pre.plan.diagnostics.saa_skipped;
    if (!pre.plan.diagnostics.saa_skipped) jr["n_var_saa"] = pre.saa.n_var;
    jr["plan"] = plan_to_json(spec, pre.plan);
    rep.details["runs"].push_back(std::move(jr));
  }

  const double k = static_cast<double>(rep.runs_averaged);
  rep.objective = sum_obj / k;
  rep.n_var_main = sum_nvar / k;
  rep.wall_time = sum_time / k;
  for (int i = 0; i < spec.count(); ++i) rep.stage1[i] = sum_stage1[i] / k;
  if (saa_runs > 0) rep.n_var_saa = sum_saa_nvar / static_cast<double>(saa_runs);
  return rep;
}

inline RunReport run_partition(const ProblemSpec& spec, const RunOptions& opt) {
  RunReport rep;
  rep.method = "partition";
  detail::fill_common(rep, spec);
  const CouplingPlan plan = approach1_plan(spec);

  Partition part;
  if (!opt.partition.empty()) {
    auto parsed = Partition::parse(opt.partition, spec);
    if (!parsed) throw std::invalid_argument("cannot parse partition '" + opt.partition + "'");
    part = *parsed;
  } else {
    std::int64_t ss_ub = opt.ss_ub;
    if (ss_ub < 0) {
      // exclude the trivial single-block partition by default
      const std::vector<int> all = [&] {
        std::vector<int> v(spec.count());
        std::iota(v.begin(), v.end(), 0);
        return v;
      }();
      ss_ub = build_standalone(spec, all, plan).program.layout.n_var - 1;
    }
    const auto ranked = enumerate_partitions(spec, plan, ss_ub);
    if (ranked.empty())
      throw std::runtime_error("no partition satisfies the subproblem-size bound");
    part = ranked.front().partition;
    rep.details["ranked"] = partition_report_json(spec, ranked);
  }
  rep.partition_label = part.to_string(spec);

  const PartitionScore score = score_partition(spec, plan, part);
  const BottomUpResult bu = bottom_up_solve(spec, plan, part, opt.assemble, opt.solver);
  rep.objective = bu.objective_sum;
  rep.stage1 = bu.stage1;
  rep.n_var_main = static_cast<double>(score.ss_max);
  rep.converged = bu.all_converged;
  for (const auto& b : bu.blocks) rep.wall_time += b.result.wall_time;
  rep.details["cs"] = score.cs;
  rep.details["ss"] = score.ss;
  rep.details["ss_max"] = score.ss_max;
  rep.details["objective_note"] = "sum of block objectives; cross-block coupling costs excluded";
  return rep;
}

/// Dispatch on a method token; `partition:<blocks>` selects a fixed
/// partition, bare `partition` picks the best ranked one.
inline RunReport run_method(const ProblemSpec& spec, const std::string& method,
                            const RunOptions& opt_in) {
  RunOptions opt = opt_in;
  ProblemSpec s = opt.scenarios > 0 ? with_scenarios(spec, opt.scenarios) : spec;
  const auto rep = validate(s);
  if (!rep.pass()) throw std::runtime_error("problem validation failed:\n" + rep.to_string());

  RunReport out;
  if (method == "deterministic") out = run_deterministic(s, opt);
  else if (method == "full") out = run_fully_flexible(s, opt);
  else if (method == "approach1") out = run_approach1(s, opt);
  else if (method == "approach2") out = run_approach2(s, opt);
  else if (method == "partition") out = run_partition(s, opt);
  else if (method.rfind("partition:", 0) == 0) {
    opt.partition = method.substr(10);
    out = run_partition(s, opt);
    out.method = method;
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }
  out.scenarios = opt.scenarios;
  if (out.seed == 0) out.seed = opt.seed.value_or(s.seed);
  return out;
}

// ---------------------------------------------------------------------------
// Rendering.

inline std::string format_double(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string format_count(double v) {
  if (v == static_cast<double>(static_cast<std::int64_t>(v)))
    return std::to_string(static_cast<std::int64_t>(v));
  return format_double(v, 1);
}

inline std::string reports_to_csv(const std::vector<RunReport>& reports) {
  if (reports.empty()) return "";
  std::ostringstream os;
  os << "method,scenarios,cost";
  for (const auto& id : reports.front().ids) os << ",x1_" << id;
  os << ",n_var_main,n_var_saa,time_s,seed,runs,converged,partition\n";
  for (const auto& r : reports) {
    os << r.method << "," << r.scenarios << "," << format_double(r.objective);
    for (double v : r.stage1) os << "," << format_double(v);
    os << "," << format_count(r.n_var_main);
    os << "," << (r.n_var_saa ? format_count(*r.n_var_saa) : "--");
    os << "," << format_double(r.wall_time, 6);
    os << "," << r.seed << "," << r.runs_averaged << "," << (r.converged ? 1 : 0);
    os << "," << r.partition_label << "\n";
  }
  return os.str();
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["scenarios"] = r.scenarios;
  j["cost"] = r.objective;
  for (std::size_t i = 0; i < r.ids.size(); ++i) j["stage1"][r.ids[i]] = r.stage1[i];
  j["n_var_main"] = r.n_var_main;
  if (r.n_var_saa) j["n_var_saa"] = *r.n_var_saa;
  else j["n_var_saa"] = nullptr;
  j["time_s"] = r.wall_time;
  j["seed"] = r.seed;
  j["runs"] = r.runs_averaged;
  j["converged"] = r.converged;
  if (!r.partition_label.empty()) j["partition"] = r.partition_label;
  if (!r.details.is_null()) j["details"] = r.details;
  return j;
}

/// Aligned text table: one column per report, metric rows per method.
inline std::string reports_to_text(const std::vector<RunReport>& reports) {
  if (reports.empty()) return "";
  std::vector<std::string> col_labels;
  for (const auto& r : reports) {
    std::string label = r.method;
    if (!r.partition_label.empty() && r.method == "partition") label += ":" + r.partition_label;
    if (r.scenarios > 0) label += " S=" + std::to_string(r.scenarios);
    col_labels.push_back(label);
  }
  std::vector<std::string> metric_names = {"cost"};
  for (const auto& id : reports.front().ids) metric_names.push_back("x1[" + id + "]");
  metric_names.push_back("n_var_main");
  metric_names.push_back("n_var_saa");
  metric_names.push_back("time_s");

  std::vector<std::vector<std::string>> cells(metric_names.size());
  for (const auto& r : reports) {
    std::size_t row = 0;
    cells[row++].push_back(format_double(r.objective));
    for (double v : r.stage1) cells[row++].push_back(format_double(v));
    cells[row++].push_back(format_count(r.n_var_main));
    cells[row++].push_back(r.n_var_saa ? format_count(*r.n_var_saa) : "--");
    cells[row++].push_back(format_double(r.wall_time, 4));
  }

  std::size_t name_w = 0;
  for (const auto& nm : metric_names) name_w = std::max(name_w, nm.size());
  std::vector<std::size_t> col_w(reports.size());
  for (std::size_t c = 0; c < reports.size(); ++c) {
    col_w[c] = col_labels[c].size();
    for (std::size_t m = 0; m < metric_names.size(); ++m)
      col_w[c] = std::max(col_w[c], cells[m][c].size());
  }

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "" << "  ";
  for (std::size_t c = 0; c < reports.size(); ++c)
    os << std::right << std::setw(static_cast<int>(col_w[c])) << col_labels[c] << "  ";
  os << "\n";
  for (std::size_t m = 0; m < metric_names.size(); ++m) {
    os << std::left << std::setw(static_cast<int>(name_w)) << metric_names[m] << "  ";
    for (std::size_t c = 0; c < reports.size(); ++c)
      os << std::right << std::setw(static_cast<int>(col_w[c])) << cells[m][c] << "  ";
    os << "\n";
  }
  return os.str();
}

/// Run every (method, scenario count) combination, methods varying within
/// a scenario column first.
inline std::vector<RunReport> cmd_table(const ProblemSpec& spec,
                                        const std::vector<int>& scenario_list,
                                        const std::vector<std::string>& methods,
                                        const RunOptions& opt_in) {
  if (scenario_list.empty()) throw std::invalid_argument("scenario list must not be empty");
  if (methods.empty()) throw std::invalid_argument("method list must not be empty");
  std::vector<RunReport> reports;
  for (int s : scenario_list) {
    for (const auto& m : methods) {
      RunOptions opt = opt_in;
      opt.scenarios = s;
      reports.push_back(run_method(spec, m, opt));
    }
  }
  return reports;
}

}  // namespace codeploy

// Command-line front end: validate problem files, run one optimization
// method, sweep methods across scenario counts, and export plans, grids,
// and assembled programs.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "codeploy/report.hpp"

namespace {

using namespace codeploy;

std::vector<int> parse_scenario_list(const std::string& text) {
  std::vector<int> out;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stoi(token));
  }
  return out;
}

void write_output(const std::string& path, const std::string& payload) {
  if (path.empty()) {
    std::cout << payload;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << payload;
}

std::string render(const std::vector<RunReport>& reports, const std::string& format) {
  if (format == "csv") return reports_to_csv(reports);
  if (format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(report_to_json(r));
    return j.dump(2) + "\n";
  }
  return reports_to_text(reports);
}

void maybe_write_trace(const RunReport& rep, const std::string& out_path, bool enabled) {
  if (!enabled || !rep.details.contains("trace")) return;
  std::ostringstream os;
  os << "iteration,objective,feasibility\n";
  for (const auto& row : rep.details.at("trace"))
    os << row[0].get<long long>() << "," << row[1].get<double>() << "," << row[2].get<double>() << "\n";
  const std::string path = out_path.empty() ? "trace.csv" : out_path + ".trace.csv";
  std::ofstream out(path);
  out << os.str();
  std::cerr << "trace written to " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged co-deployment optimization under demand uncertainty"};
  app.require_subcommand(1);

  std::string file, method, out_path, format = "text", partition_arg, consistency = "representative";
  std::string scenarios_arg;
  int runs = 10;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long long ss_ub = -1;
  bool trace = false;
  std::vector<std::string> methods;

  auto add_common = [&](CLI::App* cmd, bool with_method_list) {
    cmd->add_option("file", file, "problem file (JSON)")->required();
    cmd->add_option("--scenarios", scenarios_arg,
                    "scenario count per subsystem, or comma list for tables");
    cmd->add_option("--runs", runs, "independent repetitions for approach2 (default 10)");
    cmd->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--partition", partition_arg, "fixed partition, e.g. \"A,B|C\"");
    cmd->add_option("--ss-ub", ss_ub, "subproblem-size bound for partition ranking");
    cmd->add_option("--out", out_path, "write output to this file instead of stdout");
    cmd->add_option("--format", format, "csv|json|text")->check(CLI::IsMember({"csv", "json", "text"}));
    cmd->add_flag("--trace", trace, "write a solver iteration trace next to --out");
    cmd->add_option("--consistency", consistency, "coupling consistency mode")
        ->check(CLI::IsMember({"representative", "force-equal"}));
    if (with_method_list)
      cmd->add_option("--method", methods, "method (repeatable): deterministic|full|approach1|approach2|partition[:BLOCKS]");
  };

  auto* cmd_validate = app.add_subcommand("validate", "check a problem file");
  cmd_validate->add_option("file", file, "problem file (JSON)")->required();

  auto* cmd_run = app.add_subcommand("run", "run one method");
  add_common(cmd_run, false);
  cmd_run->add_option("method", method, "deterministic|full|approach1|approach2|partition")->required();

  auto* cmd_tab = app.add_subcommand("table", "compare methods across scenario counts");
  add_common(cmd_tab, true);

  auto* cmd_plan = app.add_subcommand("plan", "print a pre-processing plan as JSON");
  add_common(cmd_plan, false);
  cmd_plan->add_option("method", method, "approach1|approach2")->required();

  auto* cmd_grids = app.add_subcommand("grids", "export scenario grids as CSV");
  add_common(cmd_grids, false);
  cmd_grids->add_option("method", method, "full|approach1|approach2")->required();

  auto* cmd_dump = app.add_subcommand("dump", "dump an assembled program as JSON");
  add_common(cmd_dump, false);
  cmd_dump->add_option("method", method, "deterministic|full|approach1|approach2")->required();

  auto* cmd_parts = app.add_subcommand("partitions", "rank partitions by coordination size");
  add_common(cmd_parts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_validate->parsed()) {
      const ProblemSpec spec = load_problem(file);
      const ValidationReport rep = validate(spec);
      if (rep.pass()) {
        std::cout << "ok\n";
        return 0;
      }
      std::cout << rep.to_string();
      return 1;
    }

    ProblemSpec spec = load_problem(file);
    RunOptions opt;
    opt.runs = runs;
    if (seed_set) opt.seed = seed;
    opt.partition = partition_arg;
    opt.ss_ub = ss_ub;
    opt.solver.trace = trace;
    if (consistency == "force-equal")
      opt.assemble.consistency = ConsistencyMode::force_equal;

    std::vector<int> scenario_list;
    if (!scenarios_arg.empty()) scenario_list = parse_scenario_list(scenarios_arg);

    if (cmd_run->parsed()) {
      opt.scenarios = scenario_list.empty() ? 0 : scenario_list.front();
      const RunReport rep = run_method(spec, method, opt);
      write_output(out_path, render({rep}, format));
      maybe_write_trace(rep, out_path, trace);
      return rep.converged ? 0 : 2;
    }

    if (cmd_tab->parsed()) {
      if (scenario_list.empty())
        throw std::invalid_argument("table needs --scenarios S[,S...]");
      if (methods.empty())
        methods = {"deterministic", "full", "approach1", "approach2"};
      const auto reports = cmd_table(spec, scenario_list, methods, opt);
      write_output(out_path, render(reports, format));
      for (const auto& r : reports)
        if (!r.converged) return 2;
      return 0;
    }

    if (!scenario_list.empty()) spec = with_scenarios(spec, scenario_list.front());
    {
      const auto rep = validate(spec);
      if (!rep.pass()) {
        std::cerr << rep.to_string();
        return 1;
      }
    }

    if (cmd_plan->parsed()) {
      CouplingPlan plan;
      if (method == "approach1") {
        plan = approach1_plan(spec);
      } else if (method == "approach2") {
        const auto grids = build_full_grid(spec, demand_grids(spec));
        plan = approach2_preprocess(spec, grids, opt.seed.value_or(spec.seed), opt.solver).plan;
      } else {
        throw std::invalid_argument("plan: method must be approach1 or approach2");
      }
      write_output(out_path, plan_to_json(spec, plan).dump(2) + "\n");
      return 0;
    }

    if (cmd_grids->parsed()) {
      std::ostringstream os;
      if (method == "full") {
        for (const auto& g : build_full_grid(spec, demand_grids(spec)))
          os << "# subsystem " << spec.subsystems[g.owner].id << "\n" << grid_to_csv(g, spec);
      } else {
        CouplingPlan plan = method == "approach1"
            ? approach1_plan(spec)
            : approach2_preprocess(spec, build_full_grid(spec, demand_grids(spec)),
                                   opt.seed.value_or(spec.seed), opt.solver).plan;
        const auto disc = build_local_grid(spec, demand_grids(spec), plan);
        for (const auto& g : disc.grids)
          os << "# subsystem " << spec.subsystems[g.owner].id << "\n" << grid_to_csv(g, spec);
      }
      write_output(out_path, os.str());
      return 0;
    }

    if (cmd_dump->parsed()) {
      AssembledProgram prog;
      if (method == "deterministic") {
        prog = build_deterministic(spec, opt.assemble).program;
      } else if (method == "full") {
        prog = build_fully_flexible(spec, build_full_grid(spec, demand_grids(spec)));
      } else {
        CouplingPlan plan = method == "approach1"
            ? approach1_plan(spec)
            : approach2_preprocess(spec, build_full_grid(spec, demand_grids(spec)),
                                   opt.seed.value_or(spec.seed), opt.solver).plan;
        prog = build_locally_discretized(spec, build_local_grid(spec, demand_grids(spec), plan),
                                         opt.assemble);
      }
      write_output(out_path, program_to_json(prog).dump(2) + "\n");
      return 0;
    }

    if (cmd_parts->parsed()) {
      const CouplingPlan plan = approach1_plan(spec);
      std::int64_t bound = opt.ss_ub;
      if (bound < 0) {
        std::vector<int> all(spec.count());
        std::iota(all.begin(), all.end(), 0);
        bound = build_standalone(spec, all, plan).program.layout.n_var - 1;
      }
      const auto ranked = enumerate_partitions(spec, plan, bound);
      write_output(out_path, partition_report_json(spec, ranked).dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

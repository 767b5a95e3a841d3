#include <catch2/catch_amalgamated.hpp>

#include "codeploy/report.hpp"

using namespace codeploy;

namespace {

ProblemSpec case2() { return load_problem(std::string(CODEPLOY_DATA_DIR) + "/case2.json"); }
ProblemSpec case3() { return load_problem(std::string(CODEPLOY_DATA_DIR) + "/case3.json"); }

/// Drop the time and seed columns, which are allowed to differ across runs.
std::string strip_volatile_columns(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream cells(line);
    std::string cell;
    int col = 0;
    while (std::getline(cells, cell, ',')) {
      if (col != 7) os << cell << ",";  // column 7 is time_s
      ++col;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("method dispatch and validation") {
  const auto spec = case2();
  RunOptions opt;
  opt.scenarios = 2;
  CHECK_THROWS_AS(run_method(spec, "nonsense", opt), std::invalid_argument);

  ProblemSpec broken = spec;
  broken.subsystems[0].c1 = -1.0;
  CHECK_THROWS_AS(run_method(broken, "deterministic", opt), std::runtime_error);
}

TEST_CASE("single-method reports carry the documented fields") {
  const auto spec = case2();
  RunOptions opt;
  opt.scenarios = 8;
  const auto rep = run_method(spec, "approach1", opt);
  CHECK(rep.method == "approach1");
  CHECK(rep.scenarios == 8);
  CHECK(rep.ids == std::vector<std::string>{"A", "B"});
  CHECK(rep.n_var_main == 66.0);
  CHECK_FALSE(rep.n_var_saa.has_value());
  CHECK(rep.converged);
  CHECK(rep.runs_averaged == 1);
}

TEST_CASE("the averaged pre-processing report matches the sampling rules") {
  const auto spec = case2();
  RunOptions opt;
  opt.runs = 3;
  opt.seed = 5;

  SECTION("sampling skipped below one scenario") {
    for (const auto& [s, nvar] : std::vector<std::pair<int, double>>{{2, 10.0}, {4, 18.0}}) {
      RunOptions o = opt;
      o.scenarios = s;
      const auto rep = run_method(spec, "approach2", o);
      CHECK(rep.n_var_main == nvar);
      CHECK_FALSE(rep.n_var_saa.has_value());
      CHECK(rep.runs_averaged == 3);
    }
  }
  SECTION("sampled program sizes at higher resolution") {
    for (const auto& [s, saa_nvar] : std::vector<std::pair<int, double>>{{8, 18.0}, {16, 54.0}}) {
      RunOptions o = opt;
      o.scenarios = s;
      const auto rep = run_method(spec, "approach2", o);
      REQUIRE(rep.n_var_saa.has_value());
      CHECK(*rep.n_var_saa == saa_nvar);
      CHECK(rep.details["runs"].size() == 3);
    }
  }
}

TEST_CASE("partition method tokens pick fixed or best partitions") {
  const auto spec = case3();
  RunOptions opt;
  opt.scenarios = 8;

  const auto fixed = run_method(spec, "partition:A,B|C", opt);
  CHECK(fixed.partition_label == "A,B|C");
  CHECK(fixed.details["cs"] == 8);

  const auto best = run_method(spec, "partition", opt);
  CHECK(best.partition_label == "A,B|C");  // default bound excludes the single block
  CHECK(best.details.contains("ranked"));

  RunOptions strict = opt;
  strict.ss_ub = 40;
  const auto bounded = run_method(spec, "partition", strict);
  CHECK(bounded.details["ss_max"] <= 40);
}

TEST_CASE("table sweeps run methods per scenario count") {
  const auto spec = case2();
  RunOptions opt;
  opt.runs = 2;
  const auto reports = cmd_table(spec, {2, 4}, {"deterministic", "approach1"}, opt);
  REQUIRE(reports.size() == 4);
  CHECK(reports[0].method == "deterministic");
  CHECK(reports[1].method == "approach1");
  CHECK(reports[0].scenarios == 2);
  CHECK(reports[3].scenarios == 4);

  CHECK_THROWS_AS(cmd_table(spec, {}, {"full"}, opt), std::invalid_argument);
  CHECK_THROWS_AS(cmd_table(spec, {2}, {}, opt), std::invalid_argument);
}

TEST_CASE("CSV output is deterministic apart from wall time") {
  const auto spec = case2();
  RunOptions opt;
  opt.runs = 2;
  opt.seed = 123;
  const auto a = cmd_table(spec, {2, 8}, {"deterministic", "approach1", "approach2"}, opt);
  const auto b = cmd_table(spec, {2, 8}, {"deterministic", "approach1", "approach2"}, opt);
  CHECK(strip_volatile_columns(reports_to_csv(a)) == strip_volatile_columns(reports_to_csv(b)));
}

TEST_CASE("CSV columns are fixed and documented") {
  const auto spec = case2();
  RunOptions opt;
  opt.scenarios = 2;
  const auto rep = run_method(spec, "deterministic", opt);
  const std::string csv = reports_to_csv({rep});
  CHECK(csv.rfind("method,scenarios,cost,x1_A,x1_B,n_var_main,n_var_saa,time_s,seed,runs,"
                  "converged,partition\n", 0) == 0);
  CHECK(csv.find("deterministic,2,15.45") != std::string::npos);
}

TEST_CASE("text tables align one column per run") {
  const auto spec = case2();
  RunOptions opt;
  const auto reports = cmd_table(spec, {2, 4}, {"deterministic", "full"}, opt);
  const std::string text = reports_to_text(reports);
  CHECK(text.find("cost") != std::string::npos);
  CHECK(text.find("x1[A]") != std::string::npos);
  CHECK(text.find("full S=4") != std::string::npos);
  CHECK(text.find("n_var_saa") != std::string::npos);
}

TEST_CASE("JSON reports expose per-run details") {
  const auto spec = case2();
  RunOptions opt;
  opt.scenarios = 8;
  opt.runs = 2;
  const auto rep = run_method(spec, "approach2", opt);
  const auto j = report_to_json(rep);
  CHECK(j["method"] == "approach2");
  CHECK(j["stage1"].contains("A"));
  CHECK(j["details"]["runs"].size() == 2);
  CHECK(j["details"]["runs"][0].contains("plan"));
}

#include <algorithm>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "codeploy/stochprog.hpp"

using namespace codeploy;

namespace {

ProblemSpec case2(int s) {
  return with_scenarios(load_problem(std::string(CODEPLOY_DATA_DIR) + "/case2.json"), s);
}
ProblemSpec case3(int s) {
  return with_scenarios(load_problem(std::string(CODEPLOY_DATA_DIR) + "/case3.json"), s);
}

AssembledProgram approach1_program(const ProblemSpec& spec, AssembleOptions opts = {}) {
  const auto plan = approach1_plan(spec);
  return build_locally_discretized(spec, build_local_grid(spec, demand_grids(spec), plan), opts);
}

/// Order-independent fingerprint of the constraint set.
std::vector<std::string> row_fingerprints(const AssembledProgram& p) {
  std::vector<std::string> rows;
  for (const auto& row : p.rows) {
    auto terms = row.terms;
    std::sort(terms.begin(), terms.end(), [](const LinTerm& a, const LinTerm& b) { return a.var < b.var; });
    std::ostringstream os;
    os << (row.rel == Relation::ge ? "ge " : "eq ") << row.rhs << " |";
    for (const auto& t : terms) os << " " << t.var << ":" << t.coef;
    rows.push_back(os.str());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("variable counts across methods and scenario counts") {
  CHECK(build_deterministic(case2(2)).program.layout.n_var == 6);

  const std::vector<std::pair<int, std::int64_t>> full_counts{{2, 18}, {4, 66}, {8, 258}, {16, 1026}};
  for (const auto& [s, expect] : full_counts) {
    const auto spec = case2(s);
    const auto prog = build_fully_flexible(spec, build_full_grid(spec, demand_grids(spec)));
    CHECK(prog.layout.n_var == expect);
  }

  const std::vector<std::pair<int, std::int64_t>> a1_counts{{2, 10}, {4, 26}, {8, 66}, {16, 226}};
  for (const auto& [s, expect] : a1_counts)
    CHECK(approach1_program(case2(s)).layout.n_var == expect);

  // one scenario per coupling (the regression default when sampling skips)
  const std::vector<std::pair<int, std::int64_t>> default_counts{{2, 10}, {4, 18}};
  for (const auto& [s, expect] : default_counts) {
    const auto spec = case2(s);
    const auto prog = build_locally_discretized(
        spec, build_local_grid(spec, demand_grids(spec), default_plan(spec)));
    CHECK(prog.layout.n_var == expect);
  }
}

TEST_CASE("closed-form conservative solution") {
  const auto spec = case2(2);
  const auto sol = solve_deterministic_closed_form(spec);
  CHECK(sol.stage1[0] == Catch::Approx(3.2990).margin(1e-3));
  CHECK(sol.stage1[1] == Catch::Approx(4.3300).margin(1e-3));
  CHECK(sol.cost == Catch::Approx(15.4510).margin(1e-3));

  SECTION("decoupled worst case is the interval top") {
    ProblemSpec dec = spec;
    for (auto& c : dec.couplings) c.d_coef = 0.0;
    const auto s2 = solve_deterministic_closed_form(dec);
    CHECK(s2.stage1[0] == 2.0);
    CHECK(s2.stage1[1] == 4.0);
  }

  SECTION("three-subsystem fixed point satisfies the linear system") {
    const auto spec3 = case3(8);
    const auto s3 = solve_deterministic_closed_form(spec3);
    const Eigen::MatrixXd m = spec3.coupling_matrix();
    Eigen::VectorXd x(3), b(3);
    for (int i = 0; i < 3; ++i) {
      x(i) = s3.stage1[i];
      b(i) = spec3.subsystems[i].d2_high;
    }
    CHECK(((Eigen::MatrixXd::Identity(3, 3) - m) * x - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("the lifted conservative point is feasible in every variant") {
  for (int s : {2, 4, 8}) {
    const auto spec = case2(s);
    const auto det = build_deterministic(spec);
    CHECK(max_violation(det.program, det.program.initial_point) < 1e-9);

    const auto ff = build_fully_flexible(spec, build_full_grid(spec, demand_grids(spec)));
    CHECK(max_violation(ff, ff.initial_point) < 1e-9);

    const auto rep = approach1_program(spec);
    CHECK(max_violation(rep, rep.initial_point) < 1e-9);

    AssembleOptions force;
    force.consistency = ConsistencyMode::force_equal;
    const auto feq = approach1_program(spec, force);
    CHECK(max_violation(feq, feq.initial_point) < 1e-9);
  }
  const auto spec3 = case3(8);
  const auto stand = build_standalone(spec3, {0, 1}, approach1_plan(spec3));
  CHECK(max_violation(stand.program, stand.program.initial_point) < 1e-9);
}

TEST_CASE("a full-resolution plan reproduces the fully flexible constraints") {
  for (int s : {2, 3, 4}) {
    const auto spec = case2(s);
    const auto direct = build_fully_flexible(spec, build_full_grid(spec, demand_grids(spec)));
    const auto via_bands = build_locally_discretized(
        spec, build_local_grid(spec, demand_grids(spec), full_plan(spec)));
    REQUIRE(via_bands.layout.n_var == direct.layout.n_var);
    CHECK(row_fingerprints(via_bands) == row_fingerprints(direct));
  }
  // three subsystems as well
  const auto spec3 = case3(2);
  const auto direct3 = build_fully_flexible(spec3, build_full_grid(spec3, demand_grids(spec3)));
  const auto via3 = build_locally_discretized(
      spec3, build_local_grid(spec3, demand_grids(spec3), full_plan(spec3)));
  CHECK(row_fingerprints(via3) == row_fingerprints(direct3));
}

TEST_CASE("force-equal mode ties banded origin capacities together") {
  const auto spec = case2(4);
  AssembleOptions force;
  force.consistency = ConsistencyMode::force_equal;
  const auto prog = approach1_program(spec, force);
  std::int64_t eq_rows = 0;
  for (const auto& row : prog.rows)
    if (row.rel == Relation::eq) ++eq_rows;
  // A<-B has 2 bands over B's 4 scenarios (1 tie per band beyond the base),
  // B<-A has 1 band over A's 8 local scenarios (7 ties)
  CHECK(eq_rows == 2 + 7);
  CHECK(prog.layout.n_var == 26);  // equalities never add variables
}

TEST_CASE("stage-2 weights sum to one per subsystem") {
  const auto prog = approach1_program(case2(8));
  std::vector<double> wsum(2, 0.0);
  for (const auto& t : prog.objective) {
    for (int i = 0; i < 2; ++i)
      if (t.var >= prog.layout.dx_base[i] && t.var < prog.layout.dx_base[i] + prog.layout.totals[i])
        wsum[i] += t.weight;
    REQUIRE(t.weight >= 0.0);
  }
  CHECK(wsum[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(wsum[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("standalone blocks drop boundary couplings") {
  const auto spec3 = case3(8);
  const auto plan3 = approach1_plan(spec3);

  SECTION("the A,B block matches the two-subsystem program") {
    const auto block = build_standalone(spec3, {0, 1}, plan3);
    const auto two = approach1_program(case2(8));
    REQUIRE(block.program.layout.n_var == two.layout.n_var);
    CHECK(row_fingerprints(block.program) == row_fingerprints(two));
  }
  SECTION("a solo block keeps only its own scenarios") {
    const auto block = build_standalone(spec3, {2}, plan3);
    CHECK(block.program.layout.n_var == 1 + 2 * 8);
    CHECK(block.reduced_spec.couplings.empty());
  }
  SECTION("the all-member block equals the whole-system program") {
    const auto all = build_standalone(spec3, {0, 1, 2}, plan3);
    const auto whole = build_locally_discretized(
        spec3, build_local_grid(spec3, demand_grids(spec3), plan3));
    CHECK(row_fingerprints(all.program) == row_fingerprints(whole));
  }
  SECTION("empty member set is rejected") {
    CHECK_THROWS_AS(build_standalone(spec3, {}, plan3), std::invalid_argument);
  }
}

TEST_CASE("objective evaluation") {
  const auto spec = case2(2);
  const auto det = build_deterministic(spec);

  SECTION("smoothing error at the conservative point is tiny") {
    const auto ev = evaluate_objective(det.program, det.program.initial_point);
    CHECK(std::abs(ev.value - det.closed_form.cost) < 1e-6);
    CHECK_FALSE(ev.clamped);
  }
  SECTION("the linear case is exact") {
    CHECK(phi_smooth(3.7, 1.0, 1e-8) == Catch::Approx(3.7).margin(1e-15));
  }
  SECTION("negative components clamp and flag") {
    auto x = det.program.initial_point;
    x[det.program.layout.dx(0, 0)] = -0.5;
    const auto ev = evaluate_objective(det.program, x);
    CHECK(ev.clamped);
    const auto ev0 = evaluate_objective(det.program, det.program.initial_point);
    CHECK(ev.value == Catch::Approx(ev0.value).margin(1e-12));
  }
  SECTION("dimension mismatch throws") {
    CHECK_THROWS_AS(evaluate_objective(det.program, std::vector<double>(3, 0.0)),
                    std::invalid_argument);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  const auto spec = case2(4);
  const auto prog = build_fully_flexible(spec, build_full_grid(spec, demand_grids(spec)));
  SplitMix64 rng(41);
  const double h = 1e-6;
  for (int pt = 0; pt < 100; ++pt) {
    // feasible sample: lift the conservative point, then add positive slack
    // so no component sits on the nonsmooth boundary
    std::vector<double> x = prog.initial_point;
    for (auto& v : x) v += 0.05 + rng.uniform01();
    const auto ev = evaluate_objective(prog, x);
    for (int probe = 0; probe < 5; ++probe) {
      const std::int64_t v =
          static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(prog.layout.n_var)));
      auto xp = x, xm = x;
      xp[v] += h;
      xm[v] -= h;
      const double fd =
          (evaluate_objective(prog, xp).value - evaluate_objective(prog, xm).value) / (2 * h);
      const double scale = std::max({1.0, std::abs(fd), std::abs(ev.gradient[v])});
      REQUIRE(std::abs(ev.gradient[v] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("program dump lists variables, constraints, and objective") {
  const auto spec = case2(2);
  const auto prog = approach1_program(spec);
  const auto j = program_to_json(prog);
  CHECK(j["n_var"] == 10);
  CHECK(j["variables"].size() == 10);
  CHECK(j["kind"] == "locally_discretized");
  CHECK(j["objective"].size() == 2 + 2 + 2);
  CHECK(j["constraints"].size() == prog.rows.size());
  CHECK(j["variables"][0]["name"] == "x1[A]");
}

TEST_CASE("any validated spec assembles into every variant") {
  SplitMix64 rng(43);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + static_cast<int>(rng.bounded(3));
    ProblemSpec spec;
    for (int i = 0; i < n; ++i) {
      SubsystemSpec s;
      s.id = std::string(1, static_cast<char>('A' + i));
      s.c1 = 0.5 + 4.0 * rng.uniform01();
      s.c2 = s.c1 * (1.0 + rng.uniform01());
      s.alpha = 0.4 + 0.6 * rng.uniform01();
      s.d1 = rng.uniform01();
      s.d2_low = 0.2 + rng.uniform01();
      s.d2_high = s.d2_low + 3.0 * rng.uniform01();
      s.s_own = 1 + static_cast<int>(rng.bounded(4));
      spec.subsystems.push_back(s);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && rng.uniform01() < 0.7)
          spec.couplings.push_back({spec.subsystems[i].id, spec.subsystems[j].id,
                                    0.6 * rng.uniform01() / n});
    REQUIRE(validate(spec).pass());

    const auto det = build_deterministic(spec);
    REQUIRE(max_violation(det.program, det.program.initial_point) < 1e-9);
    const auto grids = build_full_grid(spec, demand_grids(spec));
    const auto ff = build_fully_flexible(spec, grids);
    REQUIRE(max_violation(ff, ff.initial_point) < 1e-9);
    const auto plan = approach1_plan(spec);
    const auto local = build_locally_discretized(spec, build_local_grid(spec, demand_grids(spec), plan));
    REQUIRE(max_violation(local, local.initial_point) < 1e-9);
    AssembleOptions force;
    force.consistency = ConsistencyMode::force_equal;
    const auto feq = build_locally_discretized(spec, build_local_grid(spec, demand_grids(spec), plan), force);
    REQUIRE(max_violation(feq, feq.initial_point) < 1e-9);
  }
}

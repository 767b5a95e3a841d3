#include <catch2/catch_amalgamated.hpp>

#include "codeploy/partition.hpp"

using namespace codeploy;

namespace {

ProblemSpec case3(int s) {
  return with_scenarios(load_problem(std::string(CODEPLOY_DATA_DIR) + "/case3.json"), s);
}
ProblemSpec case2(int s) {
  return with_scenarios(load_problem(std::string(CODEPLOY_DATA_DIR) + "/case2.json"), s);
}

/// Independent oracle for one uncoupled subsystem: dense scan with two
/// refinement passes of  c1 x^a + c2 mean((v - x)+^a)  over the demand range.
double solo_stage1_oracle(const SubsystemSpec& s) {
  const auto grid = discretize_demand(s.d2_low, s.d2_high, s.s_own);
  auto cost = [&](double x) {
    double expect = 0.0;
    for (double v : grid.values) expect += std::pow(std::max(v - x, 0.0), s.alpha);
    expect /= static_cast<double>(grid.values.size());
    return s.c1 * std::pow(x, s.alpha) + s.c2 * expect;
  };
  double lo = s.d1, hi = grid.values.back(), best = lo;
  for (int pass = 0; pass < 3; ++pass) {
    double fbest = 1e300;
    for (int k = 0; k <= 4000; ++k) {
      const double x = lo + (hi - lo) * k / 4000.0;
      const double f = cost(x);
      if (f < fbest) { fbest = f; best = x; }
    }
    const double w = (hi - lo) / 4000.0;
    lo = std::max(s.d1, best - 2 * w);
    hi = best + 2 * w;
  }
  return best;
}

}  // namespace

TEST_CASE("partition strings parse and canonicalize") {
  const auto spec = case3(8);
  const auto p = Partition::parse("B,C|A", spec);
  REQUIRE(p.has_value());
  CHECK(p->blocks.size() == 2);
  CHECK(p->to_string(spec) == "A|B,C");  // canonical: blocks by smallest member

  CHECK_FALSE(Partition::parse("A,B", spec).has_value());       // C missing
  CHECK_FALSE(Partition::parse("A,B|C|A", spec).has_value());   // duplicate
  CHECK_FALSE(Partition::parse("A,B|Z", spec).has_value());     // unknown id
}

TEST_CASE("coupling-aware scores separate the bipartitions") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);

  const auto ab_c = score_partition(spec, plan, *Partition::parse("A,B|C", spec));
  const auto bc_a = score_partition(spec, plan, *Partition::parse("B,C|A", spec));
  const auto ac_b = score_partition(spec, plan, *Partition::parse("A,C|B", spec));

  CHECK(ab_c.cs == 8);
  CHECK(bc_a.cs == 10);
  CHECK(ac_b.cs == 10);
  CHECK(ab_c.ss_max == 66);
  CHECK(bc_a.ss_max == 34);
  CHECK(ac_b.ss_max == 34);
  CHECK(ab_c.ss == std::vector<std::int64_t>{66, 17});

  SECTION("uniform single-band weighting ties all three") {
    const auto det_plan = default_plan(spec);
    const auto a = score_partition(spec, det_plan, *Partition::parse("A,B|C", spec));
    const auto b = score_partition(spec, det_plan, *Partition::parse("B,C|A", spec));
    const auto c = score_partition(spec, det_plan, *Partition::parse("A,C|B", spec));
    CHECK(a.cs == b.cs);
    CHECK(b.cs == c.cs);
    CHECK(a.ss_max == b.ss_max);
    CHECK(b.ss_max == c.ss_max);
  }
}

TEST_CASE("ranking under a subproblem-size bound") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);

  SECTION("the strongly coupled pair stays together") {
    const auto ranked = enumerate_partitions(spec, plan, 70);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked.front().partition.to_string(spec) == "A,B|C");
    // the whole-system block (83 variables) is excluded by the bound
    for (const auto& r : ranked) CHECK(r.partition.blocks.size() >= 2);
  }
  SECTION("a single subsystem has one trivial partition") {
    ProblemSpec solo;
    solo.subsystems.push_back({"A", 1.0, 2.0, 0.9, 0.0, 1.0, 2.0, 4});
    const auto ranked = enumerate_partitions(solo, approach1_plan(solo), 1000);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked.front().score.cs == 0);
  }
  SECTION("an unattainable bound leaves nothing") {
    CHECK(enumerate_partitions(spec, plan, 5).empty());
  }
  SECTION("oversized systems are refused") {
    ProblemSpec big;
    for (int i = 0; i < 13; ++i)
      big.subsystems.push_back({std::string(1, char('A' + i)), 1.0, 2.0, 0.9, 0.0, 1.0, 2.0, 2});
    CHECK_THROWS_AS(enumerate_partitions(big, approach1_plan(big), 1000), std::invalid_argument);
  }
}

TEST_CASE("splitting a block never lowers the coordination size") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);
  const auto coarse = score_partition(spec, plan, *Partition::parse("A,B|C", spec));
  const auto fine = score_partition(spec, plan, *Partition::parse("A|B|C", spec));
  CHECK(fine.cs >= coarse.cs);

  SplitMix64 rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> labels(3);
    for (auto& l : labels) l = static_cast<int>(rng.bounded(3));
    const auto part = Partition::from_block_of(labels);
    // refine by splitting the first block with more than one member
    for (std::size_t b = 0; b < part.blocks.size(); ++b) {
      if (part.blocks[b].size() < 2) continue;
      auto refined_labels = part.block_of;
      refined_labels[part.blocks[b].front()] = static_cast<int>(part.blocks.size());
      const auto refined = Partition::from_block_of(refined_labels);
      REQUIRE(score_partition(spec, plan, refined).cs >= score_partition(spec, plan, part).cs);
      break;
    }
  }
}

TEST_CASE("fully separate blocks solve to their solo optima") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);
  const auto bu = bottom_up_solve(spec, plan, *Partition::parse("A|B|C", spec));
  REQUIRE(bu.all_converged);
  for (int i = 0; i < 3; ++i)
    CHECK(bu.stage1[i] == Catch::Approx(solo_stage1_oracle(spec.subsystems[i])).margin(1e-4));
  // the solo optima sit on demand grid points
  CHECK(bu.stage1[0] == Catch::Approx(9.0 / 7.0).margin(1e-3));
  CHECK(bu.stage1[1] == Catch::Approx(19.0 / 7.0).margin(1e-3));
  CHECK(bu.stage1[2] == Catch::Approx(10.0 / 7.0).margin(1e-3));
}

TEST_CASE("the paired block reproduces the two-subsystem solution") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);
  const auto bu = bottom_up_solve(spec, plan, *Partition::parse("A,B|C", spec));
  REQUIRE(bu.all_converged);

  const auto spec2 = case2(8);
  const auto two = solve(build_locally_discretized(
      spec2, build_local_grid(spec2, demand_grids(spec2), approach1_plan(spec2))));
  CHECK(bu.stage1[0] == Catch::Approx(two.stage1[0]).margin(1e-3));
  CHECK(bu.stage1[1] == Catch::Approx(two.stage1[1]).margin(1e-3));
  CHECK(bu.stage1[2] == Catch::Approx(10.0 / 7.0).margin(1e-3));
}

TEST_CASE("weakly coupled blocks stay near their solo optima") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);
  for (const char* label : {"B,C|A", "A,C|B"}) {
    const auto bu = bottom_up_solve(spec, plan, *Partition::parse(label, spec));
    REQUIRE(bu.all_converged);
    for (int i = 0; i < 3; ++i) {
      const double solo = solo_stage1_oracle(spec.subsystems[i]);
      // the 0.01..0.03 couplings only nudge the solo solutions upward
      REQUIRE(bu.stage1[i] >= solo - 1e-6);
      REQUIRE(bu.stage1[i] <= solo + 0.08);
    }
  }
}

TEST_CASE("a single block equals the whole-system solve") {
  const auto spec = case3(8);
  const auto plan = approach1_plan(spec);
  const auto bu = bottom_up_solve(spec, plan, *Partition::parse("A,B,C", spec));
  const auto whole = solve(build_locally_discretized(
      spec, build_local_grid(spec, demand_grids(spec), plan)));
  for (int i = 0; i < 3; ++i)
    CHECK(bu.stage1[i] == Catch::Approx(whole.stage1[i]).margin(1e-8));
}

TEST_CASE("with no couplings every partition agrees") {
  ProblemSpec spec = case3(4);
  for (auto& c : spec.couplings) c.d_coef = 0.0;
  const auto plan = approach1_plan(spec);
  std::vector<std::vector<double>> results;
  for (const char* label : {"A,B,C", "A,B|C", "A|B|C", "B,C|A"}) {
    const auto part = *Partition::parse(label, spec);
    CHECK(score_partition(spec, plan, part).cs == 0);
    results.push_back(bottom_up_solve(spec, plan, part).stage1);
  }
  for (std::size_t r = 1; r < results.size(); ++r)
    for (int i = 0; i < 3; ++i)
      CHECK(results[r][i] == Catch::Approx(results[0][i]).margin(1e-9));
}

TEST_CASE("ranked partition report carries blocks and scores") {
  const auto spec = case3(8);
  const auto ranked = enumerate_partitions(spec, approach1_plan(spec), 70);
  const auto j = partition_report_json(spec, ranked);
  REQUIRE(j.is_array());
  REQUIRE_FALSE(j.empty());
  CHECK(j[0]["cs"] == 8);
  CHECK(j[0]["ss_max"] == 66);
  CHECK(j[0]["blocks"].size() == 2);
}

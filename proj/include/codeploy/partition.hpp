#pragma once

// Coupling-aware system partitioning and independent bottom-up block
// solves. Coordination size counts cross-block coupling instances (one
// stage-1 value plus one per coupling band); subproblem size is the
// variable count of a block's standalone program.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeploy/solver.hpp"
#include "codeploy/stochprog.hpp"

namespace codeploy {

struct Partition {
  std::vector<int> block_of;              // subsystem index -> block label
  std::vector<std::vector<int>> blocks;   // canonical: sorted members, blocks by smallest member

  static Partition from_block_of(std::vector<int> labels) {
    Partition part;
    const int n = static_cast<int>(labels.size());
    std::vector<int> remap(n, -1);
    int next = 0;
    part.block_of.resize(n);
    for (int i = 0; i < n; ++i) {
      if (remap[labels[i]] == -1) {
        remap[labels[i]] = next++;
        part.blocks.emplace_back();
      }
      part.block_of[i] = remap[labels[i]];
      part.blocks[part.block_of[i]].push_back(i);
    }
    return part;
  }

  std::string to_string(const ProblemSpec& spec) const {
    std::ostringstream os;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (b) os << "|";
      for (std::size_t k = 0; k < blocks[b].size(); ++k) {
        if (k) os << ",";
        os << spec.subsystems[blocks[b][k]].id;
      }
    }
    return os.str();
  }

  /// Parse "A,B|C". Every subsystem must appear exactly once.
  static std::optional<Partition> parse(const std::string& text, const ProblemSpec& spec) {
    std::vector<int> labels(spec.count(), -1);
    int block = 0;
    std::string token;
    auto flush_token = [&](const std::string& tok) {
      if (tok.empty()) return false;
      auto idx = spec.index_of(tok);
      if (!idx || labels[*idx] != -1) return false;
      labels[*idx] = block;
      return true;
    };
    for (char ch : text) {
      if (ch == ',' || ch == '|') {
        if (!flush_token(token)) return std::nullopt;
        token.clear();
        if (ch == '|') ++block;
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        token.push_back(ch);
      }
    }
    if (!flush_token(token)) return std::nullopt;
    for (int l : labels)
      if (l == -1) return std::nullopt;
    return from_block_of(labels);
  }
};

struct PartitionScore {
  std::int64_t cs = 0;
  std::vector<std::int64_t> ss;
  std::int64_t ss_max = 0;
};

/// Effective band count of a coupling under the plan (bands partition the
/// origin's own scenarios, so the count caps there).
inline int effective_bands(const ProblemSpec& spec, const CouplingPlan& plan, int dest, int origin) {
  return std::min(plan.s_of(dest, origin), spec.subsystems[origin].s_own);
}

inline PartitionScore score_partition(const ProblemSpec& spec, const CouplingPlan& plan,
                                      const Partition& part) {
  PartitionScore score;
  for (const auto& c : spec.couplings) {
    if (!(c.d_coef > 0.0)) continue;
    const int i = *spec.index_of(c.dest), j = *spec.index_of(c.origin);
    if (part.block_of[i] != part.block_of[j])
      score.cs += 1 + effective_bands(spec, plan, i, j);
  }
  for (const auto& members : part.blocks) {
    const auto build = build_standalone(spec, members, plan);
    score.ss.push_back(build.program.layout.n_var);
  }
  score.ss_max = *std::max_element(score.ss.begin(), score.ss.end());
  return score;
}

struct RankedPartition {
  Partition partition;
  PartitionScore score;
};

/// All set partitions, scored, filtered by the subproblem-size bound and
/// ranked by coordination size (ties by subproblem size, then by the
/// canonical block string). Exhaustive enumeration; refuses n > 12.
inline std::vector<RankedPartition> enumerate_partitions(const ProblemSpec& spec,
                                                         const CouplingPlan& plan,
                                                         std::int64_t ss_ub) {
  const int n = spec.count();
  if (n > 12)
    throw std::invalid_argument("enumerate_partitions: exhaustive enumeration supports at most "
                                "12 subsystems; larger systems need a heuristic mode (not provided)");
  std::vector<RankedPartition> ranked;
  std::vector<int> labels(n, 0);
  // restricted growth strings enumerate set partitions exactly once
  auto recurse = [&](auto&& self, int pos, int maxl) -> void {
    if (pos == n) {
      Partition part = Partition::from_block_of(labels);
      PartitionScore sc = score_partition(spec, plan, part);
      if (sc.ss_max <= ss_ub) ranked.push_back({std::move(part), std::move(sc)});
      return;
    }
    for (int l = 0; l <= maxl + 1; ++l) {
      labels[pos] = l;
      self(self, pos + 1, std::max(maxl, l));
    }
  };
  if (n > 0) recurse(recurse, 1, 0);  // labels[0] = 0 fixed
  std::sort(ranked.begin(), ranked.end(), [&](const RankedPartition& a, const RankedPartition& b) {
    if (a.score.cs != b.score.cs) return a.score.cs < b.score.cs;
    if (a.score.ss_max != b.score.ss_max) return a.score.ss_max < b.score.ss_max;
    return a.partition.to_string(spec) < b.partition.to_string(spec);
  });
  return ranked;
}

struct BlockResult {
  std::vector<int> members;
  SolveResult result;
  std::int64_t n_var = 0;
};

struct BottomUpResult {
  std::vector<BlockResult> blocks;
  std::vector<double> stage1;   // per original subsystem
  double objective_sum = 0.0;   // indicative only: cross-block coupling costs excluded
  bool all_converged = true;
};

/// Solve each block's standalone program independently and combine the
/// stage-1 decisions.
inline BottomUpResult bottom_up_solve(const ProblemSpec& spec, const CouplingPlan& plan,
                                      const Partition& part, const AssembleOptions& opts = {},
                                      const SolverConfig& cfg = {}) {
  BottomUpResult out;
  out.stage1.assign(spec.count(), 0.0);
  for (const auto& members : part.blocks) {
    const auto build = build_standalone(spec, members, plan, opts);
    BlockResult block;
    block.members = members;
    block.n_var = build.program.layout.n_var;
    block.result = solve(build.program, cfg);
    out.objective_sum += block.result.objective;
    out.all_converged = out.all_converged && block.result.converged;
    for (std::size_t k = 0; k < members.size(); ++k)
      out.stage1[members[k]] = block.result.stage1[k];
    out.blocks.push_back(std::move(block));
  }
  return out;
}

inline nlohmann::json partition_report_json(const ProblemSpec& spec,
                                            const std::vector<RankedPartition>& ranked) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : ranked) {
    nlohmann::json jb;
    jb["blocks"] = nlohmann::json::array();
    for (const auto& members : r.partition.blocks) {
      nlohmann::json ids = nlohmann::json::array();
      for (int m : members) ids.push_back(spec.subsystems[m].id);
      jb["blocks"].push_back(ids);
    }
    jb["cs"] = r.score.cs;
    jb["ss"] = r.score.ss;
    jb["ss_max"] = r.score.ss_max;
    jb["feasible"] = true;
    j.push_back(std::move(jb));
  }
  return j;
}

}  // namespace codeploy

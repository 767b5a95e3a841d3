#pragma once

// Pre-processing that quantifies how strongly each coupling propagates
// uncertainty and assigns a per-coupling scenario count. Two routes:
// an analytic one that reads the strength off the model coefficients,
// and a data-driven one based on standardized regression coefficients
// from a small sampled solve.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include <json.hpp>

#include "codeploy/model.hpp"

namespace codeploy {

// ---------------------------------------------------------------------------
// Deterministic RNG (stable across platforms and standard libraries).

struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Unbiased draw from [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }
  double uniform01() { return (next() >> 11) * 0x1.0p-53; }
};

/// Independent stream for run r of a multi-run experiment.
inline SplitMix64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 mix(seed ^ (0xa0761d6478bd642fULL + stream * 0xe7037ed1a0b428dbULL));
  mix.next();
  return mix;
}

// ---------------------------------------------------------------------------

/// Integer ceiling of s * delta with a guard against floating-point noise
/// (values a hair above an integer do not get rounded up).
inline std::int64_t scenario_ceil(double s_times_delta) {
  return static_cast<std::int64_t>(std::ceil(s_times_delta - 1e-9));
}

struct CouplingPlan {
  enum class Method { analytic, saa_regression, default_plan };

  struct Entry {
    int dest = -1;
    int origin = -1;
    double delta_rel = 0.0;
    int s_coupling = 1;
  };

  struct RegressionDiag {
    std::string dest;
    std::vector<std::string> inputs;
    std::vector<double> beta;
    double beta0 = 0.0;
    std::vector<bool> degenerate;
    bool undefined = false;
  };

  struct Diagnostics {
    bool saa_skipped = false;
    bool saa_converged = true;
    std::int64_t subset_size = 0;
    std::vector<RegressionDiag> regressions;
    std::vector<std::string> notes;
  };

  std::vector<Entry> entries;  // one per coupling with d_coef > 0
  Method method = Method::default_plan;
  Diagnostics diagnostics;

  const Entry* find(int dest, int origin) const {
    for (const auto& e : entries)
      if (e.dest == dest && e.origin == origin) return &e;
    return nullptr;
  }
  int s_of(int dest, int origin) const {
    const Entry* e = find(dest, origin);
    return e ? e->s_coupling : 1;
  }
  double delta_of(int dest, int origin) const {
    const Entry* e = find(dest, origin);
    return e ? e->delta_rel : 0.0;
  }
};

inline const char* method_name(CouplingPlan::Method m) {
  switch (m) {
    case CouplingPlan::Method::analytic: return "analytic";
    case CouplingPlan::Method::saa_regression: return "saa_regression";
    default: return "default";
  }
}

namespace detail {

/// Product of the other subsystems' own scenario counts, saturated.
inline std::int64_t coupling_cap(const ProblemSpec& spec, int dest) {
  std::int64_t cap = 1;
  for (int k = 0; k < spec.count(); ++k) {
    if (k == dest) continue;
    cap *= spec.subsystems[k].s_own;
    if (cap > (std::int64_t{1} << 40)) return std::int64_t{1} << 40;
  }
  return cap;
}

inline int clamp_s_coupling(const ProblemSpec& spec, int dest, std::int64_t raw) {
  const std::int64_t cap = coupling_cap(spec, dest);
  raw = std::max<std::int64_t>(1, std::min(raw, cap));
  return static_cast<int>(raw);
}

}  // namespace detail

/// Analytic plan: for the linear-demand power-law family the relative
/// dynamic coupling equals the demand coefficient itself, so the plan
/// needs no extra analysis. An override hook serves other model families
/// where the sensitivity ratio is known analytically but differs from d.
inline CouplingPlan approach1_plan(
    const ProblemSpec& spec,
    const std::function<double(int dest, int origin)>& delta_override = nullptr) {
  CouplingPlan plan;
  plan.method = CouplingPlan::Method::analytic;
  for (const auto& c : spec.couplings) {
    if (!(c.d_coef > 0.0)) continue;
    const int i = *spec.index_of(c.dest);
    const int j = *spec.index_of(c.origin);
    const double delta = delta_override ? delta_override(i, j) : c.d_coef;
    const int si = spec.subsystems[i].s_own;
    CouplingPlan::Entry e;
    e.dest = i;
    e.origin = j;
    e.delta_rel = delta;
    e.s_coupling = detail::clamp_s_coupling(spec, i, scenario_ceil(si * delta));
    plan.entries.push_back(e);
  }
  return plan;
}

/// Plan with one scenario per coupling (complete decoupling).
inline CouplingPlan default_plan(const ProblemSpec& spec, std::string note = {}) {
  CouplingPlan plan;
  plan.method = CouplingPlan::Method::default_plan;
  for (const auto& c : spec.couplings) {
    if (!(c.d_coef > 0.0)) continue;
    plan.entries.push_back({*spec.index_of(c.dest), *spec.index_of(c.origin), 0.0, 1});
  }
  if (!note.empty()) plan.diagnostics.notes.push_back(std::move(note));
  return plan;
}

/// Plan that keeps every coupling at the full tensor resolution.
inline CouplingPlan full_plan(const ProblemSpec& spec) {
  CouplingPlan plan;
  plan.method = CouplingPlan::Method::analytic;
  for (const auto& c : spec.couplings) {
    if (!(c.d_coef > 0.0)) continue;
    const int i = *spec.index_of(c.dest);
    const int j = *spec.index_of(c.origin);
    plan.entries.push_back({i, j, 1.0, spec.subsystems[j].s_own});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Sampled-scenario subset selection.

/// Uniform sample without replacement of ceil(fraction * total) flat
/// scenario indices, or nothing when the fraction amounts to less than one
/// scenario. Sorted, reproducible from the RNG state (Floyd's algorithm).
inline std::optional<std::vector<std::int64_t>> saa_subset(const ProblemSpec& spec,
                                                           std::int64_t full_total,
                                                           SplitMix64& rng) {
  const double want = spec.saa_fraction * static_cast<double>(full_total);
  if (want < 1.0 - 1e-9) return std::nullopt;
  const std::int64_t k = std::min<std::int64_t>(full_total, scenario_ceil(want));
  std::vector<std::int64_t> out;
  out.reserve(k);
  std::unordered_set<std::int64_t> seen;
  for (std::int64_t j = full_total - k; j < full_total; ++j) {
    const std::int64_t t = static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(j) + 1));
    if (seen.insert(t).second) out.push_back(t);
    else { seen.insert(j); out.push_back(j); }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Standardized regression coefficients.

/// Per-subsystem sample extracted from one converged sampled solve:
/// own stage-2 demand, inflowing origin capacities, and the subsystem cost.
struct SaaSample {
  std::string owner;
  std::vector<std::string> input_names;  // [0] = own demand, then one per inflow origin id
  std::vector<int> input_origins;        // -1 for own demand, origin index otherwise
  Eigen::MatrixXd inputs;                // rows = sampled scenarios
  Eigen::VectorXd output;
};

struct RegressionResult {
  std::vector<double> beta;       // per input column; 0 for dropped columns
  double beta0 = 0.0;
  std::vector<bool> degenerate;   // per input column
  bool undefined = false;
  std::vector<double> mean, stddev;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd standardized;   // retained columns only, in input order
  std::vector<int> retained;      // column indices into inputs
};

/// Ordinary least squares of the raw output on mean/std-standardized
/// inputs, with intercept. Inputs with (numerically) zero standard
/// deviation are dropped and flagged. Rank-deficient systems resolve to
/// the minimum-norm coefficient vector.
inline RegressionResult src_regression(const SaaSample& sample) {
  const auto rows = sample.inputs.rows();
  const auto cols = sample.inputs.cols();
  if (rows < 2) throw std::invalid_argument("src_regression needs at least 2 rows");
  if (cols < 1) throw std::invalid_argument("src_regression needs at least 1 input");

  RegressionResult res;
  res.beta.assign(cols, 0.0);
  res.degenerate.assign(cols, false);
  res.mean.assign(cols, 0.0);
  res.stddev.assign(cols, 0.0);

  std::vector<Eigen::VectorXd> kept;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const Eigen::VectorXd col = sample.inputs.col(c);
    const double mu = col.mean();
    const double var = (col.array() - mu).square().sum() / static_cast<double>(rows - 1);
    const double sd = std::sqrt(std::max(var, 0.0));
    res.mean[c] = mu;
    res.stddev[c] = sd;
    if (sd < 1e-12 * (1.0 + std::abs(mu))) {
      res.degenerate[c] = true;
      continue;
    }
    res.retained.push_back(static_cast<int>(c));
    kept.push_back((col.array() - mu) / sd);
  }

  if (kept.empty()) {
    res.undefined = true;
    res.beta0 = sample.output.mean();
    res.residuals = sample.output.array() - res.beta0;
    return res;
  }

  Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(kept.size()) + 1);
  for (std::size_t k = 0; k < kept.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = kept[k];
  X.col(X.cols() - 1).setOnes();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  const Eigen::VectorXd b = cod.solve(sample.output);

  for (std::size_t k = 0; k < res.retained.size(); ++k)
    res.beta[res.retained[k]] = b(static_cast<Eigen::Index>(k));
  res.beta0 = b(b.size() - 1);
  res.residuals = sample.output - X * b;
  res.standardized.resize(rows, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k)
    res.standardized.col(static_cast<Eigen::Index>(k)) = kept[k];
  return res;
}

// ---------------------------------------------------------------------------

/// Regression-based plan. Couplings whose strength ratio cannot be formed
/// (own-demand coefficient near zero, degenerate inputs, missing samples)
/// fall back to one scenario. Passing no samples (sampling skipped or the
/// sampled solve failed) yields the all-default plan.
inline CouplingPlan approach2_plan(const ProblemSpec& spec,
                                   const std::vector<std::optional<SaaSample>>& samples) {
  bool any = false;
  for (const auto& s : samples)
    if (s) { any = true; break; }
  if (!any) {
    CouplingPlan plan = default_plan(spec, "sampling unavailable; using one scenario per coupling");
    plan.diagnostics.saa_skipped = true;
    return plan;
  }

  CouplingPlan plan;
  plan.method = CouplingPlan::Method::saa_regression;

  std::vector<std::optional<RegressionResult>> regs(spec.count());
  for (int i = 0; i < spec.count(); ++i) {
    if (!samples[i]) continue;
    regs[i] = src_regression(*samples[i]);
    CouplingPlan::RegressionDiag diag;
    diag.dest = spec.subsystems[i].id;
    diag.inputs = samples[i]->input_names;
    diag.beta = regs[i]->beta;
    diag.beta0 = regs[i]->beta0;
    diag.degenerate = regs[i]->degenerate;
    diag.undefined = regs[i]->undefined;
    plan.diagnostics.regressions.push_back(std::move(diag));
  }

  for (const auto& c : spec.couplings) {
    if (!(c.d_coef > 0.0)) continue;
    const int i = *spec.index_of(c.dest);
    const int j = *spec.index_of(c.origin);
    CouplingPlan::Entry e;
    e.dest = i;
    e.origin = j;
    e.delta_rel = 0.0;
    e.s_coupling = 1;

    bool fell_back = true;
    if (samples[i] && regs[i] && !regs[i]->undefined) {
      const auto& smp = *samples[i];
      const auto& reg = *regs[i];
      int own_col = -1, cpl_col = -1;
      for (std::size_t k = 0; k < smp.input_origins.size(); ++k) {
        if (smp.input_origins[k] == -1) own_col = static_cast<int>(k);
        if (smp.input_origins[k] == j) cpl_col = static_cast<int>(k);
      }
      if (own_col >= 0 && cpl_col >= 0 && !reg.degenerate[own_col] &&
          !reg.degenerate[cpl_col] && std::abs(reg.beta[own_col]) >= 1e-12) {
        e.delta_rel = std::abs(reg.beta[cpl_col] / reg.beta[own_col]);
        const int si = spec.subsystems[i].s_own;
        e.s_coupling = detail::clamp_s_coupling(spec, i, scenario_ceil(si * e.delta_rel));
        fell_back = false;
      }
    }
    if (fell_back)
      plan.diagnostics.notes.push_back("coupling " + c.dest + "<-" + c.origin +
                                       ": strength ratio undefined, defaulting to 1 scenario");
    plan.entries.push_back(e);
  }
  return plan;
}

inline nlohmann::json plan_to_json(const ProblemSpec& spec, const CouplingPlan& plan) {
  nlohmann::json j;
  j["method"] = method_name(plan.method);
  j["delta_rel"] = nlohmann::json::array();
  j["s_coupling"] = nlohmann::json::array();
  for (const auto& e : plan.entries) {
    const std::string d = spec.subsystems[e.dest].id;
    const std::string o = spec.subsystems[e.origin].id;
    j["delta_rel"].push_back({{"dest", d}, {"origin", o}, {"value", e.delta_rel}});
    j["s_coupling"].push_back({{"dest", d}, {"origin", o}, {"value", e.s_coupling}});
  }
  nlohmann::json diag;
  diag["saa_skipped"] = plan.diagnostics.saa_skipped;
  diag["saa_converged"] = plan.diagnostics.saa_converged;
  diag["subset_size"] = plan.diagnostics.subset_size;
  diag["notes"] = plan.diagnostics.notes;
  diag["regressions"] = nlohmann::json::array();
  for (const auto& r : plan.diagnostics.regressions) {
    diag["regressions"].push_back({{"dest", r.dest}, {"inputs", r.inputs},
                                   {"beta", r.beta}, {"beta0", r.beta0},
                                   {"degenerate", r.degenerate}, {"undefined", r.undefined}});
  }
  j["diagnostics"] = diag;
  return j;
}

}  // namespace codeploy

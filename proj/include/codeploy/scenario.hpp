#pragma once

// Demand discretization and per-subsystem scenario tensors.
//
// Every subsystem owns a local scenario grid with one dimension per
// subsystem: its own dimension holds its demand scenarios, and each other
// dimension tracks an inflowing coupling at that coupling's resolution
// (size 1 when the coupling is absent). Dimension 0 varies fastest in the
// flat ordering. All indices are 0-based.

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "codeploy/coupling.hpp"
#include "codeploy/model.hpp"

namespace codeploy {

struct DemandGrid {
  int owner = -1;
  std::vector<double> values;
};

/// Equal-increment discretization of [a, b] into s levels, endpoints
/// included. A single-level grid takes the interval midpoint.
inline DemandGrid discretize_demand(double a, double b, int s, int owner = -1) {
  if (!(a <= b)) throw std::invalid_argument("discretize_demand: a must be <= b");
  if (s < 1) throw std::invalid_argument("discretize_demand: s must be >= 1");
  DemandGrid g;
  g.owner = owner;
  if (s == 1) {
    g.values = {0.5 * (a + b)};
    return g;
  }
  g.values.resize(s);
  for (int k = 0; k < s; ++k)
    g.values[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(s - 1);
  g.values.front() = a;
  g.values.back() = b;
  return g;
}

inline std::vector<DemandGrid> demand_grids(const ProblemSpec& spec) {
  std::vector<DemandGrid> out;
  out.reserve(spec.subsystems.size());
  for (int i = 0; i < spec.count(); ++i) {
    const auto& s = spec.subsystems[i];
    out.push_back(discretize_demand(s.d2_low, s.d2_high, s.s_own, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat/multi indexing, dimension 0 fastest.

inline std::int64_t flat_index(const std::vector<int>& multi, const std::vector<int>& dims) {
  if (multi.size() != dims.size()) throw std::out_of_range("flat_index: rank mismatch");
  std::int64_t flat = 0, stride = 1;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (multi[k] < 0 || multi[k] >= dims[k]) throw std::out_of_range("flat_index: index out of range");
    flat += multi[k] * stride;
    stride *= dims[k];
  }
  return flat;
}

inline std::vector<int> multi_index(std::int64_t flat, const std::vector<int>& dims) {
  std::int64_t total = 1;
  for (int d : dims) total *= d;
  if (flat < 0 || flat >= total) throw std::out_of_range("multi_index: flat index out of range");
  std::vector<int> multi(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) {
    multi[k] = static_cast<int>(flat % dims[k]);
    flat /= dims[k];
  }
  return multi;
}

// ---------------------------------------------------------------------------

/// A subsystem's local scenario tensor.
struct ScenarioGrid {
  int owner = -1;
  std::vector<int> dim_sizes;
  std::int64_t total = 0;
  std::vector<double> demand;          // owner's stage-2 demand per flat scenario
  std::vector<std::int64_t> strides;

  int dim(std::int64_t t, int axis) const {
    return static_cast<int>((t / strides[axis]) % dim_sizes[axis]);
  }
  int own_index(std::int64_t t) const { return dim(t, owner); }
};

namespace detail {

inline ScenarioGrid make_grid(int owner, std::vector<int> dims, const DemandGrid& own_demand) {
  ScenarioGrid g;
  g.owner = owner;
  g.dim_sizes = std::move(dims);
  g.strides.resize(g.dim_sizes.size());
  std::int64_t stride = 1;
  for (std::size_t k = 0; k < g.dim_sizes.size(); ++k) {
    g.strides[k] = stride;
    stride *= g.dim_sizes[k];
  }
  g.total = stride;
  g.demand.resize(g.total);
  for (std::int64_t t = 0; t < g.total; ++t)
    g.demand[t] = own_demand.values[g.own_index(t)];
  return g;
}

}  // namespace detail

/// Shared full tensor: every subsystem's grid spans all own-demand
/// scenario counts, so all grids have the same shape and a flat index
/// means the same joint realization everywhere.
inline std::vector<ScenarioGrid> build_full_grid(const ProblemSpec& spec,
                                                 const std::vector<DemandGrid>& grids) {
  std::vector<int> dims(spec.count());
  for (int k = 0; k < spec.count(); ++k) dims[k] = spec.subsystems[k].s_own;
  std::vector<ScenarioGrid> out;
  out.reserve(spec.count());
  for (int i = 0; i < spec.count(); ++i) out.push_back(detail::make_grid(i, dims, grids[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Consistency mapping between an origin's own scenarios and the coarser
// coupling bands a destination tracks.

/// Band of origin own-index s under a coupling with s_coupling bands
/// over s_origin own scenarios. Monotone and surjective; the identity
/// when the counts match.
inline int consistency_group(int s, int s_origin, int s_coupling) {
  if (s < 0 || s >= s_origin) throw std::out_of_range("consistency_group: index out of range");
  const std::int64_t num = (static_cast<std::int64_t>(s) + 1) * s_coupling;
  return static_cast<int>((num + s_origin - 1) / s_origin) - 1;
}

/// One directed coupling's band structure.
struct CouplingLink {
  int dest = -1;
  int origin = -1;
  int s_coupling = 1;
  std::vector<int> group_of;  // origin own index -> band
  std::vector<int> rep_of;    // band -> representative origin own index

  int band_lo(int g) const {
    const int s_origin = static_cast<int>(group_of.size());
    return static_cast<int>((static_cast<std::int64_t>(g) * s_origin) / s_coupling);
  }
  int band_hi(int g) const {
    const int s_origin = static_cast<int>(group_of.size());
    return static_cast<int>(((static_cast<std::int64_t>(g) + 1) * s_origin) / s_coupling) - 1;
  }
};

/// Representative own index for each band: the band's lower-median
/// scenario, except the last band which is anchored at the origin's
/// worst scenario so the conservative deployment level propagates
/// unchanged through chained couplings.
inline CouplingLink make_link(int dest, int origin, int s_origin, int s_coupling) {
  if (s_coupling < 1 || s_coupling > s_origin)
    throw std::invalid_argument("make_link: need 1 <= s_coupling <= s_origin");
  CouplingLink link;
  link.dest = dest;
  link.origin = origin;
  link.s_coupling = s_coupling;
  link.group_of.resize(s_origin);
  for (int s = 0; s < s_origin; ++s) link.group_of[s] = consistency_group(s, s_origin, s_coupling);
  link.rep_of.resize(s_coupling);
  for (int g = 0; g < s_coupling; ++g) {
    if (g == s_coupling - 1) {
      link.rep_of[g] = s_origin - 1;
    } else {
      const int lo = link.band_lo(g), hi = link.band_hi(g);
      link.rep_of[g] = lo + (hi - lo) / 2;
    }
  }
  return link;
}

/// Per-subsystem local grids plus the band structure of every coupling.
struct LocalDiscretization {
  std::vector<ScenarioGrid> grids;
  std::vector<CouplingLink> links;

  const CouplingLink* link(int dest, int origin) const {
    for (const auto& l : links)
      if (l.dest == dest && l.origin == origin) return &l;
    return nullptr;
  }
};

/// Local grids: subsystem i keeps all of its own scenarios and tracks
/// each inflow j at the plan's band count (capped at the origin's own
/// count, since bands partition the origin's own scenarios).
inline LocalDiscretization build_local_grid(const ProblemSpec& spec,
                                            const std::vector<DemandGrid>& grids,
                                            const CouplingPlan& plan) {
  LocalDiscretization out;
  const int n = spec.count();
  for (int i = 0; i < n; ++i) {
    std::vector<int> dims(n, 1);
    dims[i] = spec.subsystems[i].s_own;
    for (int j = 0; j < n; ++j) {
      if (j == i || !(spec.coef(i, j) > 0.0)) continue;
      const int sj = spec.subsystems[j].s_own;
      const int sij = std::min(plan.s_of(i, j), sj);
      dims[j] = sij;
      out.links.push_back(make_link(i, j, sj, sij));
    }
    out.grids.push_back(detail::make_grid(i, dims, grids[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------

inline std::string grid_to_csv(const ScenarioGrid& grid, const ProblemSpec& spec) {
  std::ostringstream os;
  os << "flat";
  for (int k = 0; k < spec.count(); ++k) os << ",idx_" << spec.subsystems[k].id;
  os << ",demand\n";
  for (std::int64_t t = 0; t < grid.total; ++t) {
    os << t;
    for (std::size_t k = 0; k < grid.dim_sizes.size(); ++k)
      os << "," << grid.dim(t, static_cast<int>(k));
    os << "," << grid.demand[t] << "\n";
  }
  return os.str();
}

}  // namespace codeploy

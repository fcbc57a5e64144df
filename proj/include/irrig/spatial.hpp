#pragma once

// Fields split into management zones. Small scale: every zone is irrigated on
// the same event days. Large scale: the equipment visits one zone per day in
// list order, so a field cycle spans M days and is switched by one binary.

#include <memory>
#include <string>
#include <vector>

#include "irrig/scheduler.hpp"

namespace irrig {

struct ManagementZone {
  int index = 1;
  std::string label;
  std::shared_ptr<const HeadModel> model;
  ZoneSpec zone;
  double u_lo = 1.4;
  double u_hi = 15.6;
  History history;
  std::vector<double> kc;  ///< per horizon day
};

enum class SpatialMode { small_scale, large_scale };

struct SpatialProblem {
  std::vector<ManagementZone> zones;  ///< cycle order
  int day = 0;
  int horizon = 14;
  std::vector<double> rain, et0;  ///< per horizon day
  double r_c = 50.0;
  double r_u = 20.0;
  SpatialMode mode = SpatialMode::small_scale;
  /// Large scale only: first day of some cycle. Cycles are aligned to it, so a
  /// horizon that starts mid-cycle keeps the running cycle's decision.
  int cycle_anchor = 0;
  /// Decision of the cycle running at `day` when it started earlier.
  int running_cycle = 0;

  void validate() const;
  int phase() const;  ///< days since the running cycle started
};

/// Days of the horizon (1-indexed, starting at d) on which zone j of M may be
/// irrigated: d + j - 1, d + j - 1 + M, ...
std::vector<int> admissible_days(int m, int n, int j, int d);

CoupledProblem to_coupled(const SpatialProblem& p);

enum class SolverKind { exact, homotopy };

struct SpatialResult {
  CoupledSchedule schedule;
  std::vector<HomotopyStep> trace;
  bool converged = true;
  long leaves = 0;
  /// Large scale: binary of each cycle touched by the horizon, the first one
  /// possibly running already.
  std::vector<int> cycles;
};

SpatialResult solve_small_scale(const SpatialProblem& p, SolverKind kind = SolverKind::homotopy,
                                const SigmoidConfig& cfg = {});
SpatialResult solve_large_scale(const SpatialProblem& p, SolverKind kind = SolverKind::homotopy,
                                const SigmoidConfig& cfg = {});
SpatialResult solve_spatial(const SpatialProblem& p, SolverKind kind = SolverKind::homotopy,
                            const SigmoidConfig& cfg = {});

/// Event days (0-based within the horizon) of zone j.
std::vector<int> event_days(const CoupledSchedule& s, size_t j);

}  // namespace irrig

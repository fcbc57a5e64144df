#include "irrig/spatial.hpp"

#include <set>

#include "irrig/errors.hpp"

namespace irrig {

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

void SpatialProblem::validate() const {
  if (zones.empty()) throw ConfigError("field: no management zones");
  if (horizon < 1) throw ConfigError("field: horizon must be >= 1");
  std::set<int> seen;
  for (const auto& z : zones)
    if (!seen.insert(z.index).second) throw ConfigError("field: duplicate zone index " + std::to_string(z.index));
  const int m = static_cast<int>(zones.size());
  if (mode == SpatialMode::large_scale) {
    if (horizon % m != 0)
      throw IndivisibleHorizon("field: horizon " + std::to_string(horizon) + " is not a multiple of " +
                               std::to_string(m) + " zones");
    if (running_cycle != 0 && running_cycle != 1) throw ConfigError("field: running_cycle must be 0 or 1");
  }
}

int SpatialProblem::phase() const {
  const int m = static_cast<int>(zones.size());
  const int q = day - cycle_anchor;
  return q - m * floor_div(q, m);
}

std::vector<int> admissible_days(int m, int n, int j, int d) {
  if (m < 1 || j < 1 || j > m) throw ConfigError("admissible_days: need 1 <= j <= M");
  if (n < 1 || n % m != 0)
    throw IndivisibleHorizon("admissible_days: horizon " + std::to_string(n) + " is not a multiple of " +
                             std::to_string(m));
  std::vector<int> days;
  for (int i = 0; i < n / m; ++i) days.push_back(d + j - 1 + m * i);
  return days;
}

CoupledProblem to_coupled(const SpatialProblem& p) {
  p.validate();
  CoupledProblem cp;
  cp.horizon = p.horizon;
  cp.rain = p.rain;
  cp.et0 = p.et0;
  cp.r_c = p.r_c;
  cp.r_u = p.r_u;
  for (const auto& z : p.zones) cp.zones.push_back({z.model, z.history, z.kc, z.zone, z.u_lo, z.u_hi});
  const int m = static_cast<int>(p.zones.size());
  cp.slot.assign(m, std::vector<int>(p.horizon, -1));
  if (p.mode == SpatialMode::small_scale) {
    cp.binaries = p.horizon;
    for (auto& row : cp.slot)
      for (int k = 0; k < p.horizon; ++k) row[k] = k;
    cp.fixed.assign(cp.binaries, -1);
  } else {
    const int phase = p.phase();
    for (int k = 0; k < p.horizon; ++k) {
      const int q = phase + k;
      cp.slot[q % m][k] = q / m;
    }
    cp.binaries = (phase + p.horizon - 1) / m + 1;
    cp.fixed.assign(cp.binaries, -1);
    if (phase > 0) cp.fixed[0] = p.running_cycle;
  }
  cp.validate();
  return cp;
}

namespace {

SpatialResult solve(const CoupledProblem& cp, SolverKind kind, const SigmoidConfig& cfg) {
  SpatialResult out;
  if (kind == SolverKind::exact) {
    int free = 0;
    for (int v : cp.fixed) free += v == -1;
    if (free > kExactMaxHorizon)
      throw HorizonTooLong("exact solve limited to " + std::to_string(kExactMaxHorizon) + " free binaries, got " +
                           std::to_string(free));
    auto r = solve_exact_coupled(cp, cfg.inner);
    out.schedule = std::move(r.schedule);
    out.leaves = r.leaves;
  } else {
    auto r = homotopy_coupled(cp, cfg);
    out.schedule = std::move(r.schedule);
    out.trace = std::move(r.trace);
    out.converged = r.converged;
  }
  return out;
}

}  // namespace

SpatialResult solve_small_scale(const SpatialProblem& p, SolverKind kind, const SigmoidConfig& cfg) {
  if (p.mode != SpatialMode::small_scale) throw ConfigError("solve_small_scale: problem is large scale");
  return solve(to_coupled(p), kind, cfg);
}

SpatialResult solve_large_scale(const SpatialProblem& p, SolverKind kind, const SigmoidConfig& cfg) {
  if (p.mode != SpatialMode::large_scale) throw ConfigError("solve_large_scale: problem is small scale");
  auto out = solve(to_coupled(p), kind, cfg);
  out.cycles = out.schedule.c;
  return out;
}

SpatialResult solve_spatial(const SpatialProblem& p, SolverKind kind, const SigmoidConfig& cfg) {
  return p.mode == SpatialMode::small_scale ? solve_small_scale(p, kind, cfg) : solve_large_scale(p, kind, cfg);
}

std::vector<int> event_days(const CoupledSchedule& s, size_t j) {
  std::vector<int> days;
  const auto& z = s.zones.at(j);
  for (size_t k = 0; k < z.c.size(); ++k)
    if (z.c[k] == 1) days.push_back(static_cast<int>(k));
  return days;
}

}  // namespace irrig

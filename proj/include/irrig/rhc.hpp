#pragma once

// Receding-horizon closed loop: the Richards column is the plant and the
// scheduler sees only the sensor-depth head of each zone.

#include <cstdint>
#include <string>
#include <vector>

#include "irrig/hydrology.hpp"
#include "irrig/spatial.hpp"

namespace irrig {

struct Weather {
  std::vector<double> rain;  ///< [mm/day], per day
  std::vector<double> et0;   ///< [mm/day], per day
  size_t days() const { return std::min(rain.size(), et0.size()); }
};

struct PlantZone {
  std::string label;
  SoilColumn column;
  std::vector<double> psi0;  ///< initial plant profile
  double sensor_depth = 500.0;
  std::shared_ptr<const HeadModel> model;
  ZoneSpec zone;
  double u_lo = 1.4;
  double u_hi = 15.6;
  double kc = 0.5;
  double x0 = 0.0;                 ///< head the scheduler starts from
  std::vector<double> past_heads;  ///< oldest first, `lag` days before day 1
};

struct Scenario {
  std::string name = "scenario";
  int days = 20;
  int horizon = 14;
  Weather weather;  ///< must cover days + horizon
  std::vector<PlantZone> zones;
  SpatialMode mode = SpatialMode::small_scale;
  SolverKind solver = SolverKind::homotopy;
  SigmoidConfig sigmoid;
  double r_c = 50.0;
  double r_u = 20.0;
  double noise_std = 0.0;  ///< measurement noise [mm]
  std::uint64_t seed = 42;
  SolverSettings plant;

  void validate() const;
  /// FNV-1a digest of every field that affects a run.
  std::string fingerprint() const;
};

/// Uniform profile whose sensor node reads x0.
std::vector<double> uniform_profile(const SoilColumn& column, double x0);

struct DayRecord {
  int day = 0;                                // 1-based
  std::vector<double> measured;               // per zone
  std::vector<int> solved_c;                  // binaries of the horizon
  std::vector<std::vector<int>> zone_c;       // per zone and horizon day
  std::vector<std::vector<double>> solved_u;  // per zone and horizon day
  std::vector<double> predicted;              // per zone, first horizon day
  std::vector<int> applied_c;                 // per zone
  std::vector<double> applied_u;              // per zone
  std::vector<double> realized;               // per zone, head at the end of the day
  bool event = false;                         // fixed cost charged today
  double stage_cost = 0.0;
  double planned_cost = 0.0;
  double solve_seconds = 0.0;
  bool converged = true;
};

struct ClosedLoopTrace {
  std::string scenario;
  std::vector<std::string> zones;
  std::vector<DayRecord> days;
  double total_cost = 0.0;
  double total_volume = 0.0;  ///< [mm], summed over zones
  double solve_seconds = 0.0;

  int events() const;
  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

/// Zone penalty of the realized heads plus the fixed and volume costs.
double stage_cost(const Scenario& s, const DayRecord& r);

ClosedLoopTrace run_closed_loop(const Scenario& s);

struct OpenLoopComparison {
  double exact_seconds = 0.0;
  double homotopy_seconds = 0.0;
  double exact_cost = 0.0;
  double homotopy_cost = 0.0;
  bool same_decisions = false;
  bool converged = false;
  int homotopy_steps = 0;
};

/// Day-1 problem of a scenario.
SpatialProblem first_problem(const Scenario& s);
OpenLoopComparison compare_open_loop(const Scenario& s);

struct Comparison {
  OpenLoopComparison open_loop;
  ClosedLoopTrace exact, homotopy;
  int agreeing_days = 0;  ///< days with the same applied decisions

  void write_json(const std::string& path) const;
};

Comparison compare_exact_vs_homotopy(const Scenario& s);

}  // namespace irrig

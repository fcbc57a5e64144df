#pragma once

// 1D soil-water physics: van Genuchten-Mualem constitutive relations, the
// Feddes root-uptake sink and a mass-conservative implicit Richards solver.
// All quantities are in millimetres and days; z is depth, positive downward.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace irrig {

inline constexpr double kSecondsPerDay = 86400.0;
/// m/s -> mm/day
inline constexpr double kMetrePerSecondToMmPerDay = 1000.0 * kSecondsPerDay;

/// van Genuchten-Mualem soil constants, stored in mm/day and 1/mm.
struct HydraulicParams {
  std::string name;
  double Ks = 0.0;        ///< saturated conductivity [mm/day]
  double theta_s = 0.0;   ///< saturated water content [-]
  double theta_r = 0.0;   ///< residual water content [-]
  double alpha_vg = 0.0;  ///< inverse air-entry head [1/mm]
  double n_vg = 0.0;      ///< pore-size index [-]

  double m_vg() const { return 1.0 - 1.0 / n_vg; }

  /// Build from tabulated units (Ks in m/s, alpha in 1/m).
  static HydraulicParams from_table_units(std::string name, double ks_m_per_s, double theta_s,
                                          double theta_r, double alpha_per_m, double n);

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Built-in soils: "loam", "loamy_sand", "sand".
HydraulicParams soil_by_name(const std::string& name);
std::vector<std::string> soil_names();

enum class RootDistribution { uniform };

/// Feddes piecewise-linear stress function thresholds [mm] and root depth.
struct FeddesParams {
  double psi_anaer = -50.0;
  double psi_opt_hi = -250.0;
  double psi_opt_lo = -4000.0;
  double psi_wilt = -15000.0;
  double root_depth = 500.0;
  RootDistribution root_distribution = RootDistribution::uniform;

  void validate() const;
};

enum class BottomBoundary {
  free_drainage,  ///< unit total-head gradient
  no_flux,
};

struct SoilColumn {
  double depth = 600.0;             ///< Hz [mm]
  std::vector<double> node_depths;  ///< strictly increasing, last == depth
  HydraulicParams params;
  FeddesParams feddes;
  BottomBoundary bottom = BottomBoundary::free_drainage;

  /// Equally spaced compartments; node k sits at (k + 1) * depth / nodes.
  static SoilColumn uniform(HydraulicParams params, double depth = 600.0, int nodes = 30,
                            FeddesParams feddes = {});

  int nodes() const { return static_cast<int>(node_depths.size()); }
  /// Control-volume length of each node; sums to depth.
  std::vector<double> cell_lengths() const;
  /// Length of each control volume that lies inside the root zone.
  std::vector<double> root_lengths() const;
  /// Index of the node at sensor_depth, or nullopt.
  std::optional<int> node_at(double sensor_depth, double tol = 1e-9) const;

  void validate() const;
};

struct ColumnState {
  std::vector<double> psi;  ///< pressure head per node [mm]
  double t = 0.0;           ///< [day]
};

/// Forcing held constant over one day.
struct DailyInput {
  double irrigation = 0.0;  ///< [mm/day]
  double rain = 0.0;        ///< [mm/day]
  double et0 = 0.0;         ///< [mm/day]
  double kc = 0.0;          ///< [-]

  void validate() const;
};

double water_content(double psi, const HydraulicParams& p);
double hydraulic_conductivity(double psi, const HydraulicParams& p);
double capillary_capacity(double psi, const HydraulicParams& p);
double feddes_stress(double psi, const FeddesParams& f);
/// Root water uptake rate [1/day] at depth z.
double sink_term(double psi, const DailyInput& input, const FeddesParams& f, double z);

/// Boundary and sink volumes [mm of water] accumulated over a step.
struct WaterBalance {
  double inflow = 0.0;
  double drainage = 0.0;
  double uptake = 0.0;
  double storage_start = 0.0;
  double storage_end = 0.0;

  double residual() const { return storage_end - storage_start - (inflow - drainage - uptake); }
  double relative_error() const;
  WaterBalance& operator+=(const WaterBalance& o);
};

double column_storage(const SoilColumn& column, const std::vector<double>& psi);

struct SolverSettings {
  double dt_max = 1.0 / 240.0;  ///< 6 minutes
  double dt_min = 1e-8;
  double tol_newton = 1e-10;    ///< residual infinity-norm [mm]
  int max_newton = 40;
};

/// Implicit-Euler Richards integrator over a fixed column.
class RichardsSolver {
 public:
  explicit RichardsSolver(SoilColumn column, SolverSettings settings = {});

  const SoilColumn& column() const { return column_; }
  const SolverSettings& settings() const { return settings_; }

  /// Advance by dt days with constant forcing; internal sub-steps are at most
  /// settings.dt_max. Throws NonConvergence.
  ColumnState step(const ColumnState& state, const DailyInput& input, double dt,
                   WaterBalance* balance = nullptr) const;

 private:
  bool substep(std::vector<double>& psi, const std::vector<double>& psi_old,
               const DailyInput& input, double dt, WaterBalance& balance) const;

  SoilColumn column_;
  SolverSettings settings_;
  std::vector<double> cells_;
  std::vector<double> root_cells_;
};

/// Profile with zero total-head gradient anchored at the top node head.
std::vector<double> hydrostatic_profile(const SoilColumn& column, double psi_top);

enum class NoiseMode {
  measurement,  ///< added to recorded heads only
  process,      ///< added to the state after each recording interval
};

struct SimulationOptions {
  double noise_std = 0.0;  ///< [mm]
  NoiseMode noise_mode = NoiseMode::measurement;
  std::uint64_t seed = 42;
  double record_dt = 1.0 / 240.0;  ///< must divide one day
  /// Depths to record; empty records every node.
  std::vector<double> record_depths;
};

struct Trajectory {
  std::vector<double> depths;             ///< depth of each recorded column
  std::vector<double> times;              ///< [day]
  std::vector<std::vector<double>> heads; ///< heads[sample][column]
  WaterBalance balance;                   ///< of the true (noise-free) state

  void write_csv(const std::string& path) const;
};

/// Run the plant through daily inputs. Records the initial state at t = 0
/// and every record_dt thereafter. Throws NonConvergence carrying the day.
Trajectory simulate(const RichardsSolver& solver, const std::vector<double>& psi0,
                    const std::vector<DailyInput>& inputs, const SimulationOptions& options);

}  // namespace irrig

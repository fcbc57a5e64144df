#include "irrig/hydrology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "irrig/errors.hpp"

namespace irrig {

HydraulicParams HydraulicParams::from_table_units(std::string name, double ks_m_per_s,
                                                  double theta_s, double theta_r,
                                                  double alpha_per_m, double n) {
  HydraulicParams p;
  p.name = std::move(name);
  p.Ks = ks_m_per_s * kMetrePerSecondToMmPerDay;
  p.theta_s = theta_s;
  p.theta_r = theta_r;
  p.alpha_vg = alpha_per_m * 1e-3;
  p.n_vg = n;
  p.validate();
  return p;
}

void HydraulicParams::validate() const {
  if (!(Ks > 0.0)) throw ConfigError("hydraulic params '" + name + "': Ks must be > 0");
  if (!(theta_r >= 0.0 && theta_r < theta_s && theta_s <= 1.0))
    throw ConfigError("hydraulic params '" + name + "': need 0 <= theta_r < theta_s <= 1");
  if (!(n_vg > 1.0)) throw ConfigError("hydraulic params '" + name + "': n must be > 1");
  if (!(alpha_vg > 0.0)) throw ConfigError("hydraulic params '" + name + "': alpha must be > 0");
}

HydraulicParams soil_by_name(const std::string& name) {
  if (name == "loam") return HydraulicParams::from_table_units(name, 2.889e-6, 0.430, 0.078, 3.600, 1.56);
  if (name == "loamy_sand")
    return HydraulicParams::from_table_units(name, 4.053e-5, 0.410, 0.057, 12.40, 2.28);
  if (name == "sand") return HydraulicParams::from_table_units(name, 8.250e-5, 0.430, 0.045, 14.50, 2.68);
  throw ConfigError("unknown soil '" + name + "' (expected loam, loamy_sand or sand)");
}

std::vector<std::string> soil_names() { return {"loam", "loamy_sand", "sand"}; }

void FeddesParams::validate() const {
  if (!(psi_anaer > psi_opt_hi && psi_opt_hi > psi_opt_lo && psi_opt_lo > psi_wilt))
    throw ConfigError("feddes thresholds must satisfy anaer > opt_hi > opt_lo > wilt");
  if (!(root_depth > 0.0)) throw ConfigError("feddes root_depth must be > 0");
}

void DailyInput::validate() const {
  if (!(irrigation >= 0.0 && rain >= 0.0 && et0 >= 0.0))
    throw ConfigError("daily input: irrigation, rain and et0 must be >= 0");
  if (!(kc >= 0.0 && kc <= 1.0)) throw ConfigError("daily input: kc must lie in [0, 1]");
}

// --- constitutive relations -------------------------------------------------

namespace {

// (alpha |psi|)^n, zero at and above saturation.
double scaled_suction_pow_n(double psi, const HydraulicParams& p) {
  if (psi >= 0.0) return 0.0;
  return std::pow(p.alpha_vg * -psi, p.n_vg);
}

}  // namespace

double water_content(double psi, const HydraulicParams& p) {
  if (psi >= 0.0) return p.theta_s;
  const double an = scaled_suction_pow_n(psi, p);
  const double se = std::exp(-p.m_vg() * std::log1p(an));
  return p.theta_r + (p.theta_s - p.theta_r) * se;
}

double hydraulic_conductivity(double psi, const HydraulicParams& p) {
  if (psi >= 0.0) return p.Ks;
  const double m = p.m_vg();
  const double an = scaled_suction_pow_n(psi, p);
  const double log1p_an = std::log1p(an);
  const double se = std::exp(-m * log1p_an);
  // 1 - (1 - Se^{1/m})^m with Se^{1/m} = 1 / (1 + an), written to avoid cancellation.
  const double log_ratio = (an > 0.0) ? std::log(an) - log1p_an : -std::numeric_limits<double>::infinity();
  const double bracket = -std::expm1(m * log_ratio);
  return p.Ks * std::sqrt(se) * bracket * bracket;
}

double capillary_capacity(double psi, const HydraulicParams& p) {
  if (psi >= 0.0) return 0.0;
  const double m = p.m_vg();
  const double a = p.alpha_vg * -psi;
  const double an = std::pow(a, p.n_vg);
  return (p.theta_s - p.theta_r) * p.alpha_vg * m * p.n_vg * std::pow(a, p.n_vg - 1.0) *
         std::exp(-(m + 1.0) * std::log1p(an));
}

double feddes_stress(double psi, const FeddesParams& f) {
  if (psi >= f.psi_anaer || psi <= f.psi_wilt) return 0.0;
  if (psi > f.psi_opt_hi) return (f.psi_anaer - psi) / (f.psi_anaer - f.psi_opt_hi);
  if (psi >= f.psi_opt_lo) return 1.0;
  return (psi - f.psi_wilt) / (f.psi_opt_lo - f.psi_wilt);
}

double sink_term(double psi, const DailyInput& input, const FeddesParams& f, double z) {
  if (z > f.root_depth || z < 0.0) return 0.0;
  return feddes_stress(psi, f) * input.kc * input.et0 / f.root_depth;
}

// --- column geometry --------------------------------------------------------

SoilColumn SoilColumn::uniform(HydraulicParams params, double depth, int nodes, FeddesParams feddes) {
  SoilColumn c;
  c.depth = depth;
  c.params = std::move(params);
  c.feddes = feddes;
  c.node_depths.resize(static_cast<size_t>(std::max(nodes, 0)));
  for (int k = 0; k < nodes; ++k) c.node_depths[k] = (k + 1) * depth / nodes;
  if (nodes > 0) c.node_depths.back() = depth;
  c.validate();
  return c;
}

void SoilColumn::validate() const {
  params.validate();
  feddes.validate();
  if (nodes() < 3) throw ConfigError("soil column needs at least 3 nodes");
  if (node_depths.front() < 0.0) throw ConfigError("soil column: node depths must be >= 0");
  for (int k = 1; k < nodes(); ++k)
    if (!(node_depths[k] > node_depths[k - 1]))
      throw ConfigError("soil column: node depths must be strictly increasing");
  if (std::abs(node_depths.back() - depth) > 1e-9 * depth)
    throw ConfigError("soil column: last node must sit at the column depth");
}

std::vector<double> SoilColumn::cell_lengths() const {
  const int n = nodes();
  std::vector<double> len(n);
  for (int k = 0; k < n; ++k) {
    const double top = (k == 0) ? 0.0 : 0.5 * (node_depths[k - 1] + node_depths[k]);
    const double bot = (k == n - 1) ? depth : 0.5 * (node_depths[k] + node_depths[k + 1]);
    len[k] = bot - top;
  }
  return len;
}

std::vector<double> SoilColumn::root_lengths() const {
  const int n = nodes();
  std::vector<double> len(n);
  const double zr = feddes.root_depth;
  for (int k = 0; k < n; ++k) {
    const double top = (k == 0) ? 0.0 : 0.5 * (node_depths[k - 1] + node_depths[k]);
    const double bot = (k == n - 1) ? depth : 0.5 * (node_depths[k] + node_depths[k + 1]);
    len[k] = std::max(0.0, std::min(bot, zr) - top);
  }
  return len;
}

std::optional<int> SoilColumn::node_at(double sensor_depth, double tol) const {
  for (int k = 0; k < nodes(); ++k)
    if (std::abs(node_depths[k] - sensor_depth) <= tol * std::max(1.0, depth)) return k;
  return std::nullopt;
}

double column_storage(const SoilColumn& column, const std::vector<double>& psi) {
  const auto len = column.cell_lengths();
  double s = 0.0;
  for (size_t k = 0; k < psi.size(); ++k) s += len[k] * water_content(psi[k], column.params);
  return s;
}

double WaterBalance::relative_error() const {
  const double scale = std::max({std::abs(inflow), std::abs(drainage), std::abs(uptake),
                                 std::abs(storage_end - storage_start), 1e-12});
  return std::abs(residual()) / scale;
}

WaterBalance& WaterBalance::operator+=(const WaterBalance& o) {
  inflow += o.inflow;
  drainage += o.drainage;
  uptake += o.uptake;
  storage_end = o.storage_end;
  return *this;
}

std::vector<double> hydrostatic_profile(const SoilColumn& column, double psi_top) {
  std::vector<double> psi(column.nodes());
  for (int k = 0; k < column.nodes(); ++k)
    psi[k] = psi_top + (column.node_depths[k] - column.node_depths[0]);
  return psi;
}

// --- Richards solver --------------------------------------------------------

RichardsSolver::RichardsSolver(SoilColumn column, SolverSettings settings)
    : column_(std::move(column)), settings_(settings) {
  column_.validate();
  cells_ = column_.cell_lengths();
  root_cells_ = column_.root_lengths();
}

// One implicit-Euler sub-step in mixed (mass-conservative) form:
//   V_k [theta(psi_k) - theta(psi_k^old)] = dt [q_{k-1/2} - q_{k+1/2} - R_k S_k]
// with downward flux q = K (1 - dpsi/dz), interface conductivities taken as the
// arithmetic mean at the old level, and the sink evaluated at the old level.
bool RichardsSolver::substep(std::vector<double>& psi, const std::vector<double>& psi_old,
                             const DailyInput& input, double dt, WaterBalance& balance) const {
  const int n = column_.nodes();
  const auto& z = column_.node_depths;
  const auto& hp = column_.params;

  std::vector<double> k_old(n), cond(n - 1), sink(n);
  for (int k = 0; k < n; ++k) k_old[k] = hydraulic_conductivity(psi_old[k], hp);
  for (int k = 0; k < n - 1; ++k) cond[k] = 0.5 * (k_old[k] + k_old[k + 1]);

  const double demand = input.kc * input.et0 / column_.feddes.root_depth;
  double uptake = 0.0;
  for (int k = 0; k < n; ++k) {
    sink[k] = root_cells_[k] * feddes_stress(psi_old[k], column_.feddes) * demand;
    uptake += sink[k];
  }
  const double q_top = input.irrigation + input.rain;
  const double q_bot = (column_.bottom == BottomBoundary::free_drainage) ? k_old[n - 1] : 0.0;

  std::vector<double> theta_old(n);
  for (int k = 0; k < n; ++k) theta_old[k] = water_content(psi_old[k], hp);

  std::vector<double> res(n), diag(n), lower(n), upper(n), rhs(n);
  auto flux = [&](int k) {  // downward flux across the interface below node k
    return cond[k] * (1.0 - (psi[k + 1] - psi[k]) / (z[k + 1] - z[k]));
  };

  psi = psi_old;
  for (int it = 0; it < settings_.max_newton; ++it) {
    double norm = 0.0;
    for (int k = 0; k < n; ++k) {
      const double q_in = (k == 0) ? q_top : flux(k - 1);
      const double q_out = (k == n - 1) ? q_bot : flux(k);
      res[k] = cells_[k] * (water_content(psi[k], hp) - theta_old[k]) - dt * (q_in - q_out - sink[k]);
      norm = std::max(norm, std::abs(res[k]));
    }
    if (!std::isfinite(norm)) return false;
    if (norm < settings_.tol_newton) {
      balance.inflow += dt * q_top;
      balance.drainage += dt * q_bot;
      balance.uptake += dt * uptake;
      return true;
    }
    for (int k = 0; k < n; ++k) {
      double d = cells_[k] * capillary_capacity(psi[k], hp);
      lower[k] = upper[k] = 0.0;
      if (k > 0) {
        const double g = dt * cond[k - 1] / (z[k] - z[k - 1]);
        d += g;
        lower[k] = -g;
      }
      if (k < n - 1) {
        const double g = dt * cond[k] / (z[k + 1] - z[k]);
        d += g;
        upper[k] = -g;
      }
      diag[k] = d;
      rhs[k] = -res[k];
    }
    // Thomas algorithm.
    for (int k = 1; k < n; ++k) {
      const double w = lower[k] / diag[k - 1];
      diag[k] -= w * upper[k - 1];
      rhs[k] -= w * rhs[k - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (int k = n - 2; k >= 0; --k) rhs[k] = (rhs[k] - upper[k] * rhs[k + 1]) / diag[k];
    for (int k = 0; k < n; ++k) {
      if (!std::isfinite(rhs[k])) return false;
      psi[k] += rhs[k];
    }
  }
  return false;
}

ColumnState RichardsSolver::step(const ColumnState& state, const DailyInput& input, double dt,
                                 WaterBalance* balance) const {
  if (!(dt > 0.0)) throw ConfigError("step: dt must be > 0");
  if (static_cast<int>(state.psi.size()) != column_.nodes())
    throw ShapeMismatch("step: state length does not match the column");

  WaterBalance local;
  local.storage_start = column_storage(column_, state.psi);

  std::vector<double> psi = state.psi, trial(psi.size());
  double remaining = dt;
  double h = std::min(dt, settings_.dt_max);
  // Sub-steps of equal size unless halving is forced.
  const int nominal = static_cast<int>(std::ceil(dt / settings_.dt_max - 1e-9));
  h = dt / std::max(nominal, 1);
  while (remaining > 1e-15 * dt) {
    const double hh = std::min(h, remaining);
    WaterBalance sub;
    if (substep(trial, psi, input, hh, sub)) {
      psi.swap(trial);
      local.inflow += sub.inflow;
      local.drainage += sub.drainage;
      local.uptake += sub.uptake;
      remaining -= hh;
      if (remaining < 1e-12 * dt) remaining = 0.0;
    } else {
      h = 0.5 * hh;
      if (h < settings_.dt_min)
        throw NonConvergence("Richards solver failed to converge at t = " + std::to_string(state.t));
    }
  }
  local.storage_end = column_storage(column_, psi);
  if (balance) *balance = local;
  return ColumnState{std::move(psi), state.t + dt};
}

// --- simulation -------------------------------------------------------------

Trajectory simulate(const RichardsSolver& solver, const std::vector<double>& psi0,
                    const std::vector<DailyInput>& inputs, const SimulationOptions& options) {
  if (inputs.empty()) throw ConfigError("simulate: inputs must be non-empty");
  if (!(options.record_dt > 0.0 && options.record_dt <= 1.0))
    throw ConfigError("simulate: record_dt must lie in (0, 1] day");
  const double per_day = 1.0 / options.record_dt;
  const int samples_per_day = static_cast<int>(std::lround(per_day));
  if (std::abs(per_day - samples_per_day) > 1e-9 * per_day)
    throw ConfigError("simulate: record_dt must divide one day");
  if (!(options.noise_std >= 0.0)) throw ConfigError("simulate: noise_std must be >= 0");

  const SoilColumn& column = solver.column();
  std::vector<int> cols;
  Trajectory traj;
  if (options.record_depths.empty()) {
    for (int k = 0; k < column.nodes(); ++k) cols.push_back(k);
  } else {
    for (double d : options.record_depths) {
      auto idx = column.node_at(d);
      if (!idx) throw DepthNotOnGrid("simulate: record depth " + std::to_string(d) + " mm is not a node");
      cols.push_back(*idx);
    }
  }
  for (int c : cols) traj.depths.push_back(column.node_depths[c]);

  const size_t total = inputs.size() * samples_per_day + 1;
  traj.times.reserve(total);
  traj.heads.reserve(total);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = options.noise_std > 0.0;

  ColumnState state{psi0, 0.0};
  auto record = [&](const ColumnState& s) {
    std::vector<double> row(cols.size());
    for (size_t i = 0; i < cols.size(); ++i) row[i] = s.psi[cols[i]];
    if (noisy && options.noise_mode == NoiseMode::measurement)
      for (double& v : row) v += options.noise_std * noise(rng);
    traj.times.push_back(s.t);
    traj.heads.push_back(std::move(row));
  };

  traj.balance.storage_start = column_storage(column, psi0);
  traj.balance.storage_end = traj.balance.storage_start;
  record(state);
  for (size_t day = 0; day < inputs.size(); ++day) {
    inputs[day].validate();
    for (int s = 0; s < samples_per_day; ++s) {
      WaterBalance wb;
      try {
        state = solver.step(state, inputs[day], options.record_dt, &wb);
      } catch (const NonConvergence& e) {
        throw NonConvergence(e.what(), static_cast<int>(day));
      }
      state.t = static_cast<double>(day) + (s + 1) * options.record_dt;
      traj.balance.inflow += wb.inflow;
      traj.balance.drainage += wb.drainage;
      traj.balance.uptake += wb.uptake;
      if (noisy && options.noise_mode == NoiseMode::process)
        for (double& v : state.psi) v += options.noise_std * noise(rng);
      record(state);
    }
  }
  traj.balance.storage_end = column_storage(column, state.psi);
  return traj;
}

void Trajectory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "t_day";
  for (size_t i = 0; i < depths.size(); ++i) out << ",node_" << i;
  out << '\n' << std::setprecision(17);
  for (size_t s = 0; s < times.size(); ++s) {
    out << times[s];
    for (double v : heads[s]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace irrig

#include "irrig/rhc.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "irrig/errors.hpp"

namespace irrig {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int sensor_node(const PlantZone& z) {
  const auto k = z.column.node_at(z.sensor_depth);
  if (!k) throw DepthNotOnGrid("zone " + z.label + ": no node at sensor depth " + std::to_string(z.sensor_depth));
  return *k;
}

}  // namespace

void Scenario::validate() const {
  if (days < 1) throw ConfigError("scenario: days must be >= 1");
  if (horizon < 1) throw ConfigError("scenario: horizon must be >= 1");
  if (zones.empty()) throw ConfigError("scenario: no zones");
  if (static_cast<int>(weather.days()) < days + horizon)
    throw ForecastExhausted("scenario: weather covers " + std::to_string(weather.days()) + " days, need " +
                            std::to_string(days + horizon));
  if (!(noise_std >= 0.0)) throw ConfigError("scenario: noise_std must be >= 0");
  for (const auto& z : zones) {
    if (!z.model) throw ConfigError("scenario: zone " + z.label + " has no model");
    z.column.validate();
    if (static_cast<int>(z.psi0.size()) != z.column.nodes())
      throw ShapeMismatch("scenario: zone " + z.label + " initial profile does not match the column");
    sensor_node(z);
    if (static_cast<int>(z.past_heads.size()) != z.model->lag())
      throw ShapeMismatch("scenario: zone " + z.label + " needs " + std::to_string(z.model->lag()) + " past heads");
    z.zone.validate();
    if (!(z.u_lo > 0.0 && z.u_lo <= z.u_hi)) throw ConfigError("scenario: need 0 < u_lo <= u_hi");
  }
  if (mode == SpatialMode::large_scale && horizon % static_cast<int>(zones.size()) != 0)
    throw IndivisibleHorizon("scenario: horizon is not a multiple of the zone count");
  sigmoid.validate();
}

std::string Scenario::fingerprint() const {
  std::ostringstream o;
  o << std::setprecision(17) << name << '|' << days << '|' << horizon << '|' << static_cast<int>(mode) << '|'
    << static_cast<int>(solver) << '|' << r_c << '|' << r_u << '|' << noise_std << '|' << seed << '|';
  for (size_t d = 0; d < weather.days(); ++d) o << weather.rain[d] << ',' << weather.et0[d] << ';';
  o << sigmoid.beta0 << ',' << sigmoid.tau << ',' << sigmoid.zeta << ',' << sigmoid.r_min << ',' << sigmoid.r_max
    << ',' << sigmoid.max_iterations << ',' << sigmoid.polish << ',' << sigmoid.inner.max_iterations << ','
    << sigmoid.inner.tolerance << ',' << sigmoid.inner.multistarts << '|';
  for (const auto& z : zones) {
    o << z.label << ',' << z.column.params.name << ',' << z.column.depth << ',' << z.column.nodes() << ','
      << z.sensor_depth << ',' << z.zone.nu_lo << ',' << z.zone.nu_hi << ',' << z.zone.q_lo << ',' << z.zone.q_hi
      << ',' << z.u_lo << ',' << z.u_hi << ',' << z.kc << ',' << z.x0 << ',' << z.model->lag() << ':';
    for (double v : z.past_heads) o << v << ',';
    for (double v : z.psi0) o << v << ',';
    o << '|';
  }
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : o.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> uniform_profile(const SoilColumn& column, double x0) {
  return std::vector<double>(column.nodes(), x0);
}

int ClosedLoopTrace::events() const {
  int n = 0;
  for (const auto& d : days) n += d.event;
  return n;
}

double stage_cost(const Scenario& s, const DayRecord& r) {
  double c = r.event ? s.r_c : 0.0;
  for (size_t j = 0; j < s.zones.size(); ++j) c += s.zones[j].zone.penalty(r.realized[j]) + s.r_u * r.applied_u[j];
  return c;
}

namespace {

SpatialProblem problem_at(const Scenario& s, int d, const std::vector<History>& hist, int running) {
  SpatialProblem p;
  p.day = d;
  p.horizon = s.horizon;
  p.r_c = s.r_c;
  p.r_u = s.r_u;
  p.mode = s.mode;
  p.cycle_anchor = 0;
  p.running_cycle = running;
  p.rain.assign(s.weather.rain.begin() + d, s.weather.rain.begin() + d + s.horizon);
  p.et0.assign(s.weather.et0.begin() + d, s.weather.et0.begin() + d + s.horizon);
  for (size_t j = 0; j < s.zones.size(); ++j) {
    const auto& z = s.zones[j];
    ManagementZone m;
    m.index = static_cast<int>(j) + 1;
    m.label = z.label;
    m.model = z.model;
    m.zone = z.zone;
    m.u_lo = z.u_lo;
    m.u_hi = z.u_hi;
    m.history = hist[j];
    m.kc.assign(s.horizon, z.kc);
    p.zones.push_back(std::move(m));
  }
  return p;
}

std::vector<History> initial_histories(const Scenario& s) {
  std::vector<History> h;
  for (const auto& z : s.zones) {
    History hz;
    for (double x : z.past_heads) hz.past.push_back({x, 0.0, 0.0, z.kc, s.weather.et0[0]});
    hz.current_head = z.x0;
    h.push_back(std::move(hz));
  }
  return h;
}

}  // namespace

SpatialProblem first_problem(const Scenario& s) {
  s.validate();
  return problem_at(s, 0, initial_histories(s), 0);
}

ClosedLoopTrace run_closed_loop(const Scenario& s) {
  s.validate();
  const size_t m = s.zones.size();
  std::vector<RichardsSolver> plants;
  std::vector<ColumnState> state;
  std::vector<int> node;
  for (const auto& z : s.zones) {
    plants.emplace_back(z.column, s.plant);
    state.push_back({z.psi0, 0.0});
    node.push_back(sensor_node(z));
  }
  auto hist = initial_histories(s);
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ClosedLoopTrace trace;
  trace.scenario = s.name;
  for (const auto& z : s.zones) trace.zones.push_back(z.label);
  int running = 0;
  for (int d = 0; d < s.days; ++d) {
    DayRecord r;
    r.day = d + 1;
    for (size_t j = 0; j < m; ++j) {
      // day 1 starts from the scenario's stated head; afterwards the sensor is read
      double x = d == 0 ? s.zones[j].x0 : state[j].psi[node[j]];
      if (s.noise_std > 0.0) x += s.noise_std * noise(rng);
      r.measured.push_back(x);
      hist[j].current_head = x;
    }
    const auto p = problem_at(s, d, hist, running);
    const auto t0 = Clock::now();
    const auto sol = solve_spatial(p, s.solver, s.sigmoid);
    r.solve_seconds = seconds_since(t0);
    r.converged = sol.converged;
    r.solved_c = sol.schedule.c;
    r.planned_cost = sol.schedule.cost;
    for (size_t j = 0; j < m; ++j) {
      const auto& z = sol.schedule.zones[j];
      r.zone_c.push_back(z.c);
      r.solved_u.push_back(z.u);
      r.predicted.push_back(z.x[0]);
      r.applied_c.push_back(z.c[0]);
      r.applied_u.push_back(z.u[0]);
    }
    r.event = s.mode == SpatialMode::small_scale ? sol.schedule.c[0] == 1
                                                 : (p.phase() == 0 && sol.schedule.c[0] == 1);
    if (s.mode == SpatialMode::large_scale) running = (d + 1) % static_cast<int>(m) == 0 ? 0 : sol.schedule.c[0];
    const DailyInput in_day{0.0, s.weather.rain[d], s.weather.et0[d], 0.0};
    for (size_t j = 0; j < m; ++j) {
      DailyInput in = in_day;
      in.irrigation = r.applied_u[j];
      in.kc = s.zones[j].kc;
      try {
        state[j] = plants[j].step(state[j], in, 1.0);
      } catch (const NonConvergence& e) {
        throw NonConvergence(std::string("plant ") + s.zones[j].label + ": " + e.what(), d + 1);
      }
      r.realized.push_back(state[j].psi[node[j]]);
      if (!hist[j].past.empty()) {
        hist[j].past.erase(hist[j].past.begin());
        hist[j].past.push_back({r.measured[j], in.irrigation, in.rain, in.kc, in.et0});
      }
    }
    r.stage_cost = stage_cost(s, r);
    trace.total_cost += r.stage_cost;
    for (double u : r.applied_u) trace.total_volume += u;
    trace.solve_seconds += r.solve_seconds;
    trace.days.push_back(std::move(r));
  }
  return trace;
}

void ClosedLoopTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "day,zone,measured_mm,c,u_mm,predicted_mm,realized_mm,event,stage_cost\n" << std::setprecision(10);
  for (const auto& d : days)
    for (size_t j = 0; j < zones.size(); ++j)
      out << d.day << ',' << zones[j] << ',' << d.measured[j] << ',' << d.applied_c[j] << ',' << d.applied_u[j]
          << ',' << d.predicted[j] << ',' << d.realized[j] << ',' << d.event << ',' << d.stage_cost << '\n';
}

namespace {

nlohmann::json trace_json(const ClosedLoopTrace& t) {
  nlohmann::json j;
  j["scenario"] = t.scenario;
  j["zones"] = t.zones;
  j["total_cost"] = t.total_cost;
  j["total_volume_mm"] = t.total_volume;
  j["events"] = t.events();
  auto& days = j["days"] = nlohmann::json::array();
  for (const auto& d : t.days)
    days.push_back({{"day", d.day},
                    {"measured", d.measured},
                    {"solved_c", d.solved_c},
                    {"solved_u", d.solved_u},
                    {"applied_u", d.applied_u},
                    {"realized", d.realized},
                    {"event", d.event},
                    {"stage_cost", d.stage_cost},
                    {"planned_cost", d.planned_cost},
                    {"converged", d.converged}});
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace

void ClosedLoopTrace::write_json(const std::string& path) const { write_json_file(path, trace_json(*this)); }

OpenLoopComparison compare_open_loop(const Scenario& s) {
  const auto p = first_problem(s);
  OpenLoopComparison c;
  auto t0 = Clock::now();
  const auto exact = solve_spatial(p, SolverKind::exact, s.sigmoid);
  c.exact_seconds = seconds_since(t0);
  t0 = Clock::now();
  const auto hom = solve_spatial(p, SolverKind::homotopy, s.sigmoid);
  c.homotopy_seconds = seconds_since(t0);
  c.exact_cost = exact.schedule.cost;
  c.homotopy_cost = hom.schedule.cost;
  c.same_decisions = exact.schedule.c == hom.schedule.c;
  c.converged = hom.converged;
  c.homotopy_steps = static_cast<int>(hom.trace.size());
  return c;
}

Comparison compare_exact_vs_homotopy(const Scenario& s) {
  Comparison c;
  c.open_loop = compare_open_loop(s);
  Scenario e = s, h = s;
  e.solver = SolverKind::exact;
  h.solver = SolverKind::homotopy;
  c.exact = run_closed_loop(e);
  c.homotopy = run_closed_loop(h);
  for (size_t d = 0; d < c.exact.days.size(); ++d)
    c.agreeing_days += c.exact.days[d].applied_c == c.homotopy.days[d].applied_c;
  return c;
}

void Comparison::write_json(const std::string& path) const {
  nlohmann::json j;
  j["open_loop"] = {{"exact_seconds", open_loop.exact_seconds},
                    {"homotopy_seconds", open_loop.homotopy_seconds},
                    {"exact_cost", open_loop.exact_cost},
                    {"homotopy_cost", open_loop.homotopy_cost},
                    {"same_decisions", open_loop.same_decisions},
                    {"converged", open_loop.converged},
                    {"homotopy_steps", open_loop.homotopy_steps}};
  j["closed_loop"] = {{"exact_cost", exact.total_cost},
                      {"homotopy_cost", homotopy.total_cost},
                      {"exact_volume_mm", exact.total_volume},
                      {"homotopy_volume_mm", homotopy.total_volume},
                      {"exact_events", exact.events()},
                      {"homotopy_events", homotopy.events()},
                      {"exact_seconds", exact.solve_seconds},
                      {"homotopy_seconds", homotopy.solve_seconds},
                      {"agreeing_days", agreeing_days},
                      {"days", exact.days.size()}};
  write_json_file(path, j);
}

}  // namespace irrig

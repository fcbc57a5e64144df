// Acceptance report: one PASS/FAIL line per criterion.
// usage: acceptance <model dir> <output dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "irrig/datagen.hpp"
#include "irrig/hydrology.hpp"
#include "irrig/lstm.hpp"
#include "irrig/presets.hpp"
#include "irrig/rhc.hpp"
#include "irrig/scheduler.hpp"
#include "irrig/spatial.hpp"
#include "constitutive_golden.hpp"

namespace fs = std::filesystem;
using namespace irrig;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("criterion %2d %s  %s: %s\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
}

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

// --- 1 ------------------------------------------------------------------------

void hydrology_correctness() {
  const auto t0 = Clock::now();
  auto c = surrogate_campaign("loam");
  c.sim_days = 100;
  c.noise_std = 0.0;
  const auto run = run_campaign(c);
  const double mass = run.trajectory.balance.relative_error();

  auto col = SoilColumn::uniform(soil_by_name("loam"));
  col.bottom = BottomBoundary::no_flux;
  const RichardsSolver solver(col);
  const auto psi0 = hydrostatic_profile(col, -800.0);
  ColumnState s{psi0, 0.0};
  for (int i = 0; i < 10; ++i) s = solver.step(s, DailyInput{}, 1.0);
  double drift = 0.0;
  for (int k = 0; k < col.nodes(); ++k) drift = std::max(drift, std::abs(s.psi[k] - psi0[k]));
  const double sec = since(t0);
  report(1, mass < 1e-5 && drift < 1e-6 && sec < 30.0, "hydrology correctness",
         fmt("mass-balance error %.2e (< 1e-5), hydrostatic drift %.2e mm (< 1e-6), %.1f s (< 30)", mass, drift,
             sec));
}

// --- 2 ------------------------------------------------------------------------

void constitutive_golden() {
  double worst = 0.0;
  for (const auto& g : kGolden) {
    const auto p = soil_by_name(g.soil);
    worst = std::max(worst, std::abs(water_content(g.psi, p) / g.theta - 1.0));
    worst = std::max(worst, std::abs(hydraulic_conductivity(g.psi, p) / g.k - 1.0));
  }
  report(2, worst < 1e-8, "constitutive golden values",
         fmt("%zu soil/head pairs, worst relative error %.2e (< 1e-8)", std::size(kGolden), worst));
}

// --- 3 ------------------------------------------------------------------------

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

void lstm_gradients() {
  const auto t0 = Clock::now();
  Normalization norm;
  for (int c = 0; c < kChannels; ++c) {
    norm.min[c] = 0.0;
    norm.max[c] = 1.0;
  }
  norm.min[0] = -900.0;
  norm.max[0] = -100.0;
  norm.max[1] = 16.0;
  auto model = LstmModel::initialize(1, 4, 4, norm, 11);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::vector<Row>> windows(10, std::vector<Row>(5));
  std::vector<double> targets(10);
  for (size_t s = 0; s < windows.size(); ++s) {
    for (auto& r : windows[s])
      for (double& v : r) v = u01(rng);
    targets[s] = u01(rng);
  }
  auto loss = [&](LstmGradients* g) {
    auto local = LstmGradients::zeros_like(model);
    double l = 0.0;
    for (size_t s = 0; s < windows.size(); ++s) l += loss_and_gradient(model, windows[s], targets[s], local);
    if (g) *g = local;
    return l;
  };
  LstmGradients grads;
  loss(&grads);
  const auto pp = parameter_pointers(model);
  const auto gp = parameter_pointers(grads);
  double worst_param = 0.0;
  for (size_t p = 0; p < pp.size(); ++p) {
    const double keep = *pp[p];
    *pp[p] = keep + 1e-5;
    const double lp = loss(nullptr);
    *pp[p] = keep - 1e-5;
    const double lm = loss(nullptr);
    *pp[p] = keep;
    worst_param = std::max(worst_param, rel((lp - lm) / 2e-5, *gp[p]));
  }

  History h;
  for (int k = 0; k < 4; ++k) h.past.push_back({-700.0 + 20.0 * k, 3.0 * u01(rng), u01(rng), 0.6, 2.0});
  h.current_head = -640.0;
  std::vector<StepInputs> f(6);
  for (auto& s : f) s = {8.0 * u01(rng), u01(rng), 0.6, 1.5 + u01(rng)};
  const auto J = input_gradient(model, h, f);
  double worst_input = 0.0;
  for (size_t k = 0; k < f.size(); ++k) {
    auto fp = f, fm = f;
    fp[k].irrigation += 1e-4;
    fm[k].irrigation -= 1e-4;
    const auto xp = predict_recursive(model, h, fp), xm = predict_recursive(model, h, fm);
    for (size_t j = k; j < f.size(); ++j) worst_input = std::max(worst_input, rel((xp[j] - xm[j]) / 2e-4, J[j][k]));
  }
  const double sec = since(t0);
  report(3, worst_param < 1e-4 && worst_input < 1e-4 && sec < 10.0, "LSTM gradient check",
         fmt("1x4 model, parameter %.2e, input %.2e (< 1e-4), %.1f s (< 10)", worst_param, worst_input, sec));
}

// --- 4 ------------------------------------------------------------------------

void surrogate_fidelity() {
  const auto t0 = Clock::now();
  CampaignConfig c;  // desk defaults: loamy sand, 1200 days, seeded
  const auto noisy = run_campaign(c);
  CampaignConfig clean_cfg = c;
  clean_cfg.noise_std = 0.0;
  const auto clean_run = run_campaign(clean_cfg);
  const auto rec = to_daily_root_zone(noisy.trajectory, noisy.inputs, c.sensor_depth);
  const auto clean = to_daily_root_zone(clean_run.trajectory, clean_run.inputs, c.sensor_depth);
  const auto ds = build_supervised(rec, 4);
  const auto trained = train(ds, surrogate_training());
  const auto& m = trained.model;

  // noise-free plant heads are the truth; the targets carry 5 mm measurement noise
  const auto ends = ds.window_ends(Split::test);
  double lo = 1e300, hi = -1e300, se = 0.0, se_noisy = 0.0;
  for (int e : ends) {
    const double y = predict_one_step(m, ds.normalized_window(e));
    const double truth = clean[e + 1].x;
    lo = std::min(lo, truth);
    hi = std::max(hi, truth);
    se += (y - truth) * (y - truth);
    se_noisy += (y - ds.targets[e]) * (y - ds.targets[e]);
  }
  const double range = hi - lo, n = static_cast<double>(ends.size());
  const double one_step = 100.0 * std::sqrt(se / n) / range;

  const int start = ds.bounds[2];
  History h;
  for (int k = 0; k < 4; ++k) h.past.push_back(ds.rows[start + k]);
  h.current_head = ds.rows[start + 4][0];
  const int N = std::min(150, static_cast<int>(ds.rows.size()) - start - 4);
  std::vector<StepInputs> f;
  for (int k = 0; k < N; ++k) {
    const auto& r = ds.rows[start + 4 + k];
    f.push_back({r[1], r[2], r[3], r[4]});
  }
  const auto x = predict_recursive(m, h, f);
  double sr = 0.0;
  bool bounded = true;
  for (int k = 0; k < N; ++k) {
    const double truth = clean[start + 5 + k].x;
    sr += (x[k] - truth) * (x[k] - truth);
    bounded = bounded && std::isfinite(x[k]) && x[k] > lo - range && x[k] < hi + range;
  }
  const double recursive = 100.0 * std::sqrt(sr / N) / range;
  const double sec = since(t0);
  report(4, one_step < 2.0 && recursive < 6.0 && bounded && sec < 600.0, "surrogate fidelity",
         fmt("test range %.1f mm, one-step RMSE %.2f%% (< 2), %d-day recursive RMSE %.2f%% (< 6)%s, "
             "one-step vs noisy targets %.2f%%, %.0f s (< 600)",
             range, one_step, N, recursive, bounded ? "" : " diverged", 100.0 * std::sqrt(se_noisy / n) / range, sec));
}

// --- 5 ------------------------------------------------------------------------

void exact_oracle(const ModelSource& models) {
  const auto t0 = Clock::now();
  const auto model = models("loam");
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScheduleProblem p;
    p.model = model;
    p.horizon = 4;
    p.zone = {-820.0, -690.0, 9000.0, 9000.0};
    const double x0 = -860.0 + 200.0 * u(g);
    for (int k = 0; k < 4; ++k) p.history.past.push_back({x0 + 30.0 * (u(g) - 0.5), 0.0, 0.0, 0.5, 1.04 + 1.96 * u(g)});
    p.history.current_head = x0;
    for (int k = 0; k < 4; ++k) p.forecast.push_back({u(g) < 0.2 ? 1.04 + 6.0 * u(g) : 0.0, 0.5, 1.04 + 1.96 * u(g)});
    const auto bb = solve_mixed_integer(p);
    double best = 1e300;
    for (int mask = 0; mask < 16; ++mask) {
      std::vector<int> c(4);
      for (int k = 0; k < 4; ++k) c[k] = (mask >> k) & 1;
      best = std::min(best, solve_continuous(p, c).schedule.cost);
    }
    worst = std::max(worst, std::abs(bb.schedule.cost - best) / std::max(1.0, std::abs(best)));
  }
  const double sec = since(t0);
  report(5, worst <= 1e-9 && sec < 120.0, "exact solver vs enumeration",
         fmt("20 problems, N=4, worst relative gap %.1e (<= 1e-9), %.1f s (< 120)", worst, sec));
}

// --- 6 ------------------------------------------------------------------------

void homotopy_quality(const ModelSource& models) {
  const auto t0 = Clock::now();
  auto s = make_preset("case1a", models);
  const auto full = compare_open_loop(s);
  s.horizon = 6;
  const auto six = compare_open_loop(s);
  const double ratio = full.exact_seconds / full.homotopy_seconds;
  const double quality = six.homotopy_cost / six.exact_cost;
  const double sec = since(t0);
  report(6, full.converged && full.homotopy_steps <= 10 && quality <= 1.05 && ratio >= 5.0 && sec < 900.0,
         "homotopy quality",
         fmt("N=14: %s in %d beta-steps, homotopy %.2f s vs exact %.2f s (ratio %.1f >= 5), costs %.2f vs %.2f; "
             "N=6: cost ratio %.4f (<= 1.05); %.0f s (< 900)",
             full.converged ? "converged" : "not converged", full.homotopy_steps, full.homotopy_seconds,
             full.exact_seconds, ratio, full.homotopy_cost, full.exact_cost, quality, sec));
}

// --- 7 to 11 -------------------------------------------------------------------

struct Run {
  ClosedLoopTrace trace;
  double seconds = 0.0;
  std::string csv, json;
};

Run run_preset(const std::string& name, const ModelSource& models, const fs::path& dir) {
  fs::create_directories(dir);
  const auto s = make_preset(name, models);
  Run r;
  const auto t0 = Clock::now();
  r.trace = run_closed_loop(s);
  r.seconds = since(t0);
  r.csv = (dir / (name + ".csv")).string();
  r.json = (dir / (name + ".json")).string();
  r.trace.write_csv(r.csv);
  r.trace.write_json(r.json);
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void zone_maintenance(const Run& r) {
  const double lo = -820.0 - 50.0, hi = -690.0 + 50.0;
  int days = 0, inside = 0;
  for (const auto& d : r.trace.days) {
    if (d.day <= 3) continue;
    ++days;
    inside += d.measured[0] >= lo && d.measured[0] <= hi;
  }
  const double share = static_cast<double>(inside) / days;
  const int events = r.trace.events();
  report(7, share >= 0.9 && events >= 2 && events <= 6 && r.seconds < 1200.0, "closed-loop zone maintenance",
         fmt("%d/%d days after day 3 within [%.0f, %.0f] mm (>= 90%%), %d events (2..6), %.0f s (< 1200)", inside,
             days, lo, hi, events, r.seconds));
}

void rain_response(const Run& dry, const Run& wet) {
  report(8, wet.trace.total_volume < dry.trace.total_volume, "rain response",
         fmt("volume with rain %.2f mm < without %.2f mm (%d vs %d events)", wet.trace.total_volume,
             dry.trace.total_volume, wet.trace.events(), dry.trace.events()));
}

bool amounts_feasible(const DayRecord& d, const Scenario& s) {
  for (size_t j = 0; j < s.zones.size(); ++j)
    for (size_t k = 0; k < d.solved_u[j].size(); ++k) {
      const double u = d.solved_u[j][k];
      if (d.zone_c[j][k] == 0 ? u != 0.0 : (u < s.zones[j].u_lo || u > s.zones[j].u_hi)) return false;
    }
  return true;
}

void small_scale(const Run& r, const Scenario& s) {
  int shared = 0, feasible = 0;
  for (const auto& d : r.trace.days) {
    bool same = true;
    for (size_t j = 1; j < d.zone_c.size(); ++j) same = same && d.zone_c[j] == d.zone_c[0];
    shared += same;
    bool applied = true;
    for (size_t j = 0; j < d.applied_u.size(); ++j)
      applied = applied && d.applied_c[j] == d.zone_c[j][0] && d.applied_u[j] == d.solved_u[j][0];
    feasible += amounts_feasible(d, s) && applied;
  }
  const int n = static_cast<int>(r.trace.days.size());
  report(9, shared == n && feasible == n, "small-scale spatial",
         fmt("%zu zones, shared event days on %d/%d days, exact constraints on %d/%d days, %d events", s.zones.size(),
             shared, n, feasible, n, r.trace.events()));
}

void large_scale(const Run& r, const Scenario& s) {
  const int m = static_cast<int>(s.zones.size());
  bool pattern = true, feasible = true;
  for (const auto& d : r.trace.days) {
    feasible = feasible && amounts_feasible(d, s);
    for (int j = 0; j < m; ++j)
      for (size_t k = 0; k < d.zone_c[j].size(); ++k)
        if (d.zone_c[j][k] == 1 && (d.day - 1 + static_cast<int>(k)) % m != j) pattern = false;
  }
  // cycle n covers days m*n + 1 .. m*n + m; active when any zone is irrigated
  const int cycles = static_cast<int>(r.trace.days.size()) / m;
  int active = 0;
  bool contiguous = true;
  for (int n = 0; n < cycles; ++n) {
    int on = 0;
    for (int j = 0; j < m; ++j) on += r.trace.days[m * n + j].applied_c[j];
    if (on > 0) ++active;
    if (on != 0 && on != m) contiguous = false;
  }
  report(10, pattern && feasible && contiguous && active >= 2 && active <= 4, "large-scale spatial",
         fmt("stride-%d pattern %s, constraints %s, cycles %s, %d active cycles (2..4)", m, pattern ? "kept" : "broken",
             feasible ? "exact" : "violated", contiguous ? "contiguous" : "split", active));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <model dir> <output dir>\n");
    return 2;
  }
  const std::string model_dir = argv[1];
  const fs::path out = argv[2];
  const auto t0 = Clock::now();
  const auto models = cached_models(model_dir);
  try {
    hydrology_correctness();
    constitutive_golden();
    lstm_gradients();
    surrogate_fidelity();
    for (const auto& soil : soil_names()) cached_surrogate(soil, model_dir);
    exact_oracle(models);
    homotopy_quality(models);

    std::vector<Run> first;
    for (const auto& name : preset_names()) first.push_back(run_preset(name, models, out / "run1"));
    zone_maintenance(first[0]);
    rain_response(first[0], first[1]);
    small_scale(first[2], make_preset("case2", models));
    large_scale(first[3], make_preset("case3", models));

    int identical = 0;
    std::string differing;
    const auto names = preset_names();
    for (size_t i = 0; i < names.size(); ++i) {
      const auto again = run_preset(names[i], models, out / "run2");
      const bool same = slurp(first[i].csv) == slurp(again.csv) && slurp(first[i].json) == slurp(again.json);
      identical += same;
      if (!same) differing += " " + names[i];
    }
    report(11, identical == static_cast<int>(names.size()), "determinism",
           fmt("%d/%zu presets byte-identical on rerun%s", identical, names.size(),
               differing.empty() ? "" : (", differing:" + differing).c_str()));
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 11 criteria passed, %.0f s\n", 11 - failures, since(t0));
  return failures == 0 ? 0 : 1;
}

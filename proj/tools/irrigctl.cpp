// irrigctl: data campaigns, surrogate training, open-loop scheduling,
// closed-loop runs and solver comparisons.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "irrig/config.hpp"
#include "irrig/errors.hpp"

namespace fs = std::filesystem;
using namespace irrig;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::string out = "out";
  std::string models = "models";
  long long seed = -1;
  std::string mode;
  bool compare = false;
  bool strict = false;
};

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char ch;
  while (in.get(ch)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), o_(o), t0_(clock::now()) {
    fs::create_directories(o.out);
    if (!o.config.empty()) inputs_.push_back(o.config);
  }

  Config config() const {
    Config c = o_.config.empty() ? Config() : Config::load(o_.config);
    if (!o_.preset.empty()) c.set("preset", o_.preset);
    for (const auto& kv : o_.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o_.seed >= 0) c.set("seed", std::to_string(o_.seed));
    return c;
  }

  std::string path(const std::string& name) {
    const auto p = (fs::path(o_.out) / name).string();
    outputs_.push_back(p);
    return p;
  }
  void input(const std::string& p) { inputs_.push_back(p); }

  void finish(long long seed) const {
    nlohmann::json m;
    m["command"] = command_;
    m["config"] = o_.config;
    m["preset"] = o_.preset;
    m["overrides"] = o_.sets;
    m["seed"] = seed;
    m["tool_version"] = kVersion;
    for (const auto& p : inputs_)
      if (fs::exists(p)) m["inputs"][p] = file_hash(p);
    for (const auto& p : outputs_) m["outputs"][fs::path(p).filename().string()] = file_hash(p);
    m["wall_seconds"] = std::chrono::duration<double>(clock::now() - t0_).count();
    std::ofstream((fs::path(o_.out) / "manifest.json").string()) << m.dump(1) << '\n';
  }

 private:
  using clock = std::chrono::steady_clock;
  std::string command_;
  Options o_;
  clock::time_point t0_;
  std::vector<std::string> inputs_, outputs_;
};

void write_daily(const std::string& path, const std::vector<DailyRecord>& rec) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "day,x_mm,irrigation_mm,rain_mm,et0_mm,kc\n" << std::setprecision(12);
  for (const auto& r : rec)
    out << r.day << ',' << r.x << ',' << r.irrigation << ',' << r.rain << ',' << r.et0 << ',' << r.kc << '\n';
}

int cmd_simulate(const Options& o) {
  Run run("simulate", o);
  const auto cfg = run.config();
  const auto c = campaign_from(cfg);
  cfg.reject_unused();
  const auto r = run_campaign(c);
  r.trajectory.write_csv(run.path("trajectory.csv"));
  write_daily(run.path("daily.csv"), to_daily_root_zone(r.trajectory, r.inputs, c.sensor_depth));
  run.finish(static_cast<long long>(c.seed));
  std::printf("simulated %d days of %s, mass balance error %.3g\n", c.sim_days, c.soil.c_str(),
              r.trajectory.balance.relative_error());
  return 0;
}

int cmd_gen_data(const Options& o) {
  Run run("gen-data", o);
  const auto cfg = run.config();
  const auto c = campaign_from(cfg);
  const int lag = cfg.integer("lag", 4);
  const SplitFractions f{cfg.num("split.train", 0.70), cfg.num("split.val", 0.15), cfg.num("split.test", 0.15)};
  cfg.reject_unused();
  const auto r = run_campaign(c);
  const auto rec = to_daily_root_zone(r.trajectory, r.inputs, c.sensor_depth);
  write_daily(run.path("daily.csv"), rec);
  const auto ds = build_supervised(rec, lag, f);
  ds.save(run.path("dataset.json"));
  run.finish(static_cast<long long>(c.seed));
  std::printf("dataset: %zu rows, lag %d\n", ds.rows.size(), lag);
  return 0;
}

int cmd_train(const Options& o) {
  Run run("train", o);
  const auto cfg = run.config();
  const auto t = training_from(cfg);
  SupervisedDataset ds;
  if (cfg.has("dataset")) {
    const auto p = cfg.str("dataset");
    if (!fs::exists(p)) throw ConfigError("dataset: file not found: " + p);
    run.input(p);
    ds = SupervisedDataset::load(p);
  } else {
    const auto c = campaign_from(cfg);
    const auto r = run_campaign(c);
    ds = build_supervised(to_daily_root_zone(r.trajectory, r.inputs, c.sensor_depth), cfg.integer("lag", 4));
  }
  cfg.reject_unused();
  const auto res = train(ds, t);
  res.model.save(run.path("model.json"));
  {
    std::ofstream out(run.path("loss.csv"));
    out << "epoch,train_mse,val_mse\n" << std::setprecision(12);
    for (const auto& e : res.history) out << e.epoch << ',' << e.train << ',' << e.val << '\n';
  }
  run.finish(static_cast<long long>(t.seed));
  const double sc = ds.norm.scale(0);
  std::printf("trained %zu epochs (best %d); val RMSE %.3f mm, test RMSE %.3f mm\n", res.history.size(),
              res.best_epoch, sc * std::sqrt(split_loss(res.model, ds, Split::val)),
              sc * std::sqrt(split_loss(res.model, ds, Split::test)));
  return 0;
}

Scenario load_scenario(const Run& run, const Options& o) {
  const auto cfg = run.config();
  auto s = scenario_from(cfg, cached_models(o.models));
  if (o.mode == "exact") s.solver = SolverKind::exact;
  if (o.mode == "homotopy") s.solver = SolverKind::homotopy;
  cfg.reject_unused();
  return s;
}

int cmd_schedule(const Options& o) {
  Run run("schedule", o);
  const auto s = load_scenario(run, o);
  const auto p = first_problem(s);
  int code = 0;
  const auto r = solve_spatial(p, s.solver, s.sigmoid);
  for (size_t j = 0; j < s.zones.size(); ++j) {
    write_schedule_csv(run.path("schedule_" + s.zones[j].label + ".csv"), r.schedule.zones[j], 1);
    std::printf("%-10s events on days:", s.zones[j].label.c_str());
    for (int k : event_days(r.schedule, j)) std::printf(" %d (%.2f mm)", k + 1, r.schedule.zones[j].u[k]);
    std::printf("\n");
  }
  nlohmann::json j;
  j["solver"] = s.solver == SolverKind::exact ? "exact" : "homotopy";
  j["c"] = r.schedule.c;
  j["cost"] = r.schedule.cost;
  j["zone_cost"] = r.schedule.zone_cost;
  j["fixed_cost"] = r.schedule.fixed_cost;
  j["volume_cost"] = r.schedule.volume_cost;
  j["converged"] = r.converged;
  for (const auto& t : r.trace) j["trace"].push_back({t.beta, t.relaxed_cost, t.distance});
  std::ofstream(run.path("summary.json")) << j.dump(1) << '\n';
  std::printf("cost %.6g (zone %.6g, fixed %.6g, volume %.6g)%s\n", r.schedule.cost, r.schedule.zone_cost,
              r.schedule.fixed_cost, r.schedule.volume_cost, r.converged ? "" : ", homotopy not converged");
  if (o.compare) {
    const auto c = compare_open_loop(s);
    nlohmann::json t{{"exact_seconds", c.exact_seconds},     {"homotopy_seconds", c.homotopy_seconds},
                     {"exact_cost", c.exact_cost},           {"homotopy_cost", c.homotopy_cost},
                     {"same_decisions", c.same_decisions},   {"converged", c.converged},
                     {"homotopy_steps", c.homotopy_steps}};
    std::ofstream((fs::path(o.out) / "timing.json").string()) << t.dump(1) << '\n';
    std::printf("exact %.3f s cost %.6g | homotopy %.3f s cost %.6g | same decisions: %s\n", c.exact_seconds,
                c.exact_cost, c.homotopy_seconds, c.homotopy_cost, c.same_decisions ? "yes" : "no");
  }
  if (o.strict && !r.converged) code = 3;
  run.finish(static_cast<long long>(s.seed));
  return code;
}

std::string trace_stem(const Scenario& s) { return s.name + "_" + s.fingerprint() + "_s" + std::to_string(s.seed); }

int cmd_rhc(const Options& o) {
  Run run("rhc", o);
  const auto s = load_scenario(run, o);
  const auto t = run_closed_loop(s);
  const auto stem = trace_stem(s);
  t.write_csv(run.path(stem + ".csv"));
  t.write_json(run.path(stem + ".json"));
  run.finish(static_cast<long long>(s.seed));
  int unconverged = 0;
  for (const auto& d : t.days) unconverged += !d.converged;
  std::printf("%s: %d days, %d events, volume %.2f mm, cost %.6g, solve %.1f s\n", s.name.c_str(), s.days,
              t.events(), t.total_volume, t.total_cost, t.solve_seconds);
  return o.strict && unconverged > 0 ? 3 : 0;
}

int cmd_compare(const Options& o) {
  Run run("compare", o);
  const auto s = load_scenario(run, o);
  const auto c = compare_exact_vs_homotopy(s);
  const auto stem = trace_stem(s);
  c.exact.write_csv(run.path(stem + "_exact.csv"));
  c.homotopy.write_csv(run.path(stem + "_homotopy.csv"));
  c.write_json((fs::path(o.out) / (stem + "_report.json")).string());
  run.finish(static_cast<long long>(s.seed));
  std::printf("open loop: exact %.3f s cost %.6g | homotopy %.3f s cost %.6g\n", c.open_loop.exact_seconds,
              c.open_loop.exact_cost, c.open_loop.homotopy_seconds, c.open_loop.homotopy_cost);
  std::printf("closed loop: exact cost %.6g volume %.2f | homotopy cost %.6g volume %.2f | %d/%zu days agree\n",
              c.exact.total_cost, c.exact.total_volume, c.homotopy.total_cost, c.homotopy.total_volume,
              c.agreeing_days, c.exact.days.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Irrigation scheduling toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool scenario) {
    sub->add_option("-c,--config", o.config, "configuration file");
    sub->add_option("--set", o.sets, "override a configuration key (key=value)");
    sub->add_option("-o,--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "random seed");
    if (scenario) {
      sub->add_option("-p,--preset", o.preset, "built-in scenario")
          ->check(CLI::IsMember(preset_names()));
      sub->add_option("--models", o.models, "surrogate cache directory")->capture_default_str();
      sub->add_option("--mode", o.mode, "solver")->check(CLI::IsMember({"exact", "homotopy"}));
      sub->add_flag("--strict", o.strict, "exit 3 when the homotopy does not converge");
    }
  };
  auto* sim = app.add_subcommand("simulate", "run a Richards campaign and write the trajectory");
  auto* gen = app.add_subcommand("gen-data", "build the supervised dataset of a campaign");
  auto* trn = app.add_subcommand("train", "train a surrogate");
  auto* sch = app.add_subcommand("schedule", "solve the day-1 problem of a scenario");
  auto* rhc = app.add_subcommand("rhc", "closed-loop run of a scenario");
  auto* cmp = app.add_subcommand("compare", "exact and homotopy solvers on the same scenario");
  common(sim, false);
  common(gen, false);
  common(trn, false);
  common(sch, true);
  common(rhc, true);
  common(cmp, true);
  sch->add_flag("--compare", o.compare, "also time both solvers");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*sim) return cmd_simulate(o);
    if (*gen) return cmd_gen_data(o);
    if (*trn) return cmd_train(o);
    if (*sch) return cmd_schedule(o);
    if (*rhc) return cmd_rhc(o);
    if (*cmp) return cmd_compare(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NonConvergence& e) {
    std::cerr << "simulator error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

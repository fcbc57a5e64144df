#include "irrig/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "irrig/errors.hpp"

namespace irrig {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  Config c;
  c.read_file(path, 0);
  return c;
}

Config Config::parse(const std::string& text, const std::string& base_dir) {
  Config c;
  c.read_text(text, base_dir, "<text>", 0);
  return c;
}

void Config::read_file(const std::string& path, int depth) {
  if (depth > 16) throw ConfigError("config: include nesting too deep at " + path);
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  read_text(ss.str(), std::filesystem::path(path).parent_path().string(), path, depth);
}

void Config::read_text(const std::string& text, const std::string& base_dir, const std::string& origin, int depth) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + origin + ":" + std::to_string(n) + ": expected key = value");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: " + origin + ":" + std::to_string(n) + ": empty key");
    if (key == "include") {
      const auto p = std::filesystem::path(value);
      read_file((p.is_absolute() ? p : std::filesystem::path(base_dir.empty() ? "." : base_dir) / p).string(),
                depth + 1);
    } else {
      values_[key] = value;
    }
  }
}

const std::string* Config::find(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string Config::str(const std::string& key, const std::string& def) const {
  const auto* v = find(key);
  return v ? *v : def;
}

std::string Config::str(const std::string& key) const {
  const auto* v = find(key);
  if (!v) throw ConfigError("config: missing key '" + key + "'");
  return *v;
}

double Config::num(const std::string& key, double def) const {
  const auto* v = find(key);
  if (!v) return def;
  try {
    size_t pos = 0;
    const double x = std::stod(*v, &pos);
    if (pos == v->size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' is not a number: " + *v);
}

int Config::integer(const std::string& key, int def) const {
  const auto* v = find(key);
  if (!v) return def;
  try {
    size_t pos = 0;
    const int x = std::stoi(*v, &pos);
    if (pos == v->size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' is not an integer: " + *v);
}

bool Config::flag(const std::string& key, bool def) const {
  const auto* v = find(key);
  if (!v) return def;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: " + *v);
}

std::vector<double> Config::list(const std::string& key, const std::vector<double>& def) const {
  const auto* v = find(key);
  if (!v) return def;
  std::vector<double> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    try {
      size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' holds a non-numeric entry: " + item);
    }
  }
  return out;
}

void Config::reject_unused() const {
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "'");
}

namespace {

Range range(const Config& c, const std::string& key, Range def) {
  const auto v = c.list(key, {def.lo, def.hi});
  if (v.size() != 2) throw ConfigError("config: '" + key + "' needs two values lo, hi");
  return {v[0], v[1]};
}

}  // namespace

CampaignConfig campaign_from(const Config& c) {
  CampaignConfig k;
  if (c.has("soil")) k = surrogate_campaign(c.str("soil"));
  k.column_depth = c.num("column_depth", k.column_depth);
  k.nodes = c.integer("nodes", k.nodes);
  k.initial_head = c.num("initial_head", k.initial_head);
  k.sim_days = c.integer("sim_days", k.sim_days);
  k.irrigation = range(c, "irrigation", k.irrigation);
  k.rain = range(c, "rain", k.rain);
  k.rain_probability = c.num("rain_probability", k.rain_probability);
  k.et0 = range(c, "et0", k.et0);
  k.kc = range(c, "kc", k.kc);
  k.gap = range(c, "gap", k.gap);
  k.noise_std = c.num("noise_std", k.noise_std);
  const auto mode = c.str("noise_mode", "measurement");
  if (mode == "measurement") {
    k.noise_mode = NoiseMode::measurement;
  } else if (mode == "process") {
    k.noise_mode = NoiseMode::process;
  } else {
    throw ConfigError("config: 'noise_mode' must be measurement or process");
  }
  k.seed = static_cast<std::uint64_t>(c.num("seed", static_cast<double>(k.seed)));
  k.record_dt = c.num("record_dt", k.record_dt);
  k.sensor_depth = c.num("sensor_depth", k.sensor_depth);
  k.record_all_nodes = c.flag("record_all_nodes", k.record_all_nodes);
  k.validate();
  return k;
}

TrainConfig training_from(const Config& c) {
  TrainConfig t = surrogate_training();
  t.learning_rate = c.num("train.learning_rate", t.learning_rate);
  t.batch_size = c.integer("train.batch_size", t.batch_size);
  t.max_epochs = c.integer("train.max_epochs", t.max_epochs);
  t.patience = c.integer("train.patience", t.patience);
  t.layers = c.integer("train.layers", t.layers);
  t.hidden = c.integer("train.hidden", t.hidden);
  t.seed = static_cast<std::uint64_t>(c.num("train.seed", static_cast<double>(t.seed)));
  t.validate();
  return t;
}

SigmoidConfig sigmoid_from(const Config& c) {
  SigmoidConfig s;
  s.beta0 = c.num("sigmoid.beta0", s.beta0);
  s.tau = c.num("sigmoid.tau", s.tau);
  s.zeta = c.num("sigmoid.zeta", s.zeta);
  s.r_min = c.num("sigmoid.r_min", s.r_min);
  s.r_max = c.num("sigmoid.r_max", s.r_max);
  s.max_iterations = c.integer("sigmoid.max_iterations", s.max_iterations);
  s.polish = c.flag("sigmoid.polish", s.polish);
  s.inner.max_iterations = c.integer("inner.max_iterations", s.inner.max_iterations);
  s.inner.tolerance = c.num("inner.tolerance", s.inner.tolerance);
  s.inner.multistarts = c.integer("inner.multistarts", s.inner.multistarts);
  s.validate();
  return s;
}

Scenario scenario_from(const Config& c, const ModelSource& models) {
  Scenario s;
  const bool preset = c.has("preset");
  if (preset) s = make_preset(c.str("preset"), models);
  s.name = c.str("name", preset ? s.name : "scenario");
  s.days = c.integer("days", s.days);
  s.horizon = c.integer("horizon", s.horizon);
  if (c.has("solver")) {
    const auto v = c.str("solver");
    if (v == "exact") {
      s.solver = SolverKind::exact;
    } else if (v == "homotopy") {
      s.solver = SolverKind::homotopy;
    } else {
      throw ConfigError("config: 'solver' must be exact or homotopy");
    }
  }
  if (c.has("mode")) {
    const auto v = c.str("mode");
    if (v == "small_scale") {
      s.mode = SpatialMode::small_scale;
    } else if (v == "large_scale") {
      s.mode = SpatialMode::large_scale;
    } else {
      throw ConfigError("config: 'mode' must be small_scale or large_scale");
    }
  }
  s.r_c = c.num("r_c", s.r_c);
  s.r_u = c.num("r_u", s.r_u);
  s.noise_std = c.num("noise_std", s.noise_std);
  s.seed = static_cast<std::uint64_t>(c.num("seed", static_cast<double>(s.seed)));
  s.sigmoid = sigmoid_from(c);

  const int n = s.days + s.horizon;
  s.weather.et0 = c.list("et0", preset ? s.weather.et0 : reference_et0(n));
  s.weather.rain = c.list("rain", preset ? s.weather.rain : std::vector<double>(n, 0.0));
  if (s.weather.et0.size() < static_cast<size_t>(n)) {
    const auto e = reference_et0(n);
    for (size_t d = s.weather.et0.size(); d < static_cast<size_t>(n); ++d) s.weather.et0.push_back(e[d]);
  }
  s.weather.rain.resize(std::max(s.weather.rain.size(), static_cast<size_t>(n)), 0.0);
  const auto rain_days = c.list("rain_days", {}), rain_mm = c.list("rain_mm", {});
  if (rain_days.size() != rain_mm.size()) throw ConfigError("config: 'rain_days' and 'rain_mm' differ in length");
  for (size_t i = 0; i < rain_days.size(); ++i) {
    const int d = static_cast<int>(rain_days[i]);
    if (d < 1 || d > n) throw ConfigError("config: 'rain_days' entry outside the simulated days");
    s.weather.rain[d - 1] = rain_mm[i];
  }

  const int m = c.integer("zones", static_cast<int>(s.zones.size()));
  if (m < 1) throw ConfigError("config: 'zones' must be >= 1");
  std::vector<PlantZone> zones;
  for (int j = 0; j < m; ++j) {
    const std::string p = "zone." + std::to_string(j + 1) + ".";
    const bool base = j < static_cast<int>(s.zones.size());
    const std::string soil = c.str(p + "soil", base ? s.zones[j].column.params.name : "loam");
    ZonePreset z = zone_preset(soil);
    double kc = 0.5, u_lo = 1.4, u_hi = 15.6, sensor = 500.0;
    if (base && soil == s.zones[j].column.params.name) {
      const auto& b = s.zones[j];
      z.zone = b.zone;
      z.x0 = b.x0;
      z.past_heads = b.past_heads;
      kc = b.kc;
      u_lo = b.u_lo;
      u_hi = b.u_hi;
      sensor = b.sensor_depth;
    }
    z.zone.nu_lo = c.num(p + "nu_lo", z.zone.nu_lo);
    z.zone.nu_hi = c.num(p + "nu_hi", z.zone.nu_hi);
    z.zone.q_lo = c.num(p + "q_lo", z.zone.q_lo);
    z.zone.q_hi = c.num(p + "q_hi", z.zone.q_hi);
    z.x0 = c.num(p + "x0", z.x0);
    z.past_heads = c.list(p + "past", z.past_heads);
    std::shared_ptr<const HeadModel> model;
    if (c.has(p + "model")) {
      model = std::make_shared<LstmHeadModel>(std::make_shared<LstmModel>(LstmModel::load(c.str(p + "model"))));
    } else if (base && soil == s.zones[j].column.params.name) {
      model = s.zones[j].model;
    } else {
      model = models(soil);
    }
    auto pz = plant_zone(z, model, c.num(p + "kc", kc));
    pz.label = c.str(p + "label", base ? s.zones[j].label : soil);
    pz.u_lo = c.num(p + "u_lo", u_lo);
    pz.u_hi = c.num(p + "u_hi", u_hi);
    pz.sensor_depth = c.num(p + "sensor_depth", sensor);
    const double depth = c.num(p + "depth", pz.column.depth);
    const int nodes = c.integer(p + "nodes", pz.column.nodes());
    if (depth != pz.column.depth || nodes != pz.column.nodes()) {
      pz.column = SoilColumn::uniform(soil_by_name(soil), depth, nodes);
      pz.psi0 = uniform_profile(pz.column, z.x0);
    }
    zones.push_back(std::move(pz));
  }
  s.zones = std::move(zones);
  s.validate();
  return s;
}

}  // namespace irrig

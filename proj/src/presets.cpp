#include "irrig/presets.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>

#include "irrig/errors.hpp"

namespace irrig {

CampaignConfig surrogate_campaign(const std::string& soil) {
  CampaignConfig c;
  c.soil = soil;
  if (soil == "loam") {
    c.initial_head = -750.0;
    c.rain_probability = 0.1;
    c.seed = 2022;
  } else if (soil == "loamy_sand") {
    c.initial_head = -280.0;
    c.rain_probability = 0.3;
    c.seed = 2021;
  } else if (soil == "sand") {
    c.initial_head = -260.0;
    c.rain_probability = 0.25;
    c.seed = 2023;
  } else {
    throw ConfigError("soil: unknown soil '" + soil + "'");
  }
  return c;
}

TrainConfig surrogate_training() { return {}; }

TrainResult train_surrogate(const CampaignConfig& campaign, const TrainConfig& training, int lag) {
  const auto run = run_campaign(campaign);
  const auto records = to_daily_root_zone(run.trajectory, run.inputs, campaign.sensor_depth);
  return train(build_supervised(records, lag), training);
}

std::shared_ptr<const LstmModel> cached_surrogate(const std::string& soil, const std::string& dir) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const LstmModel>> memo;
  const std::lock_guard<std::mutex> lock(mu);
  const auto path = (std::filesystem::path(dir) / (soil + ".json")).string();
  if (auto it = memo.find(path); it != memo.end()) return it->second;
  std::shared_ptr<const LstmModel> m;
  if (std::filesystem::exists(path)) {
    m = std::make_shared<LstmModel>(LstmModel::load(path));
  } else {
    auto r = train_surrogate(surrogate_campaign(soil), surrogate_training());
    std::filesystem::create_directories(dir);
    r.model.save(path);
    m = std::make_shared<LstmModel>(std::move(r.model));
  }
  memo[path] = m;
  return m;
}

ModelSource cached_models(const std::string& dir) {
  return [dir](const std::string& soil) -> std::shared_ptr<const HeadModel> {
    return std::make_shared<LstmHeadModel>(cached_surrogate(soil, dir));
  };
}

ZonePreset zone_preset(const std::string& soil) {
  ZonePreset z;
  z.soil = soil;
  if (soil == "loam") {
    z.zone = {-850.0, -690.0, 9000.0, 9000.0};
    z.x0 = -754.0;
    z.past_heads = {-795.0, -748.0, -735.0, -740.0};
  } else if (soil == "loamy_sand") {
    z.zone = {-340.0, -180.0, 9000.0, 2000.0};
    z.x0 = -279.0;
    z.past_heads = {-173.0, -212.0, -239.0, -260.0};
  } else if (soil == "sand") {
    z.zone = {-290.0, -160.0, 9000.0, 2000.0};
    z.x0 = -262.0;
    z.past_heads = {-225.0, -239.0, -251.0, -258.0};
  } else {
    throw ConfigError("soil: unknown soil '" + soil + "'");
  }
  return z;
}

std::vector<double> reference_et0(int days) {
  std::vector<double> e(days);
  for (int d = 0; d < days; ++d) e[d] = 2.0 + 0.8 * std::sin(0.5 * d);
  return e;
}

std::vector<std::string> preset_names() { return {"case1a", "case1b", "case2", "case3"}; }

PlantZone plant_zone(const ZonePreset& z, std::shared_ptr<const HeadModel> model, double kc) {
  PlantZone p;
  p.label = z.soil;
  p.column = SoilColumn::uniform(soil_by_name(z.soil));
  p.psi0 = uniform_profile(p.column, z.x0);
  p.model = std::move(model);
  p.zone = z.zone;
  p.kc = kc;
  p.x0 = z.x0;
  p.past_heads = z.past_heads;
  return p;
}

Scenario make_preset(const std::string& name, const ModelSource& models) {
  Scenario s;
  s.name = name;
  s.days = 20;
  s.horizon = 14;
  const int n = s.days + s.horizon;
  s.weather.et0 = reference_et0(n);
  s.weather.rain.assign(n, 0.0);
  auto zone = [&](const std::string& soil) { return plant_zone(zone_preset(soil), models(soil)); };
  if (name == "case1a" || name == "case1b") {
    auto z = zone_preset("loam");
    z.zone.nu_lo = -820.0;
    s.zones.push_back(plant_zone(z, models("loam")));
    if (name == "case1b") {
      s.weather.rain[5] = 4.8;
      s.weather.rain[15] = 5.2;
    }
  } else if (name == "case2") {
    s.zones = {zone("loam"), zone("loamy_sand"), zone("sand")};
    s.mode = SpatialMode::small_scale;
  } else if (name == "case3") {
    s.zones = {zone("loamy_sand"), zone("loam")};
    s.mode = SpatialMode::large_scale;
  } else {
    throw ConfigError("preset: unknown preset '" + name + "'");
  }
  return s;
}

}  // namespace irrig

#pragma once

// Built-in case-study scenarios and the campaigns their surrogates are
// trained on.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "irrig/datagen.hpp"
#include "irrig/lstm.hpp"
#include "irrig/rhc.hpp"

namespace irrig {

/// Open-loop campaign whose data covers the soil's target zone.
CampaignConfig surrogate_campaign(const std::string& soil);
TrainConfig surrogate_training();

/// Campaign, daily resampling, lag-4 dataset and training.
TrainResult train_surrogate(const CampaignConfig& campaign, const TrainConfig& training, int lag = 4);

/// Loads `<dir>/<soil>.json` or trains and saves it.
std::shared_ptr<const LstmModel> cached_surrogate(const std::string& soil, const std::string& dir);

using ModelSource = std::function<std::shared_ptr<const HeadModel>(const std::string& soil)>;
ModelSource cached_models(const std::string& dir);

struct ZonePreset {
  std::string soil;
  ZoneSpec zone;
  double x0 = 0.0;
  std::vector<double> past_heads;
};

/// Defaults for "loam", "loamy_sand" and "sand" management zones.
ZonePreset zone_preset(const std::string& soil);

/// Smooth synthetic reference evapotranspiration in [1.2, 2.8] mm/day.
std::vector<double> reference_et0(int days);

std::vector<std::string> preset_names();
/// case1a, case1b (with rain), case2 (three zones, small scale),
/// case3 (two zones, large scale).
Scenario make_preset(const std::string& name, const ModelSource& models);

PlantZone plant_zone(const ZonePreset& z, std::shared_ptr<const HeadModel> model, double kc = 0.5);

}  // namespace irrig

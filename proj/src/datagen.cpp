#include "irrig/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "irrig/errors.hpp"

namespace irrig {

namespace {

void check_range(const char* what, Range r) {
  if (!(r.lo >= 0.0 && r.hi >= r.lo))
    throw ConfigError(std::string("campaign: ") + what + " range must be non-empty and non-negative");
}

}  // namespace

void CampaignConfig::validate() const {
  soil_by_name(soil);
  check_range("irrigation", irrigation);
  check_range("rain", rain);
  check_range("et0", et0);
  check_range("kc", kc);
  check_range("gap", gap);
  if (kc.hi > 1.0) throw ConfigError("campaign: kc range must lie within [0, 1]");
  if (gap.lo < 1.0 || gap.lo != std::floor(gap.lo) || gap.hi != std::floor(gap.hi))
    throw ConfigError("campaign: gap range must be whole days >= 1");
  if (!(rain_probability >= 0.0 && rain_probability <= 1.0))
    throw ConfigError("campaign: rain_probability must lie in [0, 1]");
  if (sim_days < 30) throw ConfigError("campaign: sim_days must be >= 30");
  if (!(noise_std >= 0.0)) throw ConfigError("campaign: noise_std must be >= 0");
  if (!(initial_head < 0.0)) throw ConfigError("campaign: initial_head must be negative");
}

std::vector<DailyInput> draw_campaign_inputs(const CampaignConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto draw = [&](Range r) { return r.lo + (r.hi - r.lo) * u01(rng); };
  const int gap_lo = static_cast<int>(config.gap.lo), gap_hi = static_cast<int>(config.gap.hi);
  auto draw_gap = [&] {
    const int span = gap_hi - gap_lo + 1;
    return gap_lo + std::min(span - 1, static_cast<int>(u01(rng) * span));
  };

  std::vector<DailyInput> inputs(config.sim_days);
  int next_irrigation = 0;
  for (int d = 0; d < config.sim_days; ++d) {
    DailyInput& in = inputs[d];
    in.et0 = draw(config.et0);
    in.kc = draw(config.kc);
    const bool rain_day = u01(rng) < config.rain_probability;
    const double rain = draw(config.rain);
    if (rain_day) in.rain = rain;
    if (d == next_irrigation) {
      in.irrigation = draw(config.irrigation);
      next_irrigation = d + draw_gap();
    }
  }
  return inputs;
}

CampaignResult run_campaign(const CampaignConfig& config) {
  CampaignResult result;
  result.inputs = draw_campaign_inputs(config);
  const auto column = SoilColumn::uniform(soil_by_name(config.soil), config.column_depth, config.nodes);
  if (!column.node_at(config.sensor_depth))
    throw DepthNotOnGrid("campaign: sensor depth " + std::to_string(config.sensor_depth) + " mm is not a node");
  const RichardsSolver solver(column);
  SimulationOptions opt;
  opt.noise_std = config.noise_std;
  opt.noise_mode = config.noise_mode;
  opt.seed = config.seed ^ 0x9e3779b97f4a7c15ULL;
  opt.record_dt = config.record_dt;
  if (!config.record_all_nodes) opt.record_depths = {config.sensor_depth};
  result.trajectory =
      simulate(solver, std::vector<double>(column.nodes(), config.initial_head), result.inputs, opt);
  return result;
}

std::vector<DailyRecord> to_daily_root_zone(const Trajectory& trajectory,
                                            const std::vector<DailyInput>& inputs,
                                            double sensor_depth) {
  int col = -1;
  for (size_t i = 0; i < trajectory.depths.size(); ++i)
    if (std::abs(trajectory.depths[i] - sensor_depth) <= 1e-9 * std::max(1.0, sensor_depth))
      col = static_cast<int>(i);
  if (col < 0)
    throw DepthNotOnGrid("sensor depth " + std::to_string(sensor_depth) + " mm matches no recorded node");
  if (trajectory.times.size() < 2) throw InsufficientData("trajectory holds no simulated samples");

  std::vector<DailyRecord> records;
  records.reserve(inputs.size());
  size_t s = 0;
  for (size_t day = 0; day < inputs.size(); ++day) {
    const double end = static_cast<double>(day + 1);
    // last sample of the day: the one at its closing instant
    while (s + 1 < trajectory.times.size() && trajectory.times[s + 1] <= end + 1e-9) ++s;
    if (std::abs(trajectory.times[s] - end) > 1e-6)
      throw InsufficientData("trajectory does not cover day " + std::to_string(day));
    const DailyInput& in = inputs[day];
    records.push_back({static_cast<int>(day), trajectory.heads[s][col], in.irrigation, in.rain, in.et0, in.kc});
  }
  return records;
}

// --- normalization ----------------------------------------------------------

double Normalization::scale(int ch) const {
  const double r = max[ch] - min[ch];
  return r > 1e-12 ? r : 1.0;
}

Row Normalization::normalize(const Row& r) const {
  Row out;
  for (int c = 0; c < kChannels; ++c) out[c] = normalize(c, r[c]);
  return out;
}

Normalization Normalization::fit(const std::vector<Row>& rows) {
  Normalization n;
  if (rows.empty()) throw InsufficientData("cannot fit normalization on no rows");
  n.min = n.max = rows.front();
  for (const auto& r : rows)
    for (int c = 0; c < kChannels; ++c) {
      n.min[c] = std::min(n.min[c], r[c]);
      n.max[c] = std::max(n.max[c], r[c]);
    }
  return n;
}

// --- supervised dataset -----------------------------------------------------

namespace {

void assign_rows(SupervisedDataset& ds) {
  const auto& rec = ds.records;
  ds.rows.clear();
  ds.targets.clear();
  for (size_t t = 1; t < rec.size(); ++t) {
    ds.rows.push_back({rec[t - 1].x, rec[t].irrigation, rec[t].rain, rec[t].kc, rec[t].et0});
    ds.targets.push_back(rec[t].x);
  }
}

}  // namespace

SupervisedDataset build_supervised(const std::vector<DailyRecord>& records, int lag,
                                   SplitFractions fractions) {
  if (lag < 0) throw ConfigError("build_supervised: lag must be >= 0");
  if (fractions.train <= 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9)
    throw ConfigError("build_supervised: split fractions must be non-negative and sum to 1");
  if (records.size() <= static_cast<size_t>(lag + 1))
    throw InsufficientData("build_supervised: need more than lag + 1 records");
  for (size_t i = 1; i < records.size(); ++i)
    if (records[i].day != records[i - 1].day + 1)
      throw InsufficientData("build_supervised: daily records have a gap at day " +
                             std::to_string(records[i].day));

  SupervisedDataset ds;
  ds.lag = lag;
  ds.records = records;
  assign_rows(ds);
  const int n = static_cast<int>(ds.rows.size());
  const int n_train = static_cast<int>(std::floor(fractions.train * n + 1e-9));
  const int n_val = static_cast<int>(std::floor(fractions.val * n + 1e-9));
  ds.bounds = {0, n_train, n_train + n_val, n};
  if (n_train < lag + 1) throw InsufficientData("build_supervised: training split holds no complete window");
  ds.norm = Normalization::fit({ds.rows.begin(), ds.rows.begin() + n_train});
  return ds;
}

std::vector<int> SupervisedDataset::window_ends(Split s) const {
  const int lo = bounds[static_cast<int>(s)], hi = bounds[static_cast<int>(s) + 1];
  std::vector<int> ends;
  for (int e = lo + lag; e < hi; ++e) ends.push_back(e);
  return ends;
}

std::vector<Row> SupervisedDataset::normalized_window(int end) const {
  if (end < lag || end >= static_cast<int>(rows.size())) throw ShapeMismatch("window end out of range");
  std::vector<Row> w;
  w.reserve(lag + 1);
  for (int r = end - lag; r <= end; ++r) w.push_back(norm.normalize(rows[r]));
  return w;
}

// --- file format ------------------------------------------------------------
//
// {
//   "format": "irrig-dataset", "version": 1,
//   "lag": l, "channels": ["x","u_irrig","rain","kc","et0"],
//   "normalization": {"min": [5], "max": [5]},
//   "split_bounds": [0, train_end, val_end, rows],
//   "records": [[day, x, u_irrig, rain, et0, kc], ...]
// }
// Rows and targets are re-derived from the records on load.

void SupervisedDataset::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "irrig-dataset";
  j["version"] = 1;
  j["lag"] = lag;
  j["channels"] = std::vector<std::string>(kChannelNames.begin(), kChannelNames.end());
  j["normalization"] = {{"min", norm.min}, {"max", norm.max}};
  j["split_bounds"] = bounds;
  auto& rec = j["records"] = nlohmann::json::array();
  for (const auto& r : records) rec.push_back({r.day, r.x, r.irrigation, r.rain, r.et0, r.kc});
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset " + path);
  out << j.dump() << '\n';
}

SupervisedDataset SupervisedDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset " + path + ": " + e.what());
  }
  if (j.value("format", "") != "irrig-dataset" || j.value("version", 0) != 1)
    throw ConfigError("dataset " + path + ": unsupported format or version");
  SupervisedDataset ds;
  ds.lag = j.at("lag").get<int>();
  ds.norm.min = j.at("normalization").at("min").get<Row>();
  ds.norm.max = j.at("normalization").at("max").get<Row>();
  ds.bounds = j.at("split_bounds").get<std::array<int, 4>>();
  for (const auto& r : j.at("records"))
    ds.records.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(),
                          r[4].get<double>(), r[5].get<double>()});
  assign_rows(ds);
  if (ds.bounds[3] != static_cast<int>(ds.rows.size()))
    throw ConfigError("dataset " + path + ": split bounds do not match the records");
  return ds;
}

}  // namespace irrig

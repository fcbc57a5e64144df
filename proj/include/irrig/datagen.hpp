#pragma once

// Open-loop simulation campaigns and the lagged, normalized dataset the
// surrogate is trained on.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "irrig/hydrology.hpp"

namespace irrig {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct CampaignConfig {
  std::string soil = "loamy_sand";
  double column_depth = 600.0;
  int nodes = 30;
  double initial_head = -180.0;  ///< uniform initial profile [mm]
  int sim_days = 1200;
  Range irrigation{1.4, 15.6};   ///< [mm/day], applied on irrigation days only
  Range rain{1.04, 7.0};         ///< [mm/day], applied on rain days only
  double rain_probability = 1.0; ///< chance that a given day has rain
  Range et0{1.04, 3.0};
  Range kc{0.50, 0.88};
  Range gap{2, 6};               ///< days between irrigation events (integers)
  double noise_std = 5.0;        ///< [mm]
  NoiseMode noise_mode = NoiseMode::measurement;
  std::uint64_t seed = 2021;
  double record_dt = 1.0 / 240.0;
  double sensor_depth = 500.0;
  bool record_all_nodes = false;

  void validate() const;
};

struct CampaignResult {
  Trajectory trajectory;
  std::vector<DailyInput> inputs;  ///< one entry per simulated day
};

/// Draw the daily forcing of a campaign; deterministic given the seed.
std::vector<DailyInput> draw_campaign_inputs(const CampaignConfig& config);

CampaignResult run_campaign(const CampaignConfig& config);

/// One simulated day: x is the head at the last sample of the day, the inputs
/// are those applied during the day.
struct DailyRecord {
  int day = 0;
  double x = 0.0;
  double irrigation = 0.0;
  double rain = 0.0;
  double et0 = 0.0;
  double kc = 0.0;
};

/// Throws DepthNotOnGrid when no recorded column sits at sensor_depth.
std::vector<DailyRecord> to_daily_root_zone(const Trajectory& trajectory,
                                            const std::vector<DailyInput>& inputs,
                                            double sensor_depth);

inline constexpr int kChannels = 5;
/// Fixed channel order of every model input row.
inline const std::array<const char*, kChannels> kChannelNames = {"x", "u_irrig", "rain", "kc", "et0"};

using Row = std::array<double, kChannels>;

/// Per-channel min-max scaling fitted on the training split.
struct Normalization {
  Row min{};
  Row max{};

  double scale(int ch) const;
  double normalize(int ch, double v) const { return (v - min[ch]) / scale(ch); }
  double denormalize(int ch, double v) const { return v * scale(ch) + min[ch]; }
  Row normalize(const Row& r) const;
  static Normalization fit(const std::vector<Row>& rows);
};

enum class Split { train = 0, val = 1, test = 2 };

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Rows pair the head at the start of day t (end of day t-1) with the inputs
/// applied during day t; the target of row t is the head at the end of day t.
struct SupervisedDataset {
  int lag = 4;
  std::vector<DailyRecord> records;
  std::vector<Row> rows;        ///< raw model inputs, rows[i] is day i + 1
  std::vector<double> targets;  ///< raw next heads
  std::array<int, 4> bounds{};  ///< split s covers rows [bounds[s], bounds[s+1])
  Normalization norm;

  int window_length() const { return lag + 1; }
  /// End rows of every window fully inside split s.
  std::vector<int> window_ends(Split s) const;
  /// Normalized (lag + 1) x 5 window ending at row `end`.
  std::vector<Row> normalized_window(int end) const;
  double normalized_target(int end) const { return norm.normalize(0, targets[end]); }
  int day_of_row(int row) const { return records[row + 1].day; }

  void save(const std::string& path) const;
  static SupervisedDataset load(const std::string& path);
};

/// Throws InsufficientData when there are not enough records for a window.
SupervisedDataset build_supervised(const std::vector<DailyRecord>& records, int lag,
                                   SplitFractions fractions = {});

}  // namespace irrig

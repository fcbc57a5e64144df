#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "irrig/datagen.hpp"
#include "irrig/errors.hpp"

namespace irrig {
namespace {

CampaignConfig short_campaign(int days) {
  CampaignConfig c;
  c.sim_days = days;
  c.record_dt = 0.1;
  c.noise_std = 0.0;
  return c;
}

TEST(Campaign, InputsAreDeterministic) {
  CampaignConfig c = short_campaign(40);
  const auto a = draw_campaign_inputs(c);
  const auto b = draw_campaign_inputs(c);
  ASSERT_EQ(a.size(), b.size());
  for (size_t d = 0; d < a.size(); ++d) {
    EXPECT_EQ(a[d].irrigation, b[d].irrigation);
    EXPECT_EQ(a[d].rain, b[d].rain);
    EXPECT_EQ(a[d].et0, b[d].et0);
    EXPECT_EQ(a[d].kc, b[d].kc);
  }
  c.seed += 1;
  const auto other = draw_campaign_inputs(c);
  bool differs = false;
  for (size_t d = 0; d < a.size(); ++d) differs |= a[d].et0 != other[d].et0;
  EXPECT_TRUE(differs);
}

TEST(Campaign, RerunIsIdentical) {
  CampaignConfig c = short_campaign(30);
  c.noise_std = 5.0;
  const auto a = run_campaign(c);
  const auto b = run_campaign(c);
  ASSERT_EQ(a.trajectory.heads.size(), b.trajectory.heads.size());
  for (size_t s = 0; s < a.trajectory.heads.size(); ++s) EXPECT_EQ(a.trajectory.heads[s], b.trajectory.heads[s]);
}

TEST(Campaign, GapsAndRanges) {
  CampaignConfig c;
  c.sim_days = 5000;
  const auto in = draw_campaign_inputs(c);
  int last = -1, events = 0, rain_days = 0;
  for (int d = 0; d < c.sim_days; ++d) {
    const auto& x = in[d];
    EXPECT_GE(x.et0, 1.04);
    EXPECT_LE(x.et0, 3.0);
    EXPECT_GE(x.kc, 0.50);
    EXPECT_LE(x.kc, 0.88);
    if (x.rain > 0) {
      ++rain_days;
      EXPECT_GE(x.rain, 1.04);
      EXPECT_LE(x.rain, 7.0);
    }
    if (x.irrigation > 0) {
      EXPECT_GE(x.irrigation, 1.4);
      EXPECT_LE(x.irrigation, 15.6);
      if (last >= 0) {
        EXPECT_GE(d - last, 2);
        EXPECT_LE(d - last, 6);
      }
      last = d;
      ++events;
    }
  }
  EXPECT_GT(events, 5000 / 6);
  EXPECT_NEAR(rain_days / 5000.0, c.rain_probability, 0.02);
}

TEST(Campaign, InvalidConfig) {
  CampaignConfig c;
  c.sim_days = 29;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.irrigation = {5.0, 2.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rain = {-1.0, 2.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.soil = "clay";
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sensor_depth = 510.0;
  c.sim_days = 30;
  EXPECT_THROW(run_campaign(c), DepthNotOnGrid);
}

TEST(DailyResampling, SensorNodeIndex) {
  const auto col = SoilColumn::uniform(soil_by_name("loam"), 600.0, 30);
  const auto k = col.node_at(500.0);
  ASSERT_TRUE(k.has_value());
  EXPECT_EQ(*k, 24);
}

TEST(DailyResampling, PassThroughAtDailySampling) {
  Trajectory t;
  t.depths = {500.0};
  std::vector<DailyInput> in(3);
  for (int d = 0; d <= 3; ++d) {
    t.times.push_back(d);
    t.heads.push_back({-100.0 - d});
  }
  for (int d = 0; d < 3; ++d) in[d] = {1.0 * d, 0.5, 2.0, 0.6};
  const auto rec = to_daily_root_zone(t, in, 500.0);
  ASSERT_EQ(rec.size(), 3u);
  for (int d = 0; d < 3; ++d) {
    EXPECT_EQ(rec[d].day, d);
    EXPECT_EQ(rec[d].x, -101.0 - d);
    EXPECT_EQ(rec[d].irrigation, 1.0 * d);
    EXPECT_EQ(rec[d].rain, 0.5);
    EXPECT_EQ(rec[d].et0, 2.0);
    EXPECT_EQ(rec[d].kc, 0.6);
  }
}

TEST(DailyResampling, LastSampleOfEachDay) {
  CampaignConfig c = short_campaign(30);
  c.record_dt = 0.1;
  const auto r = run_campaign(c);
  const auto rec = to_daily_root_zone(r.trajectory, r.inputs, 500.0);
  ASSERT_EQ(rec.size(), 30u);
  for (int d = 0; d < 3; ++d) {
    const size_t s = static_cast<size_t>(10 * (d + 1));
    EXPECT_NEAR(r.trajectory.times[s], d + 1.0, 1e-9);
    EXPECT_EQ(rec[d].x, r.trajectory.heads[s][0]);
  }
  EXPECT_THROW(to_daily_root_zone(r.trajectory, r.inputs, 520.0), DepthNotOnGrid);
}

std::vector<DailyRecord> synthetic_records(int n) {
  std::vector<DailyRecord> r;
  for (int d = 0; d < n; ++d)
    r.push_back({d, -500.0 + 40.0 * std::sin(0.3 * d), d % 3 == 0 ? 8.0 + 0.1 * d : 0.0, d % 7 == 0 ? 3.0 : 0.0,
                 1.5 + 0.01 * d, 0.6 + 0.001 * d});
  return r;
}

TEST(Supervised, ZeroLagWindows) {
  const auto rec = synthetic_records(50);
  const auto ds = build_supervised(rec, 0);
  for (int e : ds.window_ends(Split::train)) {
    const auto w = ds.normalized_window(e);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(ds.targets[e], rec[e + 1].x);
    EXPECT_NEAR(ds.norm.denormalize(0, w[0][0]), rec[e].x, 1e-9);
  }
}

TEST(Supervised, LagFourAlignment) {
  const auto rec = synthetic_records(100);
  const auto ds = build_supervised(rec, 4);
  for (int e : ds.window_ends(Split::val)) {
    const auto w = ds.normalized_window(e);
    ASSERT_EQ(w.size(), 5u);
    // window rows hold days e-3..e+1 (head at their start), target the end of day e+1
    for (int k = 0; k < 5; ++k) {
      const int day = e - 4 + k + 1;
      EXPECT_NEAR(ds.norm.denormalize(0, w[k][0]), rec[day - 1].x, 1e-9);
      EXPECT_NEAR(ds.norm.denormalize(1, w[k][1]), rec[day].irrigation, 1e-9);
      EXPECT_NEAR(ds.norm.denormalize(4, w[k][4]), rec[day].et0, 1e-9);
    }
    EXPECT_EQ(ds.targets[e], rec[e + 1].x);
    EXPECT_EQ(ds.day_of_row(e), e + 1);
  }
}

TEST(Supervised, MinMaxMidpoint) {
  Normalization n;
  n.min[0] = -900.0;
  n.max[0] = -100.0;
  EXPECT_DOUBLE_EQ(n.normalize(0, -500.0), 0.5);
}

TEST(Supervised, NormalizationFitsTrainOnly) {
  auto rec = synthetic_records(100);
  rec[95].x = 0.0;  // outlier in the test split
  const auto ds = build_supervised(rec, 2);
  double lo = 1e300, hi = -1e300;
  for (int r = ds.bounds[0]; r < ds.bounds[1]; ++r) {
    lo = std::min(lo, ds.rows[r][0]);
    hi = std::max(hi, ds.rows[r][0]);
  }
  EXPECT_EQ(ds.norm.min[0], lo);
  EXPECT_EQ(ds.norm.max[0], hi);
  EXPECT_LT(ds.norm.max[0], -400.0);
}

TEST(Supervised, RoundTrip) {
  const auto ds = build_supervised(synthetic_records(80), 4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2000.0, 2000.0);
  for (int k = 0; k < 1000; ++k)
    for (int c = 0; c < kChannels; ++c) {
      const double v = u(rng);
      EXPECT_NEAR(ds.norm.denormalize(c, ds.norm.normalize(c, v)), v, 1e-12 * std::max(1.0, std::abs(v)));
    }
}

TEST(Supervised, NoLeakageAndSplitBounds) {
  const auto ds = build_supervised(synthetic_records(200), 4);
  const auto tr = ds.window_ends(Split::train), te = ds.window_ends(Split::test),
             va = ds.window_ends(Split::val);
  ASSERT_FALSE(tr.empty());
  ASSERT_FALSE(te.empty());
  ASSERT_FALSE(va.empty());
  const int last_train_day = ds.day_of_row(tr.back());
  for (int e : te) EXPECT_GT(ds.day_of_row(e - ds.lag), last_train_day);
  for (Split s : {Split::train, Split::val, Split::test})
    for (int e : ds.window_ends(s)) {
      EXPECT_GE(e - ds.lag, ds.bounds[static_cast<int>(s)]);
      EXPECT_LT(e, ds.bounds[static_cast<int>(s) + 1]);
    }
}

TEST(Supervised, ReconstructsRecords) {
  const auto rec = synthetic_records(60);
  const auto ds = build_supervised(rec, 0);
  std::vector<double> x{ds.rows.front()[0]};
  for (double t : ds.targets) x.push_back(t);
  ASSERT_EQ(x.size(), rec.size());
  for (size_t d = 0; d < rec.size(); ++d) EXPECT_EQ(x[d], rec[d].x);
  for (size_t r = 0; r < ds.rows.size(); ++r) {
    EXPECT_EQ(ds.rows[r][1], rec[r + 1].irrigation);
    EXPECT_EQ(ds.rows[r][2], rec[r + 1].rain);
    EXPECT_EQ(ds.rows[r][3], rec[r + 1].kc);
    EXPECT_EQ(ds.rows[r][4], rec[r + 1].et0);
  }
}

TEST(Supervised, Errors) {
  const auto rec = synthetic_records(5);
  EXPECT_THROW(build_supervised(rec, 4), InsufficientData);
  EXPECT_THROW(build_supervised(rec, -1), ConfigError);
  EXPECT_THROW(build_supervised(synthetic_records(50), 1, {0.5, 0.4, 0.4}), ConfigError);
  auto gap = synthetic_records(50);
  gap.erase(gap.begin() + 10);
  EXPECT_THROW(build_supervised(gap, 1), InsufficientData);
}

TEST(Supervised, FileRoundTrip) {
  const auto ds = build_supervised(synthetic_records(70), 3);
  const auto path = (std::filesystem::temp_directory_path() / "irrig_dataset_test.json").string();
  ds.save(path);
  const auto back = SupervisedDataset::load(path);
  std::remove(path.c_str());
  EXPECT_EQ(back.lag, ds.lag);
  EXPECT_EQ(back.bounds, ds.bounds);
  EXPECT_EQ(back.norm.min, ds.norm.min);
  EXPECT_EQ(back.norm.max, ds.norm.max);
  EXPECT_EQ(back.rows, ds.rows);
  EXPECT_EQ(back.targets, ds.targets);
}

}  // namespace
}  // namespace irrig

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "irrig/errors.hpp"
#include "irrig/lstm.hpp"

namespace irrig {
namespace {

// Plain loops over std::vector, independent of the Eigen code path.
struct RefCell {
  std::vector<double> h, C;
};

double ref_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

RefCell ref_cell(const std::vector<double>& m, const std::vector<double>& h_prev, const std::vector<double>& C_prev,
                 const LstmLayerWeights& W) {
  const int H = W.hidden_dim(), D = W.input_dim();
  auto gate = [&](int g, int r) {
    double a = W.b(g * H + r);
    for (int c = 0; c < D; ++c) a += W.W(g * H + r, c) * m[c];
    for (int c = 0; c < H; ++c) a += W.U(g * H + r, c) * h_prev[c];
    return a;
  };
  RefCell out{std::vector<double>(H), std::vector<double>(H)};
  for (int r = 0; r < H; ++r) {
    const double i = ref_sigmoid(gate(0, r));
    const double f = ref_sigmoid(gate(1, r));
    const double o = ref_sigmoid(gate(2, r));
    const double cand = std::tanh(gate(3, r));
    out.C[r] = f * C_prev[r] + i * cand;
    out.h[r] = o * std::tanh(out.C[r]);
  }
  return out;
}

double ref_forward(const LstmModel& model, const std::vector<Row>& window) {
  std::vector<std::vector<double>> seq;
  for (const auto& r : window) seq.emplace_back(r.begin(), r.end());
  for (const auto& W : model.layers) {
    std::vector<double> h(W.hidden_dim(), 0.0), C(W.hidden_dim(), 0.0);
    std::vector<std::vector<double>> next;
    for (const auto& m : seq) {
      auto c = ref_cell(m, h, C, W);
      h = c.h;
      C = c.C;
      next.push_back(h);
    }
    seq = next;
  }
  double y = model.b_y;
  for (int k = 0; k < model.hidden_dim(); ++k) y += model.w_y(0, k) * seq.back()[k];
  return y;
}

Normalization test_norm() {
  Normalization n;
  n.min = {-900.0, 0.0, 0.0, 0.5, 1.0};
  n.max = {-100.0, 16.0, 7.0, 0.9, 3.0};
  return n;
}

std::vector<Row> random_window(int len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Row> w(len);
  for (auto& r : w)
    for (auto& v : r) v = u(rng);
  return w;
}

VectorXd random_vec(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd v(n);
  for (int k = 0; k < n; ++k) v(k) = u(rng);
  return v;
}

TEST(LstmCell, ZeroWeights) {
  const auto W = LstmLayerWeights::zeros(5, 3);
  VectorXd m(5);
  m << 1, -2, 3, 0.5, 7;
  VectorXd h = VectorXd::Zero(3), C(3);
  C << 0.4, -1.2, 2.0;
  const auto out = cell_forward(m, h, C, W);
  for (int k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(out.i(k), 0.5);
    EXPECT_DOUBLE_EQ(out.f(k), 0.5);
    EXPECT_DOUBLE_EQ(out.o(k), 0.5);
    EXPECT_DOUBLE_EQ(out.g(k), 0.0);
    EXPECT_DOUBLE_EQ(out.C(k), 0.5 * C(k));
    EXPECT_DOUBLE_EQ(out.h(k), 0.5 * std::tanh(0.5 * C(k)));
  }
}

TEST(LstmCell, ForgetGateSaturates) {
  auto W = LstmLayerWeights::zeros(5, 2);
  W.bias(Gate::forget).setConstant(50.0);
  VectorXd C(2);
  C << 0.7, -3.0;
  const auto out = cell_forward(VectorXd::Ones(5), VectorXd::Zero(2), C, W);
  EXPECT_NEAR(out.C(0), 0.7, 1e-15);
  EXPECT_NEAR(out.C(1), -3.0, 1e-15);
}

TEST(LstmCell, MatchesReferenceAndGateRanges) {
  std::mt19937_64 rng(11);
  const auto model = LstmModel::initialize(1, 6, 0, test_norm(), 5);
  const auto& W = model.layers[0];
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd m = 3.0 * random_vec(5, rng), h = random_vec(6, rng), C = 2.0 * random_vec(6, rng);
    const auto out = cell_forward(m, h, C, W);
    const auto ref = ref_cell({m.data(), m.data() + 5}, {h.data(), h.data() + 6}, {C.data(), C.data() + 6}, W);
    for (int k = 0; k < 6; ++k) {
      EXPECT_NEAR(out.h(k), ref.h[k], 1e-12);
      EXPECT_NEAR(out.C(k), ref.C[k], 1e-12);
      EXPECT_GT(out.i(k), 0.0);
      EXPECT_LT(out.i(k), 1.0);
      EXPECT_GT(out.f(k), 0.0);
      EXPECT_LT(out.f(k), 1.0);
      EXPECT_GT(out.o(k), 0.0);
      EXPECT_LT(out.o(k), 1.0);
      EXPECT_GT(out.g(k), -1.0);
      EXPECT_LT(out.g(k), 1.0);
    }
  }
  EXPECT_THROW(cell_forward(VectorXd::Zero(4), VectorXd::Zero(6), VectorXd::Zero(6), W), ShapeMismatch);
}

TEST(LstmModel, StackedForwardMatchesReference) {
  std::mt19937_64 rng(4);
  const auto model = LstmModel::initialize(2, 5, 4, test_norm(), 9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = random_window(5, rng);
    EXPECT_NEAR(forward_normalized(model, w), ref_forward(model, w), 1e-12);
  }
}

TEST(LstmModel, Initialization) {
  const auto model = LstmModel::initialize(2, 8, 4, test_norm(), 1);
  ASSERT_EQ(model.layers.size(), 2u);
  EXPECT_EQ(model.layers[0].input_dim(), 5);
  EXPECT_EQ(model.layers[1].input_dim(), 8);
  EXPECT_EQ(model.parameter_count(), size_t{4 * 8 * (5 + 8 + 1) + 4 * 8 * (8 + 8 + 1) + 8 + 1});
  const double bound = 1.0 / std::sqrt(8.0);
  for (const auto& l : model.layers) {
    EXPECT_LE(l.W.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.U.cwiseAbs().maxCoeff(), bound);
    EXPECT_TRUE((l.bias(Gate::forget).array() == 1.0).all());
  }
  EXPECT_THROW(LstmModel::initialize(0, 8, 4, test_norm(), 1), ConfigError);
}

TEST(LstmModel, OneStepIsPureAndChecksShape) {
  std::mt19937_64 rng(2);
  const auto model = LstmModel::initialize(1, 4, 4, test_norm(), 3);
  const auto w = random_window(5, rng);
  const double a = predict_one_step(model, w);
  EXPECT_EQ(a, predict_one_step(model, w));
  EXPECT_DOUBLE_EQ(a, test_norm().denormalize(0, forward_normalized(model, w)));
  EXPECT_THROW(predict_one_step(model, random_window(4, rng)), ShapeMismatch);
}

History random_history(const LstmModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  History h;
  for (int k = 0; k < model.lag; ++k)
    h.past.push_back({-700.0 + 100 * u(rng), 10 * u(rng), 2 * u(rng), 0.5 + 0.3 * u(rng), 1.0 + 2 * u(rng)});
  h.current_head = -650.0;
  return h;
}

std::vector<StepInputs> random_future(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<StepInputs> f(n);
  for (auto& s : f) s = {14 * u(rng), 3 * u(rng), 0.5 + 0.3 * u(rng), 1.0 + 2 * u(rng)};
  return f;
}

TEST(LstmModel, RecursionBaseCase) {
  std::mt19937_64 rng(6);
  const auto model = LstmModel::initialize(1, 4, 4, test_norm(), 3);
  const auto h = random_history(model, rng);
  const auto f = random_future(1, rng);
  std::vector<Row> w;
  for (const auto& r : h.past) w.push_back(model.norm.normalize(r));
  w.push_back(model.norm.normalize(Row{h.current_head, f[0].irrigation, f[0].rain, f[0].kc, f[0].et0}));
  const auto x = predict_recursive(model, h, f);
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0], predict_one_step(model, w));
}

TEST(LstmModel, RecursionHandUnrolled) {
  std::mt19937_64 rng(7);
  const auto model = LstmModel::initialize(2, 4, 2, test_norm(), 3);
  const auto h = random_history(model, rng);
  const auto f = random_future(3, rng);
  auto row = [&](double x, const StepInputs& s) { return Row{x, s.irrigation, s.rain, s.kc, s.et0}; };
  auto nw = [&](std::vector<Row> raw) {
    for (auto& r : raw) r = model.norm.normalize(r);
    return raw;
  };
  const double x1 = predict_one_step(model, nw({h.past[0], h.past[1], row(h.current_head, f[0])}));
  const double x2 = predict_one_step(model, nw({h.past[1], row(h.current_head, f[0]), row(x1, f[1])}));
  const double x3 = predict_one_step(model, nw({row(h.current_head, f[0]), row(x1, f[1]), row(x2, f[2])}));
  const auto x = predict_recursive(model, h, f);
  ASSERT_EQ(x.size(), 3u);
  EXPECT_NEAR(x[0], x1, 1e-9);
  EXPECT_NEAR(x[1], x2, 1e-9);
  EXPECT_NEAR(x[2], x3, 1e-9);
  History bad = h;
  bad.past.pop_back();
  EXPECT_THROW(predict_recursive(model, bad, f), ShapeMismatch);
}

TEST(LstmGradient, ParametersMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto model = LstmModel::initialize(1, 4, 3, test_norm(), 17);
  std::vector<std::vector<Row>> windows;
  std::vector<double> targets;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 10; ++s) {
    windows.push_back(random_window(4, rng));
    targets.push_back(u(rng));
  }
  auto total = [&](const LstmModel& m) {
    auto g = LstmGradients::zeros_like(m);
    double l = 0.0;
    for (size_t s = 0; s < windows.size(); ++s) l += loss_and_gradient(m, windows[s], targets[s], g);
    return std::make_pair(l, g);
  };
  auto [l0, grads] = total(model);
  const auto gp = parameter_pointers(grads);
  const auto pp = parameter_pointers(model);
  ASSERT_EQ(gp.size(), model.parameter_count());
  const double step = 1e-5;
  double worst = 0.0;
  for (size_t p = 0; p < pp.size(); ++p) {
    const double keep = *pp[p];
    *pp[p] = keep + step;
    const double lp = total(model).first;
    *pp[p] = keep - step;
    const double lm = total(model).first;
    *pp[p] = keep;
    const double fd = (lp - lm) / (2 * step);
    const double denom = std::max({std::abs(fd), std::abs(*gp[p]), 1e-6});
    worst = std::max(worst, std::abs(fd - *gp[p]) / denom);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LstmGradient, StackedParametersMatchFiniteDifferences) {
  std::mt19937_64 rng(22);
  auto model = LstmModel::initialize(2, 3, 2, test_norm(), 19);
  const auto w = random_window(3, rng);
  auto grads = LstmGradients::zeros_like(model);
  loss_and_gradient(model, w, 0.3, grads);
  const auto gp = parameter_pointers(grads);
  const auto pp = parameter_pointers(model);
  double worst = 0.0;
  for (size_t p = 0; p < pp.size(); ++p) {
    const double keep = *pp[p];
    auto g = LstmGradients::zeros_like(model);
    *pp[p] = keep + 1e-5;
    const double lp = loss_and_gradient(model, w, 0.3, g);
    *pp[p] = keep - 1e-5;
    const double lm = loss_and_gradient(model, w, 0.3, g);
    *pp[p] = keep;
    const double fd = (lp - lm) / 2e-5;
    worst = std::max(worst, std::abs(fd - *gp[p]) / std::max({std::abs(fd), std::abs(*gp[p]), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LstmGradient, InputJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int layers : {1, 2}) {
    const auto model = LstmModel::initialize(layers, 5, 4, test_norm(), 40 + layers);
    const auto h = random_history(model, rng);
    const auto f = random_future(5, rng);
    const auto J = input_gradient(model, h, f);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      auto fp = f, fm = f;
      const double step = 1e-4;
      fp[k].irrigation += step;
      fm[k].irrigation -= step;
      const auto xp = predict_recursive(model, h, fp), xm = predict_recursive(model, h, fm);
      for (int j = 0; j < 5; ++j) {
        const double fd = (xp[j] - xm[j]) / (2 * step);
        if (k > j) {
          EXPECT_EQ(J[j][k], 0.0) << j << " " << k;
          EXPECT_EQ(xp[j], xm[j]);
        } else {
          worst = std::max(worst, std::abs(fd - J[j][k]) / std::max({std::abs(fd), std::abs(J[j][k]), 1e-6}));
        }
      }
    }
    EXPECT_LT(worst, 1e-4) << layers;
  }
}

TEST(LstmGradient, VectorJacobianProductIsWeightedSum) {
  std::mt19937_64 rng(32);
  const auto model = LstmModel::initialize(1, 6, 4, test_norm(), 3);
  const auto h = random_history(model, rng);
  const auto f = random_future(7, rng);
  const auto J = input_gradient(model, h, f);
  std::vector<double> w = {0.3, -1.0, 2.0, 0.0, 0.7, 1.5, -0.2};
  std::vector<double> heads;
  const auto g = irrigation_vjp(model, h, f, w, &heads);
  const auto x = predict_recursive(model, h, f);
  for (int k = 0; k < 7; ++k) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += w[j] * J[j][k];
    EXPECT_NEAR(g[k], s, 1e-10 * std::max(1.0, std::abs(s)));
    EXPECT_EQ(heads[k], x[k]);
  }
  EXPECT_THROW(irrigation_vjp(model, h, f, std::vector<double>(3, 1.0)), ShapeMismatch);
}

TEST(LstmGradient, DeadIrrigationInput) {
  auto model = LstmModel::initialize(1, 4, 4, test_norm(), 3);
  model.layers[0].W.col(1).setZero();
  std::mt19937_64 rng(5);
  const auto J = input_gradient(model, random_history(model, rng), random_future(1, rng));
  EXPECT_EQ(J[0][0], 0.0);
}

std::vector<DailyRecord> constant_records(int n, double head) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DailyRecord> r;
  for (int d = 0; d < n; ++d) r.push_back({d, head, 10 * u(rng), 3 * u(rng), 1 + 2 * u(rng), 0.5 + 0.3 * u(rng)});
  return r;
}

TEST(LstmTraining, LearnsConstantSeries) {
  const auto ds = build_supervised(constant_records(300, -420.0), 4);
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.max_epochs = 200;
  cfg.learning_rate = 1e-2;
  const auto res = train(ds, cfg);
  EXPECT_LE(res.history.size(), 200u);
  EXPECT_LT(split_loss(res.model, ds, Split::val), 1e-6);
  const auto w = ds.normalized_window(ds.window_ends(Split::test).front());
  EXPECT_NEAR(predict_one_step(res.model, w), -420.0, 1e-2);
}

SupervisedDataset wavy_dataset() {
  std::vector<DailyRecord> r;
  for (int d = 0; d < 200; ++d)
    r.push_back({d, -500.0 + 60.0 * std::sin(0.2 * d), d % 4 == 0 ? 9.0 : 0.0, 0.0, 2.0, 0.7});
  return build_supervised(r, 4);
}

TEST(LstmTraining, DeterministicAndBestValidation) {
  const auto ds = wavy_dataset();
  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.max_epochs = 40;
  cfg.patience = 5;
  const auto a = train(ds, cfg);
  const auto b = train(ds, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train, b.history[e].train);
    EXPECT_EQ(a.history[e].val, b.history[e].val);
  }
  const double returned = split_loss(a.model, ds, Split::val);
  for (const auto& e : a.history) EXPECT_LE(returned, e.val * (1 + 1e-12));
  EXPECT_EQ(returned, a.history[a.best_epoch - 1].val);
}

TEST(LstmTraining, RejectsBadConfig) {
  const auto ds = wavy_dataset();
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
}

TEST(LstmTraining, DivergenceIsReported) {
  const auto ds = wavy_dataset();
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.learning_rate = 1e300;
  cfg.max_epochs = 5;
  EXPECT_THROW(train(ds, cfg), Diverged);
}

TEST(LstmModel, SaveLoadBitIdentical) {
  std::mt19937_64 rng(12);
  const auto model = LstmModel::initialize(2, 5, 4, test_norm(), 77);
  const auto path = (std::filesystem::temp_directory_path() / "irrig_lstm_test.json").string();
  model.save(path);
  const auto back = LstmModel::load(path);
  std::remove(path.c_str());
  for (int k = 0; k < 10; ++k) {
    const auto w = random_window(5, rng);
    EXPECT_EQ(predict_one_step(model, w), predict_one_step(back, w));
  }
  EXPECT_EQ(back.lag, 4);
  EXPECT_EQ(back.norm.min, model.norm.min);
  EXPECT_THROW(LstmModel::load("/nonexistent/model.json"), ConfigError);
}

}  // namespace
}  // namespace irrig

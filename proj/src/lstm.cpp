#include "irrig/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "irrig/errors.hpp"

namespace irrig {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

LstmLayerWeights LstmLayerWeights::zeros(int input_dim, int hidden_dim) {
  return {MatrixXd::Zero(4 * hidden_dim, input_dim), MatrixXd::Zero(4 * hidden_dim, hidden_dim),
          VectorXd::Zero(4 * hidden_dim)};
}

CellOutput cell_forward(const VectorXd& m, const VectorXd& h_prev, const VectorXd& C_prev,
                        const LstmLayerWeights& W) {
  const int H = W.hidden_dim();
  if (m.size() != W.input_dim() || h_prev.size() != H || C_prev.size() != H)
    throw ShapeMismatch("cell_forward: inconsistent shapes");
  const VectorXd a = W.W * m + W.U * h_prev + W.b;
  CellOutput out;
  out.i = a.segment(0, H).unaryExpr(&sigmoid);
  out.f = a.segment(H, H).unaryExpr(&sigmoid);
  out.o = a.segment(2 * H, H).unaryExpr(&sigmoid);
  out.g = a.segment(3 * H, H).array().tanh();
  out.C = out.f.cwiseProduct(C_prev) + out.i.cwiseProduct(out.g);
  out.h = out.o.cwiseProduct(out.C.array().tanh().matrix());
  return out;
}

// --- model ------------------------------------------------------------------

size_t LstmModel::parameter_count() const {
  size_t n = static_cast<size_t>(w_y.size()) + 1;
  for (const auto& l : layers) n += l.W.size() + l.U.size() + l.b.size();
  return n;
}

LstmModel LstmModel::initialize(int num_layers, int hidden, int lag, const Normalization& norm,
                                std::uint64_t seed) {
  if (num_layers < 1 || hidden < 1 || lag < 0) throw ConfigError("lstm: invalid architecture");
  LstmModel m;
  m.lag = lag;
  m.norm = norm;
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](auto& mat) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c)
      for (Eigen::Index r = 0; r < mat.rows(); ++r) mat(r, c) = dist(rng);
  };
  for (int l = 0; l < num_layers; ++l) {
    auto w = LstmLayerWeights::zeros(l == 0 ? kChannels : hidden, hidden);
    fill(w.W);
    fill(w.U);
    fill(w.b);
    w.bias(Gate::forget).setConstant(1.0);
    m.layers.push_back(std::move(w));
  }
  m.w_y = MatrixXd(1, hidden);
  fill(m.w_y);
  m.b_y = 0.0;
  return m;
}

// --- forward / backward through one window ----------------------------------

namespace {

struct LayerTape {
  std::vector<VectorXd> in;    // T inputs
  std::vector<VectorXd> h, C;  // T + 1 states, index 0 is the zero state
  std::vector<VectorXd> i, f, o, g;
  VectorXd a;  // gate preactivations, scratch
};

struct WindowTape {
  std::vector<LayerTape> layers;
  double y = 0.0;  // normalized output
};

void run_forward(const LstmModel& model, std::span<const Row> window, WindowTape& tape) {
  const int T = static_cast<int>(window.size());
  tape.layers.resize(model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const auto& W = model.layers[l];
    const int H = W.hidden_dim();
    LayerTape& lt = tape.layers[l];
    lt.in.resize(T);
    lt.h.resize(T + 1);
    lt.C.resize(T + 1);
    lt.i.resize(T);
    lt.f.resize(T);
    lt.o.resize(T);
    lt.g.resize(T);
    lt.h[0].setZero(H);
    lt.C[0].setZero(H);
    lt.a.resize(4 * H);
    for (int t = 0; t < T; ++t) {
      if (l == 0) {
        lt.in[t] = Eigen::Map<const VectorXd>(window[t].data(), kChannels);
      } else {
        lt.in[t] = tape.layers[l - 1].h[t + 1];
      }
      lt.a.noalias() = W.W * lt.in[t];
      lt.a.noalias() += W.U * lt.h[t];
      lt.a += W.b;
      lt.i[t] = 1.0 / (1.0 + (-lt.a.segment(0, H).array()).exp());
      lt.f[t] = 1.0 / (1.0 + (-lt.a.segment(H, H).array()).exp());
      lt.o[t] = 1.0 / (1.0 + (-lt.a.segment(2 * H, H).array()).exp());
      lt.g[t] = lt.a.segment(3 * H, H).array().tanh();
      lt.C[t + 1] = lt.f[t].cwiseProduct(lt.C[t]) + lt.i[t].cwiseProduct(lt.g[t]);
      lt.h[t + 1] = lt.o[t].array() * lt.C[t + 1].array().tanh();
    }
  }
  tape.y = model.w_y.row(0).dot(tape.layers.back().h[T]) + model.b_y;
}

// Reverse sweep for output adjoint dy. Accumulates parameter gradients when
// grads != nullptr and returns d(output)/d(window rows) scaled by dy.
std::vector<Row> run_backward(const LstmModel& model, const WindowTape& tape, double dy,
                              LstmGradients* grads) {
  const int L = static_cast<int>(model.layers.size());
  const int T = static_cast<int>(tape.layers.front().in.size());
  const int Hm = model.hidden_dim();
  std::vector<VectorXd> dh_ext(T, VectorXd::Zero(Hm)), din(T);
  dh_ext[T - 1] = model.w_y.row(0).transpose() * dy;
  if (grads) {
    grads->w_y += dy * tape.layers.back().h[T].transpose();
    grads->b_y += dy;
  }
  std::vector<Row> drows(T);
  VectorXd dh, dC, tc, dh_next, dC_next, da;
  for (int l = L - 1; l >= 0; --l) {
    const auto& W = model.layers[l];
    const auto& lt = tape.layers[l];
    const int H = W.hidden_dim();
    dh_next.setZero(H);
    dC_next.setZero(H);
    da.resize(4 * H);
    for (int t = T - 1; t >= 0; --t) {
      dh = dh_ext[t] + dh_next;
      tc = lt.C[t + 1].array().tanh();
      const auto o = lt.o[t].array(), i = lt.i[t].array(), f = lt.f[t].array(), g = lt.g[t].array();
      dC = dC_next.array() + dh.array() * o * (1.0 - tc.array() * tc.array());
      da.segment(0, H) = dC.array() * g * i * (1.0 - i);
      da.segment(H, H) = dC.array() * lt.C[t].array() * f * (1.0 - f);
      da.segment(2 * H, H) = dh.array() * tc.array() * o * (1.0 - o);
      da.segment(3 * H, H) = dC.array() * i * (1.0 - g * g);
      if (grads) {
        auto& gw = grads->layers[l];
        gw.W.noalias() += da * lt.in[t].transpose();
        gw.U.noalias() += da * lt.h[t].transpose();
        gw.b += da;
      }
      din[t].noalias() = W.W.transpose() * da;
      dh_next.noalias() = W.U.transpose() * da;
      dC_next = dC.cwiseProduct(lt.f[t]);
    }
    if (l > 0) {
      std::swap(dh_ext, din);
    } else {
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < kChannels; ++c) drows[t][c] = din[t](c);
    }
  }
  return drows;
}

}  // namespace

double forward_normalized(const LstmModel& model, std::span<const Row> window) {
  if (static_cast<int>(window.size()) != model.window_length())
    throw ShapeMismatch("window length " + std::to_string(window.size()) + " does not match lag + 1 = " +
                        std::to_string(model.window_length()));
  WindowTape tape;
  run_forward(model, window, tape);
  return tape.y;
}

double predict_one_step(const LstmModel& model, std::span<const Row> window) {
  return model.norm.denormalize(0, forward_normalized(model, window));
}

// --- recursive rollout -------------------------------------------------------

namespace {

void check_history(const LstmModel& model, const History& history) {
  if (static_cast<int>(history.past.size()) != model.lag)
    throw ShapeMismatch("history holds " + std::to_string(history.past.size()) + " past days, model lag is " +
                        std::to_string(model.lag));
}

// Normalized rows of the whole rollout timeline: lag past rows, then one row
// per future day (its head filled in as predictions become available).
std::vector<Row> timeline(const LstmModel& model, const History& history,
                          std::span<const StepInputs> future) {
  std::vector<Row> rows;
  rows.reserve(history.past.size() + future.size());
  for (const auto& r : history.past) rows.push_back(model.norm.normalize(r));
  for (size_t k = 0; k < future.size(); ++k) {
    const auto& s = future[k];
    rows.push_back(model.norm.normalize(Row{k == 0 ? history.current_head : 0.0, s.irrigation, s.rain, s.kc, s.et0}));
  }
  return rows;
}

}  // namespace

std::vector<double> predict_recursive(const LstmModel& model, const History& history,
                                      std::span<const StepInputs> future) {
  check_history(model, history);
  auto rows = timeline(model, history, future);
  const int l = model.lag;
  std::vector<double> heads(future.size());
  WindowTape tape;
  for (size_t j = 0; j < future.size(); ++j) {
    run_forward(model, std::span<const Row>(rows.data() + j, l + 1), tape);
    heads[j] = model.norm.denormalize(0, tape.y);
    if (j + 1 < future.size()) rows[l + j + 1][0] = tape.y;
  }
  return heads;
}

std::vector<double> irrigation_vjp(const LstmModel& model, const History& history,
                                   std::span<const StepInputs> future, std::span<const double> weights,
                                   std::vector<double>* heads) {
  if (weights.size() != future.size()) throw ShapeMismatch("irrigation_vjp: weights must match the horizon");
  const std::vector<double> w(weights.begin(), weights.end());
  return irrigation_vjp(model, history, future, [&w](const std::vector<double>&) { return w; }, heads);
}

std::vector<double> irrigation_vjp(const LstmModel& model, const History& history,
                                   std::span<const StepInputs> future, const HeadWeights& weights_of,
                                   std::vector<double>* heads) {
  check_history(model, history);
  const size_t N = future.size();
  auto rows = timeline(model, history, future);
  const int l = model.lag;
  std::vector<WindowTape> tapes(N);
  std::vector<double> x(N);
  for (size_t j = 0; j < N; ++j) {
    run_forward(model, std::span<const Row>(rows.data() + j, l + 1), tapes[j]);
    x[j] = model.norm.denormalize(0, tapes[j].y);
    if (j + 1 < N) rows[l + j + 1][0] = tapes[j].y;
  }
  const std::vector<double> weights = weights_of(x);
  if (weights.size() != N) throw ShapeMismatch("irrigation_vjp: weights must match the horizon");
  if (heads) *heads = std::move(x);

  const double sx = model.norm.scale(0), su = model.norm.scale(1);
  // adjoint of each normalized output y_j
  std::vector<double> ay(N);
  for (size_t j = 0; j < N; ++j) ay[j] = weights[j] * sx;
  std::vector<double> du(N, 0.0);
  for (size_t jj = N; jj-- > 0;) {
    if (ay[jj] == 0.0) continue;
    const auto drows = run_backward(model, tapes[jj], ay[jj], nullptr);
    for (int t = 0; t <= l; ++t) {
      const int q = static_cast<int>(jj) + t;  // timeline row
      if (q >= l + 1) ay[q - l - 1] += drows[t][0];  // head fed back from an earlier prediction
      if (q >= l) du[q - l] += drows[t][1] / su;
    }
  }
  return du;
}

MatrixXd irrigation_jacobian(const LstmModel& model, const History& history, std::span<const StepInputs> future,
                             std::vector<double>* heads) {
  check_history(model, history);
  const int N = static_cast<int>(future.size());
  auto rows = timeline(model, history, future);
  const int l = model.lag;
  std::vector<WindowTape> tapes(N);
  for (int j = 0; j < N; ++j) {
    run_forward(model, std::span<const Row>(rows.data() + j, l + 1), tapes[j]);
    if (j + 1 < N) rows[l + j + 1][0] = tapes[j].y;
  }
  if (heads) {
    heads->resize(N);
    for (int j = 0; j < N; ++j) (*heads)[j] = model.norm.denormalize(0, tapes[j].y);
  }
  const double sx = model.norm.scale(0), su = model.norm.scale(1);
  MatrixXd J = MatrixXd::Zero(N, N);
  std::vector<double> ay(N);
  for (int j = 0; j < N; ++j) {
    std::fill(ay.begin(), ay.end(), 0.0);
    ay[j] = sx;
    for (int jj = j; jj >= 0; --jj) {
      if (ay[jj] == 0.0) continue;
      const auto drows = run_backward(model, tapes[jj], ay[jj], nullptr);
      for (int t = 0; t <= l; ++t) {
        const int q = jj + t;
        if (q >= l + 1) ay[q - l - 1] += drows[t][0];
        if (q >= l) J(j, q - l) += drows[t][1] / su;
      }
    }
  }
  return J;
}

std::vector<std::vector<double>> input_gradient(const LstmModel& model, const History& history,
                                                std::span<const StepInputs> future) {
  const MatrixXd J = irrigation_jacobian(model, history, future);
  std::vector<std::vector<double>> out(J.rows(), std::vector<double>(J.cols()));
  for (Eigen::Index j = 0; j < J.rows(); ++j)
    for (Eigen::Index k = 0; k < J.cols(); ++k) out[j][k] = J(j, k);
  return out;
}

// --- training ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && epsilon > 0))
    throw ConfigError("train: optimizer hyperparameters out of range");
  if (batch_size < 1 || max_epochs < 1 || patience < 1 || layers < 1 || hidden < 1)
    throw ConfigError("train: batch size, epochs, patience, layers and hidden must be positive");
}

LstmGradients LstmGradients::zeros_like(const LstmModel& m) {
  LstmGradients g;
  for (const auto& l : m.layers) g.layers.push_back(LstmLayerWeights::zeros(l.input_dim(), l.hidden_dim()));
  g.w_y = MatrixXd::Zero(1, m.hidden_dim());
  return g;
}

namespace {

template <typename Layers>
void collect(Layers& layers, auto& wy, auto& by, std::vector<double*>& out) {
  for (auto& l : layers) {
    for (Eigen::Index k = 0; k < l.W.size(); ++k) out.push_back(l.W.data() + k);
    for (Eigen::Index k = 0; k < l.U.size(); ++k) out.push_back(l.U.data() + k);
    for (Eigen::Index k = 0; k < l.b.size(); ++k) out.push_back(l.b.data() + k);
  }
  for (Eigen::Index k = 0; k < wy.size(); ++k) out.push_back(wy.data() + k);
  out.push_back(&by);
}

}  // namespace

std::vector<double*> parameter_pointers(LstmModel& m) {
  std::vector<double*> p;
  collect(m.layers, m.w_y, m.b_y, p);
  return p;
}

std::vector<double*> parameter_pointers(LstmGradients& g) {
  std::vector<double*> p;
  collect(g.layers, g.w_y, g.b_y, p);
  return p;
}

double loss_and_gradient(const LstmModel& model, std::span<const Row> window, double target,
                         LstmGradients& grads) {
  if (static_cast<int>(window.size()) != model.window_length()) throw ShapeMismatch("window length mismatch");
  WindowTape tape;
  run_forward(model, window, tape);
  const double e = tape.y - target;
  run_backward(model, tape, 2.0 * e, &grads);
  return e * e;
}

double split_loss(const LstmModel& model, const SupervisedDataset& ds, Split split) {
  const auto ends = ds.window_ends(split);
  if (ends.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (int e : ends) {
    const auto w = ds.normalized_window(e);
    const double d = forward_normalized(model, w) - ds.normalized_target(e);
    s += d * d;
  }
  return s / static_cast<double>(ends.size());
}

TrainResult train(const SupervisedDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const auto ends = ds.window_ends(Split::train);
  if (ends.empty()) throw InsufficientData("train: training split holds no window");
  const bool has_val = !ds.window_ends(Split::val).empty();

  // Pre-normalized windows.
  std::vector<std::vector<Row>> windows;
  std::vector<double> targets;
  for (int e : ends) {
    windows.push_back(ds.normalized_window(e));
    targets.push_back(ds.normalized_target(e));
  }

  TrainResult result;
  LstmModel model = LstmModel::initialize(cfg.layers, cfg.hidden, ds.lag, ds.norm, cfg.seed);
  auto params = parameter_pointers(model);
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<size_t> order(windows.size());
  std::iota(order.begin(), order.end(), size_t{0});

  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;
  result.model = model;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      LstmGradients grads = LstmGradients::zeros_like(model);
      for (size_t k = start; k < stop; ++k)
        train_sum += loss_and_gradient(model, windows[order[k]], targets[order[k]], grads);
      const double inv = 1.0 / static_cast<double>(stop - start);
      auto gp = parameter_pointers(grads);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t p = 0; p < params.size(); ++p) {
        const double g = *gp[p] * inv;
        m1[p] = cfg.beta1 * m1[p] + (1.0 - cfg.beta1) * g;
        m2[p] = cfg.beta2 * m2[p] + (1.0 - cfg.beta2) * g * g;
        *params[p] -= cfg.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + cfg.epsilon);
      }
    }
    const double train_loss = train_sum / static_cast<double>(windows.size());
    if (!std::isfinite(train_loss)) throw Diverged("training loss became non-finite at epoch " + std::to_string(epoch));
    const double val_loss = has_val ? split_loss(model, ds, Split::val) : train_loss;
    result.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

// --- serialization ------------------------------------------------------------
//
// {"format": "irrig-lstm", "version": 1, "lag": l, "channels": [...],
//  "normalization": {"min": [5], "max": [5]},
//  "layers": [{"input_dim": D, "hidden_dim": H, "W": [...], "U": [...], "b": [...]}],
//  "w_y": [H], "b_y": b}
// Matrices are stored column-major.

namespace {

std::vector<double> flat(const MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

MatrixXd unflat(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw ConfigError("model file: matrix size mismatch");
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

}  // namespace

void LstmModel::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "irrig-lstm";
  j["version"] = 1;
  j["lag"] = lag;
  j["channels"] = std::vector<std::string>(kChannelNames.begin(), kChannelNames.end());
  j["normalization"] = {{"min", norm.min}, {"max", norm.max}};
  auto& ls = j["layers"] = nlohmann::json::array();
  for (const auto& l : layers)
    ls.push_back({{"input_dim", l.input_dim()}, {"hidden_dim", l.hidden_dim()}, {"W", flat(l.W)},
                  {"U", flat(l.U)}, {"b", flat(l.b)}});
  j["w_y"] = flat(w_y);
  j["b_y"] = b_y;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model " + path);
  out << j.dump() << '\n';
}

LstmModel LstmModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model " + path);
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != "irrig-lstm" || j.value("version", 0) != 1)
      throw ConfigError("model " + path + ": unsupported format or version");
    LstmModel m;
    m.lag = j.at("lag").get<int>();
    m.norm.min = j.at("normalization").at("min").get<Row>();
    m.norm.max = j.at("normalization").at("max").get<Row>();
    int expected_in = kChannels;
    for (const auto& l : j.at("layers")) {
      const int D = l.at("input_dim").get<int>(), H = l.at("hidden_dim").get<int>();
      if (D != expected_in) throw ConfigError("model " + path + ": layer input dimension mismatch");
      LstmLayerWeights w;
      w.W = unflat(l.at("W"), 4 * H, D);
      w.U = unflat(l.at("U"), 4 * H, H);
      w.b = unflat(l.at("b"), 4 * H, 1);
      m.layers.push_back(std::move(w));
      expected_in = H;
    }
    if (m.layers.empty()) throw ConfigError("model " + path + ": no layers");
    m.w_y = unflat(j.at("w_y"), 1, m.hidden_dim());
    m.b_y = j.at("b_y").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model " + path + ": " + e.what());
  }
}

}  // namespace irrig

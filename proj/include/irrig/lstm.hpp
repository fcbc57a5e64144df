#pragma once

// From-scratch LSTM surrogate of the root-zone head: stacked layers, a linear
// read-out of the last hidden state, BPTT training with Adam, recursive
// multi-step prediction and reverse-mode gradients with respect to the
// irrigation inputs of a rollout.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "irrig/datagen.hpp"

namespace irrig {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Gate { input = 0, forget = 1, output = 2, cell = 3 };

/// Gate parameters stacked in [input, forget, output, cell] order.
struct LstmLayerWeights {
  MatrixXd W;  ///< (4H x D) input-to-gate
  MatrixXd U;  ///< (4H x H) hidden-to-gate
  VectorXd b;  ///< (4H)

  int input_dim() const { return static_cast<int>(W.cols()); }
  int hidden_dim() const { return static_cast<int>(U.cols()); }

  auto w(Gate g) { return W.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto w(Gate g) const { return W.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto u(Gate g) { return U.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto u(Gate g) const { return U.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto bias(Gate g) { return b.segment(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto bias(Gate g) const { return b.segment(static_cast<int>(g) * hidden_dim(), hidden_dim()); }

  static LstmLayerWeights zeros(int input_dim, int hidden_dim);
};

struct CellOutput {
  VectorXd h, C;
  VectorXd i, f, o, g;  ///< gate activations and cell candidate
};

CellOutput cell_forward(const VectorXd& m, const VectorXd& h_prev, const VectorXd& C_prev,
                        const LstmLayerWeights& W);

struct LstmModel {
  std::vector<LstmLayerWeights> layers;
  MatrixXd w_y;  ///< (1 x H)
  double b_y = 0.0;
  int lag = 4;
  Normalization norm;

  int hidden_dim() const { return layers.empty() ? 0 : layers.back().hidden_dim(); }
  int window_length() const { return lag + 1; }
  size_t parameter_count() const;

  /// Uniform in +-1/sqrt(H); forget-gate bias +1.
  static LstmModel initialize(int layers, int hidden, int lag, const Normalization& norm, std::uint64_t seed);

  void save(const std::string& path) const;
  static LstmModel load(const std::string& path);
};

/// Normalized network output for a normalized window (zero initial state).
double forward_normalized(const LstmModel& model, std::span<const Row> window);

/// Denormalized head for a normalized (lag + 1) x 5 window. Throws ShapeMismatch.
double predict_one_step(const LstmModel& model, std::span<const Row> window);

/// One future day of model inputs other than the head.
struct StepInputs {
  double irrigation = 0.0;
  double rain = 0.0;
  double kc = 0.0;
  double et0 = 0.0;
};

/// Raw (denormalized) history: `past` holds the lag days before the current
/// one (head at their start plus their inputs); `current_head` is the measured
/// head at the start of the current day.
struct History {
  std::vector<Row> past;
  double current_head = 0.0;
};

/// Heads at the end of each of the future.size() days.
std::vector<double> predict_recursive(const LstmModel& model, const History& history,
                                      std::span<const StepInputs> future);

/// sum_j weights[j] * d x_j / d u_k for every k (one reverse sweep).
std::vector<double> irrigation_vjp(const LstmModel& model, const History& history,
                                   std::span<const StepInputs> future, std::span<const double> weights,
                                   std::vector<double>* heads = nullptr);

/// As above with the weights computed from the predicted heads by one call of
/// weights_of between the forward and the reverse sweep.
using HeadWeights = std::function<std::vector<double>(const std::vector<double>& heads)>;
std::vector<double> irrigation_vjp(const LstmModel& model, const History& history,
                                   std::span<const StepInputs> future, const HeadWeights& weights_of,
                                   std::vector<double>* heads = nullptr);

/// Jacobian J(j, k) = d x_j / d u_k of the N predicted heads (one forward
/// pass, N reverse sweeps); heads receives the rollout.
MatrixXd irrigation_jacobian(const LstmModel& model, const History& history, std::span<const StepInputs> future,
                             std::vector<double>* heads = nullptr);

/// Jacobian J[j][k] = d x_j / d u_k of the N predicted heads.
std::vector<std::vector<double>> input_gradient(const LstmModel& model, const History& history,
                                                std::span<const StepInputs> future);

// --- training ---------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 400;
  int patience = 40;
  int layers = 1;
  int hidden = 32;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EpochLoss {
  int epoch = 0;
  double train = 0.0;
  double val = 0.0;
};

struct TrainResult {
  LstmModel model;
  std::vector<EpochLoss> history;
  int best_epoch = 0;
};

/// Same shapes as the model; used for parameter gradients.
struct LstmGradients {
  std::vector<LstmLayerWeights> layers;
  MatrixXd w_y;
  double b_y = 0.0;

  static LstmGradients zeros_like(const LstmModel& m);
};

/// Squared-error loss of one normalized window and its parameter gradient
/// (accumulated into grads).
double loss_and_gradient(const LstmModel& model, std::span<const Row> window, double target,
                         LstmGradients& grads);

/// Mean squared error over the windows of a split (normalized units).
double split_loss(const LstmModel& model, const SupervisedDataset& ds, Split split);

/// Throws Diverged when the training loss becomes non-finite.
TrainResult train(const SupervisedDataset& ds, const TrainConfig& cfg);

/// Flat parameter view (gradient checking).
std::vector<double*> parameter_pointers(LstmModel& m);
std::vector<double*> parameter_pointers(LstmGradients& g);

}  // namespace irrig

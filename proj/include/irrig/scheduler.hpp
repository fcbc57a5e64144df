#pragma once

// Zone-MPC irrigation scheduling over a learned head model: cost evaluation
// with the slacks eliminated, a box-constrained continuous solver, exact
// branch-and-bound over the on/off decisions and the sigmoid homotopy.
//
// Every solver works on a CoupledProblem: one or more management zones, each
// with its own model and target zone, whose irrigation days are switched by a
// shared vector of binaries. A single field is the one-zone case.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "irrig/lstm.hpp"

namespace irrig {

/// Target interval of the root-zone head and its violation weights.
struct ZoneSpec {
  double nu_lo = -820.0;  ///< [mm]
  double nu_hi = -690.0;  ///< [mm]
  double q_lo = 9000.0;
  double q_hi = 9000.0;

  void validate() const;
  /// Q_hi * max(0, x - nu_hi)^2 + Q_lo * max(0, nu_lo - x)^2
  double penalty(double x) const;
  double penalty_slope(double x) const;
  double penalty_curvature(double x) const;
};

/// Head dynamics seen by the scheduler.
class HeadModel {
 public:
  virtual ~HeadModel() = default;
  virtual int lag() const = 0;
  virtual std::vector<double> predict(const History& history, std::span<const StepInputs> future) const = 0;
  /// Heads of the rollout and J(j, k) = dx_j/du_k.
  virtual MatrixXd jacobian(const History& history, std::span<const StepInputs> future,
                            std::vector<double>& heads) const = 0;
};

class LstmHeadModel : public HeadModel {
 public:
  explicit LstmHeadModel(std::shared_ptr<const LstmModel> model) : model_(std::move(model)) {}
  int lag() const override { return model_->lag; }
  std::vector<double> predict(const History& history, std::span<const StepInputs> future) const override;
  MatrixXd jacobian(const History& history, std::span<const StepInputs> future,
                    std::vector<double>& heads) const override;
  const LstmModel& model() const { return *model_; }

 private:
  std::shared_ptr<const LstmModel> model_;
};

/// x_{k+1} = a x_k + b u_k + g rain_k - e kc_k et0_k + f, starting from the
/// current head; lag 0. A stand-in with closed-form optima for testing.
class LinearHeadModel : public HeadModel {
 public:
  double a = 1.0, b = 5.0, g = 5.0, e = 10.0, f = 0.0;
  int lag() const override { return 0; }
  std::vector<double> predict(const History& history, std::span<const StepInputs> future) const override;
  MatrixXd jacobian(const History& history, std::span<const StepInputs> future,
                    std::vector<double>& heads) const override;
};

/// Exogenous inputs of one forecast day.
struct ForecastDay {
  double rain = 0.0;
  double kc = 0.5;
  double et0 = 2.0;
};

/// Solved decisions, amounts and predictions for one zone.
struct Schedule {
  std::vector<int> c;
  std::vector<double> u;
  std::vector<double> x;
  double cost = 0.0;
  double zone_cost = 0.0;
  double fixed_cost = 0.0;
  double volume_cost = 0.0;

  int events() const;
  double volume() const;
};

// --- single-field problem -----------------------------------------------------

struct ScheduleProblem {
  std::shared_ptr<const HeadModel> model;
  int day = 0;
  int horizon = 14;
  History history;
  std::vector<ForecastDay> forecast;  ///< at least `horizon` days, the first is the current day
  ZoneSpec zone;
  double r_c = 50.0;
  double r_u = 20.0;
  double u_lo = 1.4;
  double u_hi = 15.6;

  void validate() const;
};

/// Projected Gauss-Newton iterations on the free variables with a projected
/// line search; stops when the projected-gradient infinity norm falls below
/// the tolerance.
struct InnerSettings {
  int max_iterations = 100;
  double tolerance = 1e-6;
  int multistarts = 3;      ///< starts at the midpoint, u_lo, u_hi (fewer uses a prefix)
};

struct SigmoidConfig {
  double beta0 = 5.0;
  double tau = 2.0;
  double zeta = 1e-2;
  double r_min = -1.0;
  double r_max = 1.0;
  int max_iterations = 12;
  bool polish = true;  ///< single-flip descent after rounding
  InnerSettings inner;

  void validate() const;
};

/// Cost of (c, u) and the predicted heads; c_k = 0 requires u_k = 0.
Schedule evaluate_cost(const ScheduleProblem& p, const std::vector<int>& c, const std::vector<double>& u);

struct ContinuousResult {
  Schedule schedule;
  bool stalled = false;  ///< no start improved on its initial cost
  int iterations = 0;
};

ContinuousResult solve_continuous(const ScheduleProblem& p, const std::vector<int>& c,
                                  const InnerSettings& settings = {});

inline constexpr int kExactMaxHorizon = 14;

struct MixedIntegerResult {
  Schedule schedule;
  long leaves = 0;  ///< continuous solves performed
  long nodes = 0;
  bool stalled = false;
};

/// Depth-first branch and bound. Throws HorizonTooLong when N > max_horizon.
MixedIntegerResult solve_mixed_integer(const ScheduleProblem& p, const InnerSettings& settings = {},
                                       int max_horizon = kExactMaxHorizon);

/// Every binary vector solved with solve_continuous (reference for tests).
MixedIntegerResult enumerate_mixed_integer(const ScheduleProblem& p, const InnerSettings& settings = {});

double sigmoid(double r, double beta);

struct SigmoidSolution {
  std::vector<double> r;
  std::vector<double> s;  ///< position of u within [u_lo, u_hi] before scaling by omega
  double cost = 0.0;      ///< relaxed cost
  bool stalled = false;
};

struct HomotopyStep {
  double beta = 0.0;
  double relaxed_cost = 0.0;
  double distance = 0.0;  ///< ||omega(r) - round(omega(r))||_2
};

struct HomotopyResult {
  Schedule schedule;
  std::vector<HomotopyStep> trace;
  bool converged = false;
};

/// Relaxed solve at fixed beta from a warm start (empty vectors: default start).
SigmoidSolution solve_sigmoid(const ScheduleProblem& p, double beta, const SigmoidSolution& warm,
                              const SigmoidConfig& cfg = {});

HomotopyResult beta_homotopy(const ScheduleProblem& p, const SigmoidConfig& cfg = {});

// --- coupled multi-zone core --------------------------------------------------

struct ZoneModel {
  std::shared_ptr<const HeadModel> model;
  History history;
  std::vector<double> kc;  ///< per horizon day
  ZoneSpec zone;
  double u_lo = 1.4;
  double u_hi = 15.6;
};

struct CoupledProblem {
  std::vector<ZoneModel> zones;
  int horizon = 14;
  std::vector<double> rain, et0;  ///< shared, per horizon day
  int binaries = 0;
  /// slot[j][k]: binary that switches zone j on day k, -1 when it cannot irrigate.
  std::vector<std::vector<int>> slot;
  /// per binary: -1 free, 0 or 1 fixed
  std::vector<int> fixed;
  double r_c = 50.0;
  double r_u = 20.0;

  void validate() const;
};

struct CoupledSchedule {
  std::vector<int> c;             ///< the binaries
  std::vector<Schedule> zones;    ///< per zone, costs exclude the shared fixed cost
  double cost = 0.0;
  double zone_cost = 0.0;
  double fixed_cost = 0.0;
  double volume_cost = 0.0;
  bool stalled = false;

  int events() const;
};

CoupledSchedule evaluate_coupled(const CoupledProblem& p, const std::vector<int>& c,
                                 const std::vector<std::vector<double>>& u);
CoupledSchedule solve_continuous_coupled(const CoupledProblem& p, const std::vector<int>& c,
                                         const InnerSettings& settings, int* iterations = nullptr);

struct CoupledExactResult {
  CoupledSchedule schedule;
  long leaves = 0;
  long nodes = 0;
};

CoupledExactResult solve_exact_coupled(const CoupledProblem& p, const InnerSettings& settings);
CoupledExactResult enumerate_coupled(const CoupledProblem& p, const InnerSettings& settings);

struct CoupledSigmoid {
  std::vector<double> r;               ///< per binary
  std::vector<std::vector<double>> s;  ///< per zone and day
  double cost = 0.0;
  bool stalled = false;
};

CoupledSigmoid solve_sigmoid_coupled(const CoupledProblem& p, double beta, const CoupledSigmoid& warm,
                                     const SigmoidConfig& cfg);

struct CoupledHomotopyResult {
  CoupledSchedule schedule;
  std::vector<HomotopyStep> trace;
  bool converged = false;
};

CoupledHomotopyResult homotopy_coupled(const CoupledProblem& p, const SigmoidConfig& cfg);

/// One-zone coupled form of a single-field problem.
CoupledProblem to_coupled(const ScheduleProblem& p);

/// Schedule as CSV `day,c,u_mm,x_pred_mm`.
void write_schedule_csv(const std::string& path, const Schedule& s, int first_day);

}  // namespace irrig

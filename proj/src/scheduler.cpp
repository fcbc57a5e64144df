#include "irrig/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>

#include "irrig/errors.hpp"

namespace irrig {

// --- zone ---------------------------------------------------------------------

void ZoneSpec::validate() const {
  if (!(nu_lo < nu_hi)) throw ConfigError("zone: nu_lo must be below nu_hi");
  if (!(q_lo >= 0.0 && q_hi >= 0.0)) throw ConfigError("zone: violation costs must be >= 0");
}

double ZoneSpec::penalty(double x) const {
  const double over = std::max(0.0, x - nu_hi), under = std::max(0.0, nu_lo - x);
  return q_hi * over * over + q_lo * under * under;
}

double ZoneSpec::penalty_slope(double x) const {
  return 2.0 * q_hi * std::max(0.0, x - nu_hi) - 2.0 * q_lo * std::max(0.0, nu_lo - x);
}

double ZoneSpec::penalty_curvature(double x) const {
  if (x > nu_hi) return 2.0 * q_hi;
  if (x < nu_lo) return 2.0 * q_lo;
  return 0.0;
}

int Schedule::events() const { return static_cast<int>(std::count(c.begin(), c.end(), 1)); }

double Schedule::volume() const {
  double v = 0.0;
  for (double a : u) v += a;
  return v;
}

int CoupledSchedule::events() const { return static_cast<int>(std::count(c.begin(), c.end(), 1)); }

// --- head models --------------------------------------------------------------

std::vector<double> LstmHeadModel::predict(const History& history, std::span<const StepInputs> future) const {
  return predict_recursive(*model_, history, future);
}

MatrixXd LstmHeadModel::jacobian(const History& history, std::span<const StepInputs> future,
                                 std::vector<double>& heads) const {
  return irrigation_jacobian(*model_, history, future, &heads);
}

std::vector<double> LinearHeadModel::predict(const History& history, std::span<const StepInputs> future) const {
  std::vector<double> x(future.size());
  double h = history.current_head;
  for (size_t k = 0; k < future.size(); ++k) {
    const auto& s = future[k];
    h = a * h + b * s.irrigation + g * s.rain - e * s.kc * s.et0 + f;
    x[k] = h;
  }
  return x;
}

MatrixXd LinearHeadModel::jacobian(const History& history, std::span<const StepInputs> future,
                                   std::vector<double>& heads) const {
  heads = predict(history, future);
  const int n = static_cast<int>(future.size());
  MatrixXd J = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = b;
    for (int k = j; k >= 0; --k, d *= a) J(j, k) = d;
  }
  return J;
}

// --- validation ---------------------------------------------------------------

void ScheduleProblem::validate() const {
  if (!model) throw ConfigError("schedule: no head model");
  if (horizon < 1) throw ConfigError("schedule: horizon must be >= 1");
  if (static_cast<int>(history.past.size()) != model->lag())
    throw ShapeMismatch("schedule: history must hold lag = " + std::to_string(model->lag()) + " past days");
  if (static_cast<int>(forecast.size()) < horizon)
    throw ForecastExhausted("schedule: forecast covers " + std::to_string(forecast.size()) + " of " +
                            std::to_string(horizon) + " horizon days");
  if (!(u_lo > 0.0 && u_lo <= u_hi)) throw ConfigError("schedule: need 0 < u_lo <= u_hi");
  if (!(r_c >= 0.0 && r_u >= 0.0)) throw ConfigError("schedule: costs must be >= 0");
  zone.validate();
}

void SigmoidConfig::validate() const {
  if (!(beta0 > 0.0)) throw ConfigError("sigmoid: beta0 must be > 0");
  if (!(tau > 1.0)) throw ConfigError("sigmoid: tau must be > 1");
  if (!(zeta > 0.0)) throw ConfigError("sigmoid: zeta must be > 0");
  if (!(r_min < 0.0 && r_max > 0.0)) throw ConfigError("sigmoid: need r_min < 0 < r_max");
  if (max_iterations < 1 || inner.max_iterations < 0 || inner.multistarts < 1)
    throw ConfigError("sigmoid: iteration counts must be positive");
}

void CoupledProblem::validate() const {
  if (zones.empty()) throw ConfigError("field: no management zones");
  if (horizon < 1) throw ConfigError("field: horizon must be >= 1");
  if (static_cast<int>(rain.size()) < horizon || static_cast<int>(et0.size()) < horizon)
    throw ForecastExhausted("field: weather forecast shorter than the horizon");
  if (slot.size() != zones.size() || static_cast<int>(fixed.size()) != binaries)
    throw ShapeMismatch("field: slot map and binaries are inconsistent");
  for (size_t j = 0; j < zones.size(); ++j) {
    const auto& z = zones[j];
    if (!z.model) throw ConfigError("field: zone " + std::to_string(j) + " has no model");
    if (static_cast<int>(z.history.past.size()) != z.model->lag())
      throw ShapeMismatch("field: zone " + std::to_string(j) + " history does not match the model lag");
    if (static_cast<int>(z.kc.size()) < horizon) throw ForecastExhausted("field: kc series shorter than the horizon");
    if (!(z.u_lo > 0.0 && z.u_lo <= z.u_hi)) throw ConfigError("field: need 0 < u_lo <= u_hi");
    z.zone.validate();
    if (static_cast<int>(slot[j].size()) != horizon) throw ShapeMismatch("field: slot row length != horizon");
    for (int b : slot[j])
      if (b < -1 || b >= binaries) throw ShapeMismatch("field: slot refers to an unknown binary");
  }
  for (int v : fixed)
    if (v < -1 || v > 1) throw ConfigError("field: fixed binaries must be -1, 0 or 1");
  if (!(r_c >= 0.0 && r_u >= 0.0)) throw ConfigError("field: costs must be >= 0");
}

CoupledProblem to_coupled(const ScheduleProblem& p) {
  p.validate();
  CoupledProblem cp;
  ZoneModel z;
  z.model = p.model;
  z.history = p.history;
  z.zone = p.zone;
  z.u_lo = p.u_lo;
  z.u_hi = p.u_hi;
  cp.horizon = p.horizon;
  for (int k = 0; k < p.horizon; ++k) {
    z.kc.push_back(p.forecast[k].kc);
    cp.rain.push_back(p.forecast[k].rain);
    cp.et0.push_back(p.forecast[k].et0);
  }
  cp.zones.push_back(std::move(z));
  cp.binaries = p.horizon;
  cp.slot.assign(1, std::vector<int>(p.horizon));
  for (int k = 0; k < p.horizon; ++k) cp.slot[0][k] = k;
  cp.fixed.assign(p.horizon, -1);
  cp.r_c = p.r_c;
  cp.r_u = p.r_u;
  return cp;
}

// --- evaluation ---------------------------------------------------------------

namespace {

std::vector<StepInputs> zone_inputs(const CoupledProblem& p, size_t j, const std::vector<double>& u) {
  std::vector<StepInputs> in(p.horizon);
  for (int k = 0; k < p.horizon; ++k) in[k] = {u[k], p.rain[k], p.zones[j].kc[k], p.et0[k]};
  return in;
}

std::vector<int> zone_decisions(const CoupledProblem& p, size_t j, const std::vector<int>& c) {
  std::vector<int> d(p.horizon, 0);
  for (int k = 0; k < p.horizon; ++k)
    if (p.slot[j][k] >= 0) d[k] = c[p.slot[j][k]];
  return d;
}

CoupledSchedule assemble(const CoupledProblem& p, const std::vector<int>& c, const std::vector<std::vector<double>>& u,
                         std::vector<std::vector<double>> heads) {
  CoupledSchedule s;
  s.c = c;
  for (size_t j = 0; j < p.zones.size(); ++j) {
    Schedule z;
    z.c = zone_decisions(p, j, c);
    z.u = u[j];
    z.x = std::move(heads[j]);
    for (int k = 0; k < p.horizon; ++k) {
      z.zone_cost += p.zones[j].zone.penalty(z.x[k]);
      z.volume_cost += p.r_u * z.u[k];
    }
    z.cost = z.zone_cost + z.volume_cost;
    s.zone_cost += z.zone_cost;
    s.volume_cost += z.volume_cost;
    s.zones.push_back(std::move(z));
  }
  s.fixed_cost = p.r_c * s.events();
  s.cost = s.zone_cost + s.fixed_cost + s.volume_cost;
  return s;
}

}  // namespace

CoupledSchedule evaluate_coupled(const CoupledProblem& p, const std::vector<int>& c,
                                 const std::vector<std::vector<double>>& u) {
  if (static_cast<int>(c.size()) != p.binaries || u.size() != p.zones.size())
    throw ShapeMismatch("evaluate: decision shapes do not match the problem");
  std::vector<std::vector<double>> heads;
  for (size_t j = 0; j < p.zones.size(); ++j) {
    if (static_cast<int>(u[j].size()) != p.horizon) throw ShapeMismatch("evaluate: u length != horizon");
    for (int k = 0; k < p.horizon; ++k) {
      const int b = p.slot[j][k];
      const bool on = b >= 0 && c[b] == 1;
      if (!on && u[j][k] != 0.0)
        throw ConfigError("evaluate: irrigation on day " + std::to_string(k) + " without an event");
      if (on && (u[j][k] < p.zones[j].u_lo || u[j][k] > p.zones[j].u_hi))
        throw ConfigError("evaluate: irrigation on day " + std::to_string(k) + " outside [u_lo, u_hi]");
    }
    const auto in = zone_inputs(p, j, u[j]);
    heads.push_back(p.zones[j].model->predict(p.zones[j].history, in));
  }
  return assemble(p, c, u, std::move(heads));
}

Schedule evaluate_cost(const ScheduleProblem& p, const std::vector<int>& c, const std::vector<double>& u) {
  const auto cp = to_coupled(p);
  if (static_cast<int>(c.size()) != p.horizon || static_cast<int>(u.size()) != p.horizon)
    throw ShapeMismatch("evaluate_cost: c and u must have horizon length");
  const auto s = evaluate_coupled(cp, c, {u});
  Schedule out = s.zones[0];
  out.fixed_cost = s.fixed_cost;
  out.cost = s.cost;
  return out;
}

// --- projected Gauss-Newton ---------------------------------------------------

namespace {

/// Cost at z; when `full` is set also its gradient and a positive
/// semidefinite curvature model.
struct Derivatives {
  VectorXd g;
  MatrixXd H;
};
using Objective = std::function<double(const VectorXd& z, Derivatives* full)>;

struct NewtonResult {
  VectorXd z;
  double f = 0.0;
  int iterations = 0;
  bool moved = false;
};

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

VectorXd project(const VectorXd& z, const VectorXd& lo, const VectorXd& hi) { return z.cwiseMax(lo).cwiseMin(hi); }

/// Two-metric projected Newton: Newton step on the variables off their
/// bounds, scaled gradient steps on the rest, Armijo search along the
/// projection arc. H must be positive semidefinite.
NewtonResult projected_newton(const Objective& fn, VectorXd z, const VectorXd& lo, const VectorXd& hi,
                              const InnerSettings& s) {
  z = project(z, lo, hi);
  const Eigen::Index n = z.size();
  Derivatives d;
  double f = fn(z, &d);
  NewtonResult res;
  for (int it = 0; it < s.max_iterations; ++it) {
    const VectorXd pg = z - project(z - d.g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= s.tolerance) break;
    const double eps = std::min(1e-3, pg.norm());
    std::vector<Eigen::Index> fr;
    VectorXd dir = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = z(i) <= lo(i) + eps && d.g(i) > 0.0, at_hi = z(i) >= hi(i) - eps && d.g(i) < 0.0;
      if (at_lo || at_hi)
        dir(i) = -d.g(i) / std::max(d.H(i, i), 1e-6 * (1.0 + d.g.cwiseAbs().maxCoeff()));
      else
        fr.push_back(i);
    }
    if (!fr.empty()) {
      const Eigen::Index m = static_cast<Eigen::Index>(fr.size());
      MatrixXd Hf(m, m);
      VectorXd gf(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        gf(a) = d.g(fr[a]);
        for (Eigen::Index b = 0; b < m; ++b) Hf(a, b) = d.H(fr[a], fr[b]);
      }
      double mu = 1e-10 * (1.0 + Hf.diagonal().cwiseAbs().maxCoeff());
      Eigen::LLT<MatrixXd> llt;
      for (;; mu *= 10.0) {
        llt.compute(Hf + mu * MatrixXd::Identity(m, m));
        if (llt.info() == Eigen::Success) break;
      }
      const VectorXd df = llt.solve(-gf);
      for (Eigen::Index a = 0; a < m; ++a) dir(fr[a]) = df(a);
    }
    bool accepted = false;
    VectorXd zn;
    double fnew = 0.0;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      zn = project(z + t * dir, lo, hi);
      const double decrease = d.g.dot(zn - z);
      if (!(decrease < 0.0)) continue;
      fnew = fn(zn, nullptr);
      if (fnew <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double drop = f - fnew;
    fnew = fn(zn, &d);
    z = std::move(zn);
    f = fnew;
    res.moved = true;
    res.iterations = it + 1;
    if (drop <= 1e-9 * (1.0 + std::abs(f))) break;
  }
  res.z = std::move(z);
  res.f = f;
  return res;
}

struct Slot {
  int zone, day;
};

}  // namespace

// --- continuous solve for fixed binaries ----------------------------------------

namespace {

/// Zone penalties of heads linearized as y = y0 + A d plus a linear cost;
/// convex and piecewise quadratic in d.
struct PenaltyModel {
  VectorXd y0;
  MatrixXd A;
  std::vector<const ZoneSpec*> zone;
  VectorXd lin;

  double value(const VectorXd& d) const {
    const VectorXd y = y0 + A * d;
    double f = lin.dot(d);
    for (Eigen::Index r = 0; r < y.size(); ++r) f += zone[r]->penalty(y(r));
    return f;
  }
};

/// Projects onto the box; entries within rounding of a bound land on it.
VectorXd snap(VectorXd z, const VectorXd& lo, const VectorXd& hi) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double tol = 1e-12 * (1.0 + std::abs(lo(i)) + std::abs(hi(i)));
    z(i) = std::clamp(z(i), lo(i), hi(i));
    if (z(i) - lo(i) <= tol) z(i) = lo(i);
    if (hi(i) - z(i) <= tol) z(i) = hi(i);
  }
  return z;
}

/// Minimizes the model over lo <= d <= hi from d = 0: projected Newton steps
/// with an exact line search over the breakpoints of the piecewise quadratic.
VectorXd minimize_model(const PenaltyModel& m, const VectorXd& lo, const VectorXd& hi) {
  const Eigen::Index n = lo.size(), rows = m.y0.size();
  VectorXd d = VectorXd::Zero(n);
  int stalls = 0;
  for (int it = 0; it < 200; ++it) {
    const VectorXd y = m.y0 + m.A * d;
    VectorXd s1(rows), s2(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      s1(r) = m.zone[r]->penalty_slope(y(r));
      // rows sitting on an edge keep the curvature of the outer piece
      const ZoneSpec& zr = *m.zone[r];
      const double band = 1e-9 * (1.0 + std::abs(zr.nu_lo) + std::abs(zr.nu_hi));
      s2(r) = y(r) >= zr.nu_hi - band ? 2.0 * zr.q_hi : y(r) <= zr.nu_lo + band ? 2.0 * zr.q_lo : 0.0;
    }
    const VectorXd g = m.lin + m.A.transpose() * s1;
    std::vector<Eigen::Index> freev;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = d(i) <= lo(i) && g(i) > 0.0, at_hi = d(i) >= hi(i) && g(i) < 0.0;
      if (!at_lo && !at_hi) freev.push_back(i);
    }
    VectorXd p;
    double tmax = 0.0;
    // drop variables on a bound that the Newton step would push outward
    while (!freev.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(freev.size());
      MatrixXd Af(rows, nf);
      VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        Af.col(a) = m.A.col(freev[a]);
        gf(a) = g(freev[a]);
      }
      MatrixXd H = Af.transpose() * s2.asDiagonal() * Af;
      H.diagonal().array() += 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
      VectorXd pf = H.ldlt().solve(-gf);
      if (!pf.allFinite() || pf.dot(gf) >= 0.0) pf = -gf;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = freev[a];
        if (!((d(i) <= lo(i) && pf(a) < 0.0) || (d(i) >= hi(i) && pf(a) > 0.0))) keep.push_back(i);
      }
      if (keep.size() < freev.size()) {
        freev = std::move(keep);
        continue;
      }
      p = VectorXd::Zero(n);
      tmax = std::numeric_limits<double>::infinity();
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = freev[a];
        p(i) = pf(a);
        if (p(i) > 0.0) tmax = std::min(tmax, (hi(i) - d(i)) / p(i));
        if (p(i) < 0.0) tmax = std::min(tmax, (lo(i) - d(i)) / p(i));
      }
      break;
    }
    if (freev.empty() || g.dot(p) >= -1e-300) break;
    tmax = std::max(tmax, 0.0);
    // phi'(t) = lin.p + sum_r slope_r(y_r + t a_r) a_r is piecewise linear and nondecreasing
    const VectorXd a = m.A * p;
    const double c0 = m.lin.dot(p);
    std::vector<double> knots{0.0};
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (a(r) == 0.0) continue;
      for (double edge : {m.zone[r]->nu_lo, m.zone[r]->nu_hi}) {
        const double t = (edge - y(r)) / a(r);
        if (t > 0.0 && t < tmax) knots.push_back(t);
      }
    }
    std::sort(knots.begin(), knots.end());
    knots.push_back(tmax);
    double t = tmax;
    for (size_t q = 0; q + 1 < knots.size(); ++q) {
      const double ta = knots[q], tb = knots[q + 1], mid = 0.5 * (ta + tb);
      double slope = c0, curv = 0.0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (a(r) == 0.0) continue;
        slope += m.zone[r]->penalty_slope(y(r) + ta * a(r)) * a(r);
        curv += m.zone[r]->penalty_curvature(y(r) + (std::isfinite(mid) ? mid : ta + 1.0) * a(r)) * a(r) * a(r);
      }
      if (slope >= 0.0) {
        t = ta;
        break;
      }
      if (curv > 0.0 && ta - slope / curv <= tb) {
        t = ta - slope / curv;
        break;
      }
    }
    if (!std::isfinite(t)) break;
    const VectorXd next = snap(d + t * p, lo, hi);
    stalls = (next - d).lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + d.lpNorm<Eigen::Infinity>()) ? stalls + 1 : 0;
    if (stalls >= 3) break;
    d = next;
  }
  return d;
}

}  // namespace

CoupledSchedule solve_continuous_coupled(const CoupledProblem& p, const std::vector<int>& c,
                                         const InnerSettings& settings, int* iterations) {
  if (static_cast<int>(c.size()) != p.binaries) throw ShapeMismatch("solve_continuous: c length != binaries");
  std::vector<Slot> vars;
  std::vector<double> lov, hiv;
  std::vector<std::vector<int>> index(p.zones.size(), std::vector<int>(p.horizon, -1));
  for (size_t j = 0; j < p.zones.size(); ++j)
    for (int k = 0; k < p.horizon; ++k) {
      const int b = p.slot[j][k];
      if (b >= 0 && c[b] == 1) {
        index[j][k] = static_cast<int>(vars.size());
        vars.push_back({static_cast<int>(j), k});
        lov.push_back(p.zones[j].u_lo);
        hiv.push_back(p.zones[j].u_hi);
      }
    }
  std::vector<std::vector<double>> u(p.zones.size(), std::vector<double>(p.horizon, 0.0));
  if (iterations) *iterations = 0;
  if (vars.empty()) return evaluate_coupled(p, c, u);
  const Eigen::Index n = static_cast<Eigen::Index>(vars.size());
  const VectorXd lo = Eigen::Map<const VectorXd>(lov.data(), n), hi = Eigen::Map<const VectorXd>(hiv.data(), n);

  std::vector<size_t> active;
  for (size_t j = 0; j < p.zones.size(); ++j)
    if (std::any_of(index[j].begin(), index[j].end(), [](int a) { return a >= 0; })) active.push_back(j);
  const Eigen::Index rows = static_cast<Eigen::Index>(active.size()) * p.horizon;
  // Zones without free amounts contribute a constant.
  double constant = p.r_c * static_cast<double>(std::count(c.begin(), c.end(), 1));
  for (size_t j = 0; j < p.zones.size(); ++j)
    if (std::find(active.begin(), active.end(), j) == active.end()) {
      const auto x = p.zones[j].model->predict(p.zones[j].history, zone_inputs(p, j, u[j]));
      for (double h : x) constant += p.zones[j].zone.penalty(h);
    }

  auto amounts = [&](const VectorXd& z) {
    auto uu = u;
    for (Eigen::Index i = 0; i < n; ++i) uu[vars[i].zone][vars[i].day] = z(i);
    return uu;
  };
  auto cost = [&](const VectorXd& z) {
    const auto uu = amounts(z);
    double f = constant + p.r_u * z.sum();
    for (size_t j : active)
      for (double h : p.zones[j].model->predict(p.zones[j].history, zone_inputs(p, j, uu[j])))
        f += p.zones[j].zone.penalty(h);
    return f;
  };
  PenaltyModel m;
  m.lin = VectorXd::Constant(n, p.r_u);
  m.zone.resize(rows);
  for (size_t a = 0; a < active.size(); ++a)
    for (int k = 0; k < p.horizon; ++k) m.zone[a * p.horizon + k] = &p.zones[active[a]].zone;
  // heads and their sensitivities at z; returns the cost
  auto linearize = [&](const VectorXd& z) {
    const auto uu = amounts(z);
    m.y0.resize(rows);
    m.A = MatrixXd::Zero(rows, n);
    for (size_t a = 0; a < active.size(); ++a) {
      const auto& zm = p.zones[active[a]];
      std::vector<double> x;
      const MatrixXd J = zm.model->jacobian(zm.history, zone_inputs(p, active[a], uu[active[a]]), x);
      for (int r = 0; r < p.horizon; ++r) {
        const Eigen::Index row = static_cast<Eigen::Index>(a) * p.horizon + r;
        m.y0(row) = x[r];
        for (int k = 0; k <= r; ++k)
          if (index[active[a]][k] >= 0) m.A(row, index[active[a]][k]) = J(r, k);
      }
    }
    return constant + p.r_u * z.sum() + m.value(VectorXd::Zero(n));
  };

  VectorXd best_z;
  double best_f = std::numeric_limits<double>::infinity();
  bool any_moved = false;
  int iters = 0;
  const int starts = std::min(3, settings.multistarts);
  for (int st = 0; st < starts; ++st) {
    VectorXd z = st == 0 ? VectorXd(0.5 * (lo + hi)) : st == 1 ? lo : hi;
    double f = linearize(z);
    for (int it = 0; it < settings.max_iterations; ++it) {
      VectorXd s1(rows);
      for (Eigen::Index r = 0; r < rows; ++r) s1(r) = m.zone[r]->penalty_slope(m.y0(r));
      const VectorXd g = m.lin + m.A.transpose() * s1;
      if ((z - (z - g).cwiseMax(lo).cwiseMin(hi)).lpNorm<Eigen::Infinity>() <= settings.tolerance) break;
      const VectorXd d = minimize_model(m, lo - z, hi - z);
      const double slope = g.dot(d);
      if (!(slope < 0.0) || d.lpNorm<Eigen::Infinity>() <= 1e-9) break;
      bool accepted = false;
      VectorXd zn;
      for (double t = 1.0; t > 1e-10; t *= 0.5) {
        zn = snap(z + t * d, lo, hi);
        const double fn = cost(zn);
        if (fn < f && fn <= f + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      z = std::move(zn);
      const double prev = f;
      f = linearize(z);
      any_moved = true;
      ++iters;
      if (prev - f <= 1e-9 * (1.0 + std::abs(f))) break;
    }
    if (f < best_f) {
      best_f = f;
      best_z = z;
    }
  }
  if (iterations) *iterations = iters;
  for (Eigen::Index i = 0; i < n; ++i) u[vars[i].zone][vars[i].day] = clamp(best_z(i), lo(i), hi(i));
  auto s = evaluate_coupled(p, c, u);
  s.stalled = !any_moved;
  return s;
}

ContinuousResult solve_continuous(const ScheduleProblem& p, const std::vector<int>& c,
                                  const InnerSettings& settings) {
  const auto cp = to_coupled(p);
  ContinuousResult r;
  auto s = solve_continuous_coupled(cp, c, settings, &r.iterations);
  r.stalled = s.stalled;
  r.schedule = s.zones[0];
  r.schedule.fixed_cost = s.fixed_cost;
  r.schedule.cost = s.cost;
  return r;
}

// --- exact solve over binaries --------------------------------------------------

namespace {

double tie_tolerance(double cost) { return 1e-9 * (1.0 + std::abs(cost)); }

/// Lower cost first; within tolerance fewer events, then earlier events.
bool better(const CoupledSchedule& a, const CoupledSchedule& b) {
  const double tol = tie_tolerance(std::min(std::abs(a.cost), std::abs(b.cost)));
  if (a.cost < b.cost - tol) return true;
  if (a.cost > b.cost + tol) return false;
  if (a.events() != b.events()) return a.events() < b.events();
  return a.c > b.c;  // an event on an earlier binary compares greater
}

class ExactSearch {
 public:
  ExactSearch(const CoupledProblem& p, const InnerSettings& s) : p_(p), s_(s) {
    // Unforced heads: before a zone's first possible event its heads do not
    // depend on any decision, so their violation cost is a valid bound.
    for (size_t j = 0; j < p.zones.size(); ++j) {
      const std::vector<double> zero(p.horizon, 0.0);
      const auto x = p.zones[j].model->predict(p.zones[j].history, zone_inputs(p, j, zero));
      std::vector<double> prefix(p.horizon + 1, 0.0);
      for (int k = 0; k < p.horizon; ++k) prefix[k + 1] = prefix[k] + p.zones[j].zone.penalty(x[k]);
      unforced_prefix_.push_back(std::move(prefix));
    }
    event_floor_.assign(p.binaries, p.r_c);
    for (size_t j = 0; j < p.zones.size(); ++j)
      for (int k = 0; k < p.horizon; ++k)
        if (p.slot[j][k] >= 0) event_floor_[p.slot[j][k]] += p.r_u * p.zones[j].u_lo;
  }

  const CoupledSchedule& leaf(const std::vector<int>& c) {
    auto it = memo_.find(c);
    if (it == memo_.end()) {
      it = memo_.emplace(c, solve_continuous_coupled(p_, c, s_)).first;
      ++leaves;
    }
    return it->second;
  }

  void offer(const CoupledSchedule& s) {
    if (!have_ || better(s, best_)) {
      best_ = s;
      have_ = true;
    }
  }

  void greedy() {
    std::vector<int> c(p_.binaries);
    for (int b = 0; b < p_.binaries; ++b) c[b] = p_.fixed[b] == 1 ? 1 : 0;
    CoupledSchedule cur = leaf(c);
    offer(cur);
    for (;;) {
      bool improved = false;
      std::vector<int> pick;
      CoupledSchedule pick_s;
      for (int b = 0; b < p_.binaries; ++b) {
        if (p_.fixed[b] != -1 || c[b] == 1) continue;
        auto t = c;
        t[b] = 1;
        const auto& s = leaf(t);
        offer(s);
        if (better(s, improved ? pick_s : cur)) {
          pick = t;
          pick_s = s;
          improved = true;
        }
      }
      if (!improved) break;
      c = pick;
      cur = pick_s;
    }
  }

  double bound(const std::vector<int>& c) const {
    double lb = 0.0;
    for (int b = 0; b < p_.binaries; ++b)
      if (c[b] == 1) lb += event_floor_[b];
    for (size_t j = 0; j < p_.zones.size(); ++j) {
      int first = p_.horizon;
      for (int k = 0; k < p_.horizon; ++k) {
        const int b = p_.slot[j][k];
        if (b >= 0 && c[b] != 0) {
          first = k;
          break;
        }
      }
      lb += unforced_prefix_[j][first];
    }
    return lb;
  }

  void branch(std::vector<int>& c, int b) {
    ++nodes;
    if (have_ && bound(c) > best_.cost + tie_tolerance(best_.cost)) return;
    while (b < p_.binaries && p_.fixed[b] != -1) ++b;
    if (b == p_.binaries) {
      offer(leaf(c));
      return;
    }
    for (int v : {0, 1}) {
      c[b] = v;
      branch(c, b + 1);
    }
    c[b] = -1;
  }

  CoupledExactResult run() {
    greedy();
    std::vector<int> c(p_.fixed);
    branch(c, 0);
    return {best_, leaves, nodes};
  }

  long leaves = 0;
  long nodes = 0;

 private:
  const CoupledProblem& p_;
  InnerSettings s_;
  std::map<std::vector<int>, CoupledSchedule> memo_;
  std::vector<std::vector<double>> unforced_prefix_;
  std::vector<double> event_floor_;
  CoupledSchedule best_;
  bool have_ = false;
};

}  // namespace

CoupledExactResult solve_exact_coupled(const CoupledProblem& p, const InnerSettings& settings) {
  p.validate();
  ExactSearch search(p, settings);
  return search.run();
}

CoupledExactResult enumerate_coupled(const CoupledProblem& p, const InnerSettings& settings) {
  p.validate();
  std::vector<int> free;
  for (int b = 0; b < p.binaries; ++b)
    if (p.fixed[b] == -1) free.push_back(b);
  if (free.size() > 20) throw HorizonTooLong("enumeration over more than 20 binaries");
  CoupledExactResult r;
  bool have = false;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << free.size()); ++mask) {
    std::vector<int> c(p.fixed);
    for (size_t i = 0; i < free.size(); ++i) c[free[i]] = (mask >> i) & 1 ? 1 : 0;
    auto s = solve_continuous_coupled(p, c, settings);
    ++r.leaves;
    if (!have || better(s, r.schedule)) {
      r.schedule = std::move(s);
      have = true;
    }
  }
  r.nodes = r.leaves;
  return r;
}

namespace {

MixedIntegerResult single_field(const CoupledExactResult& r) {
  MixedIntegerResult out;
  out.schedule = r.schedule.zones[0];
  out.schedule.fixed_cost = r.schedule.fixed_cost;
  out.schedule.cost = r.schedule.cost;
  out.leaves = r.leaves;
  out.nodes = r.nodes;
  out.stalled = r.schedule.stalled;
  return out;
}

}  // namespace

MixedIntegerResult solve_mixed_integer(const ScheduleProblem& p, const InnerSettings& settings, int max_horizon) {
  if (p.horizon > max_horizon)
    throw HorizonTooLong("exact solve limited to horizons <= " + std::to_string(max_horizon) + " days, got " +
                         std::to_string(p.horizon));
  return single_field(solve_exact_coupled(to_coupled(p), settings));
}

MixedIntegerResult enumerate_mixed_integer(const ScheduleProblem& p, const InnerSettings& settings) {
  return single_field(enumerate_coupled(to_coupled(p), settings));
}

// --- sigmoid relaxation -----------------------------------------------------------

double sigmoid(double r, double beta) {
  const double v = beta * r;
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

CoupledSigmoid solve_sigmoid_coupled(const CoupledProblem& p, double beta, const CoupledSigmoid& warm,
                                     const SigmoidConfig& cfg) {
  cfg.validate();
  if (!(beta > 0.0)) throw ConfigError("sigmoid: beta must be > 0");
  // variables: r of every free binary, then s of every slot whose binary is not fixed off
  std::vector<int> rvar(p.binaries, -1);
  std::vector<double> lov, hiv;
  for (int b = 0; b < p.binaries; ++b)
    if (p.fixed[b] == -1) {
      rvar[b] = static_cast<int>(lov.size());
      lov.push_back(cfg.r_min);
      hiv.push_back(cfg.r_max);
    }
  const int nr = static_cast<int>(lov.size());
  std::vector<Slot> svars;
  std::vector<std::vector<int>> sidx(p.zones.size(), std::vector<int>(p.horizon, -1));
  for (size_t j = 0; j < p.zones.size(); ++j)
    for (int k = 0; k < p.horizon; ++k) {
      const int b = p.slot[j][k];
      if (b >= 0 && p.fixed[b] != 0) {
        sidx[j][k] = static_cast<int>(lov.size());
        svars.push_back({static_cast<int>(j), k});
        lov.push_back(0.0);
        hiv.push_back(1.0);
      }
    }
  const Eigen::Index n = static_cast<Eigen::Index>(lov.size());
  const VectorXd lo = Eigen::Map<const VectorXd>(lov.data(), n), hi = Eigen::Map<const VectorXd>(hiv.data(), n);
  double fixed_on = 0.0;
  for (int v : p.fixed) fixed_on += v == 1 ? p.r_c : 0.0;

  auto omega_of = [&](const VectorXd& z, int b) {
    if (p.fixed[b] != -1) return static_cast<double>(p.fixed[b]);
    return sigmoid(z(rvar[b]), beta);
  };

  const Objective fn = [&](const VectorXd& z, Derivatives* full) {
    std::vector<double> w(p.binaries), w1(p.binaries, 0.0), w2(p.binaries, 0.0);
    double f = fixed_on;
    for (int b = 0; b < p.binaries; ++b) {
      w[b] = omega_of(z, b);
      if (rvar[b] < 0) continue;
      w1[b] = beta * w[b] * (1.0 - w[b]);
      w2[b] = beta * w1[b] * (1.0 - 2.0 * w[b]);
      f += p.r_c * w[b];
    }
    if (full) {
      full->g = VectorXd::Zero(n);
      full->H = MatrixXd::Zero(n, n);
      for (int b = 0; b < p.binaries; ++b)
        if (rvar[b] >= 0) {
          full->g(rvar[b]) += p.r_c * w1[b];
          full->H(rvar[b], rvar[b]) += std::max(0.0, p.r_c * w2[b]);
        }
    }
    for (size_t j = 0; j < p.zones.size(); ++j) {
      const auto& zm = p.zones[j];
      const double span = zm.u_hi - zm.u_lo;
      std::vector<double> u(p.horizon, 0.0), inner(p.horizon, 0.0);
      for (int k = 0; k < p.horizon; ++k)
        if (sidx[j][k] >= 0) {
          inner[k] = zm.u_lo + z(sidx[j][k]) * span;
          u[k] = w[p.slot[j][k]] * inner[k];
          f += p.r_u * u[k];
        }
      const auto in = zone_inputs(p, j, u);
      if (!full) {
        for (double h : zm.model->predict(zm.history, in)) f += zm.zone.penalty(h);
        continue;
      }
      // du_k/dz: at most one s and one r entry per day
      std::vector<int> si(p.horizon, -1), ri(p.horizon, -1);
      std::vector<double> ds(p.horizon, 0.0), dr(p.horizon, 0.0);
      for (int k = 0; k < p.horizon; ++k) {
        if (sidx[j][k] < 0) continue;
        const int b = p.slot[j][k];
        si[k] = sidx[j][k];
        ds[k] = w[b] * span;
        full->g(si[k]) += p.r_u * ds[k];
        if (rvar[b] >= 0) {
          ri[k] = rvar[b];
          dr[k] = w1[b] * inner[k];
          full->g(ri[k]) += p.r_u * dr[k];
          full->H(ri[k], ri[k]) += std::max(0.0, p.r_u * w2[b] * inner[k]);
        }
      }
      std::vector<double> x;
      const MatrixXd J = zm.model->jacobian(zm.history, in, x);
      VectorXd v(n);
      for (int r = 0; r < p.horizon; ++r) {
        f += zm.zone.penalty(x[r]);
        const double s1 = zm.zone.penalty_slope(x[r]), s2 = zm.zone.penalty_curvature(x[r]);
        if (s1 == 0.0 && s2 == 0.0) continue;
        v.setZero();
        for (int k = 0; k <= r; ++k) {
          if (si[k] >= 0) v(si[k]) += J(r, k) * ds[k];
          if (ri[k] >= 0) v(ri[k]) += J(r, k) * dr[k];
        }
        full->g += s1 * v;
        if (s2 != 0.0) full->H.noalias() += s2 * v * v.transpose();
      }
    }
    return f;
  };

  std::vector<VectorXd> starts;
  const bool warm_ok = warm.r.size() == static_cast<size_t>(p.binaries) && warm.s.size() == p.zones.size();
  if (warm_ok) {
    VectorXd z(n);
    for (int b = 0; b < p.binaries; ++b)
      if (rvar[b] >= 0) z(rvar[b]) = warm.r[b];
    for (const auto& sv : svars) z(sidx[sv.zone][sv.day]) = warm.s[sv.zone][sv.day];
    starts.push_back(std::move(z));
  } else {
    const double r0[3] = {0.0, cfg.r_max, cfg.r_min};
    const double s0[3] = {0.5, 0.0, 0.0};
    for (int st = 0; st < std::min(3, cfg.inner.multistarts); ++st) {
      VectorXd z(n);
      z.head(nr).setConstant(r0[st]);
      z.tail(n - nr).setConstant(s0[st]);
      starts.push_back(std::move(z));
    }
  }
  NewtonResult best;
  bool have = false, moved = false;
  for (const auto& z0 : starts) {
    auto r = projected_newton(fn, z0, lo, hi, cfg.inner);
    moved |= r.moved;
    if (!have || r.f < best.f) {
      best = std::move(r);
      have = true;
    }
  }
  CoupledSigmoid out;
  out.r.assign(p.binaries, 0.0);
  for (int b = 0; b < p.binaries; ++b)
    out.r[b] = rvar[b] >= 0 ? best.z(rvar[b]) : (p.fixed[b] == 1 ? cfg.r_max : cfg.r_min);
  out.s.assign(p.zones.size(), std::vector<double>(p.horizon, 0.0));
  for (const auto& sv : svars) out.s[sv.zone][sv.day] = best.z(sidx[sv.zone][sv.day]);
  out.cost = best.f;
  out.stalled = !moved;
  return out;
}

CoupledHomotopyResult homotopy_coupled(const CoupledProblem& p, const SigmoidConfig& cfg) {
  p.validate();
  cfg.validate();
  CoupledHomotopyResult res;
  CoupledSigmoid sol;
  double beta = cfg.beta0;
  std::vector<int> c(p.binaries, 0);
  for (int i = 0; i < cfg.max_iterations; ++i) {
    sol = solve_sigmoid_coupled(p, beta, sol, cfg);
    double dist2 = 0.0;
    for (int b = 0; b < p.binaries; ++b) {
      const double w = p.fixed[b] != -1 ? p.fixed[b] : sigmoid(sol.r[b], beta);
      c[b] = w >= 0.5 ? 1 : 0;
      dist2 += (w - c[b]) * (w - c[b]);
    }
    res.trace.push_back({beta, sol.cost, std::sqrt(dist2)});
    if (std::sqrt(dist2) <= cfg.zeta) {
      res.converged = true;
      break;
    }
    beta *= cfg.tau;
  }
  res.schedule = solve_continuous_coupled(p, c, cfg.inner);
  if (cfg.polish) {
    // descent over single flips and moves of one event to another slot
    std::vector<int> freeb;
    for (int b = 0; b < p.binaries; ++b)
      if (p.fixed[b] == -1) freeb.push_back(b);
    // moves are screened with a single start; the final pattern gets all starts
    InnerSettings screen = cfg.inner;
    screen.multistarts = 1;
    auto try_move = [&](const std::vector<int>& trial) {
      auto s = solve_continuous_coupled(p, trial, screen);
      if (s.cost < res.schedule.cost - tie_tolerance(res.schedule.cost)) {
        res.schedule = std::move(s);
        return true;
      }
      return false;
    };
    for (bool improved = true; improved;) {
      improved = false;
      for (int b : freeb) {
        auto trial = res.schedule.c;
        trial[b] = 1 - trial[b];
        improved |= try_move(trial);
      }
      if (improved) continue;
      for (int on : freeb)
        for (int off : freeb) {
          if (res.schedule.c[on] != 1 || res.schedule.c[off] != 0 || std::abs(on - off) > 3) continue;
          auto trial = res.schedule.c;
          trial[on] = 0;
          trial[off] = 1;
          improved |= try_move(trial);
        }
    }
    if (cfg.inner.multistarts > 1) {
      auto s = solve_continuous_coupled(p, res.schedule.c, cfg.inner);
      if (s.cost < res.schedule.cost) res.schedule = std::move(s);
    }
  }
  return res;
}

SigmoidSolution solve_sigmoid(const ScheduleProblem& p, double beta, const SigmoidSolution& warm,
                              const SigmoidConfig& cfg) {
  const auto cp = to_coupled(p);
  CoupledSigmoid w;
  if (!warm.r.empty()) {
    if (static_cast<int>(warm.r.size()) != p.horizon || static_cast<int>(warm.s.size()) != p.horizon)
      throw ShapeMismatch("solve_sigmoid: warm start must have horizon length");
    w.r = warm.r;
    w.s = {warm.s};
  }
  const auto r = solve_sigmoid_coupled(cp, beta, w, cfg);
  return {r.r, r.s[0], r.cost, r.stalled};
}

HomotopyResult beta_homotopy(const ScheduleProblem& p, const SigmoidConfig& cfg) {
  const auto r = homotopy_coupled(to_coupled(p), cfg);
  HomotopyResult out;
  out.schedule = r.schedule.zones[0];
  out.schedule.fixed_cost = r.schedule.fixed_cost;
  out.schedule.cost = r.schedule.cost;
  out.trace = r.trace;
  out.converged = r.converged;
  return out;
}

void write_schedule_csv(const std::string& path, const Schedule& s, int first_day) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "day,c,u_mm,x_pred_mm\n" << std::setprecision(10);
  for (size_t k = 0; k < s.c.size(); ++k)
    out << first_day + static_cast<int>(k) << ',' << s.c[k] << ',' << s.u[k] << ',' << s.x[k] << '\n';
}

}  // namespace irrig

#pragma once

#include "common.hpp"

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <vector>

namespace bifurcurve::oracle {

// Radial solutions on the unit disk at eps = 0 come from the scale-invariant
// problem w'' + w'/eta = 1/w^2, w(0) = 1, w'(0) = 0 via
//   |u(0)| = 1 - 1/w(eta),  lambda = eta^2 / w(eta)^3.
// Integration runs in xi = log(eta) with state (w, p = eta w'):
//   w_xi = p,  p_xi = exp(2 xi) / w^2.

using State = std::array<double, 2>;

struct Sample {
  double eta = 0.0;
  double w = 0.0;
  double wprime = 0.0;
};

struct Trajectory {
  std::vector<Sample> samples;
};

struct Fold {
  int index = 0;
  double eta = 0.0;
  double w = 0.0;
  double lambda = 0.0;
};

inline constexpr double kEta0 = 1e-4;

/// Two-term series about the origin.
inline State series_start(double eta0) {
  const double e2 = eta0 * eta0;
  const double w = 1.0 + e2 / 4.0 - e2 * e2 / 32.0;
  const double wp = eta0 / 2.0 - eta0 * e2 / 8.0;
  return {w, eta0 * wp};
}

inline void rhs(const State& y, State& dy, double xi) {
  dy[0] = y[1];
  dy[1] = std::exp(2.0 * xi) / (y[0] * y[0]);
}

inline Sample to_sample(double xi, const State& y) {
  const double eta = std::exp(xi);
  return {eta, y[0], y[1] / eta};
}

/// (|u(0)|, lambda)
inline std::pair<double, double> map_to_bifurcation(double eta, double w) {
  return {1.0 - 1.0 / w, eta * eta / (w * w * w)};
}

/// Fold condition lambda_eta = 0 reduces to g = 1 - 1.5 eta w'/w = 0.
inline double fold_function(const State& y) { return 1.0 - 1.5 * y[1] / y[0]; }

namespace detail {

inline auto controlled(double rel_tol) {
  namespace ode = boost::numeric::odeint;
  return ode::make_controlled(1e-30, rel_tol, ode::runge_kutta_dopri5<State>());
}

inline State advance(State y, double xi0, double xi1, double rel_tol) {
  if (xi1 == xi0) return y;
  boost::numeric::odeint::integrate_adaptive(controlled(rel_tol), rhs, y, xi0, xi1, (xi1 - xi0) * 1e-2);
  return y;
}

}  // namespace detail

/// Adaptive Dormand-Prince integration from eta0 to eta_max; one sample per
/// accepted step.
inline Trajectory integrate_w(double eta_max, double rel_tol = 1e-12, double eta0 = kEta0) {
  if (!(eta_max > eta0)) throw std::invalid_argument("integrate_w: eta_max must exceed the start point");
  namespace ode = boost::numeric::odeint;
  Trajectory traj;
  State y = series_start(eta0);
  const double xi0 = std::log(eta0), xi1 = std::log(eta_max);
  try {
    ode::integrate_adaptive(detail::controlled(rel_tol), rhs, y, xi0, xi1, 1e-3,
                            [&](const State& s, double xi) { traj.samples.push_back(to_sample(xi, s)); });
  } catch (const ode::step_adjustment_error& e) {
    throw ConvergenceFailure(std::string("integrate_w: step size underflow: ") + e.what());
  }
  return traj;
}

/// First k fold values lambda^(0..k-1) in order along the branch.
inline std::vector<Fold> find_folds(int k, double rel_tol = 1e-12, double eta_max = 1e16) {
  if (k < 1) throw std::invalid_argument("find_folds: k must be >= 1");
  namespace ode = boost::numeric::odeint;
  std::vector<Fold> folds;
  auto stepper = ode::make_dense_output(1e-30, rel_tol, ode::runge_kutta_dopri5<State>());
  const double xi_end = std::log(eta_max);
  stepper.initialize(series_start(kEta0), std::log(kEta0), 1e-3);
  State prev = stepper.current_state();
  double xi_prev = stepper.current_time();
  while (static_cast<int>(folds.size()) < k) {
    if (stepper.current_time() >= xi_end)
      throw ConvergenceFailure("find_folds: trajectory too short to contain the requested folds");
    stepper.do_step(rhs);
    const State cur = stepper.current_state();
    const double xi_cur = stepper.current_time();
    const double g0 = fold_function(prev), g1 = fold_function(cur);
    if (g0 == 0.0 || (g0 > 0.0) != (g1 > 0.0)) {
      // polish by re-integrating from the bracket start
      auto g = [&](double xi) { return fold_function(detail::advance(prev, xi_prev, xi, rel_tol)); };
      std::uintmax_t iters = 200;
      auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15 * std::max(1.0, std::abs(a)); };
      auto [a, b] = boost::math::tools::toms748_solve(g, xi_prev, xi_cur, g0, g1, tol, iters);
      const double ga = g(a), gb = g(b);
      const double xi = std::abs(ga) <= std::abs(gb) ? a : b;
      const State y = detail::advance(prev, xi_prev, xi, rel_tol);
      const double eta = std::exp(xi);
      folds.push_back({static_cast<int>(folds.size()), eta, y[0], map_to_bifurcation(eta, y[0]).second});
    }
    prev = cur;
    xi_prev = xi_cur;
  }
  return folds;
}

inline std::vector<double> find_fold_lambdas(int k, double rel_tol = 1e-12) {
  std::vector<double> out;
  for (const auto& f : find_folds(k, rel_tol)) out.push_back(f.lambda);
  return out;
}

}  // namespace bifurcurve::oracle

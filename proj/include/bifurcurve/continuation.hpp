#pragma once

#include "assembly.hpp"
#include "estimator.hpp"
#include "linsolve.hpp"

#include <concepts>
#include <functional>
#include <limits>
#include <optional>
#include <span>

namespace bifurcurve {

/// What the tracer needs from a discretized problem f(u, lambda) = 0.
template <class P>
concept ContinuationProblem = requires(const P& p, const Vector& u, double lambda) {
  { p.size() } -> std::convertible_to<Eigen::Index>;
  { p.residual(u, lambda) } -> std::convertible_to<Vector>;
  { p.jacobian(u, lambda) } -> std::convertible_to<SparseMatrix>;
  { p.dlambda(u, lambda) } -> std::convertible_to<Vector>;
  { p.admissible(u) } -> std::convertible_to<bool>;
  { p.norms(u) } -> std::convertible_to<Norms>;
  { p.num_elements() } -> std::convertible_to<std::size_t>;
};

struct ContinuationConfig {
  double ds0 = 1e-2;
  double ds_min = 1e-8;
  double ds_max = 0.25;
  double newton_tol = 1e-10;
  int max_newton_iters = 10;
  double grow_factor = 1.3;
  double shrink_factor = 0.5;
  int fast_iters = 4;
  double kappa = 1e-3;
  double rho = 1e-6;
  int nu = 1;  ///< adaptation period in admitted steps, 0 disables adaptation
  double branch_detect_tol = 1e-6;  ///< relative to ||J||_inf
  std::size_t max_elements = 200000;
  bool compute_eigs = true;
  bool keep_fields = true;
  // stop rules
  int max_steps = 1000;
  double s_max = std::numeric_limits<double>::infinity();
  double lambda_max = std::numeric_limits<double>::infinity();
  double lambda_min = -std::numeric_limits<double>::infinity();
  double linf_max = std::numeric_limits<double>::infinity();
  int max_folds = 0;  ///< 0 means no limit
  double min_tangent_cos = 0.9;  ///< consecutive tangents must be closer than this; else ds shrinks

  void validate() const {
    auto fail = [](const char* key, const char* what) { throw ConfigError(key, std::string(key) + ": " + what); };
    if (!(ds_min > 0.0)) fail("ds_min", "must be > 0");
    if (!(ds_min <= ds0)) fail("ds0", "must be >= ds_min");
    if (!(ds0 <= ds_max)) fail("ds_max", "must be >= ds0");
    if (!(newton_tol > 0.0)) fail("newton_tol", "must be > 0");
    if (max_newton_iters < 1) fail("max_newton_iters", "must be >= 1");
    if (!(grow_factor >= 1.0)) fail("grow_factor", "must be >= 1");
    if (!(shrink_factor > 0.0 && shrink_factor < 1.0)) fail("shrink_factor", "must lie in (0, 1)");
    if (fast_iters < 0) fail("fast_iters", "must be >= 0");
    if (!(rho > 0.0)) fail("rho", "must be > 0");
    if (!(rho < kappa)) fail("kappa", "kappa must be greater than rho");
    if (nu < 0) fail("nu", "must be >= 0");
    if (!(branch_detect_tol > 0.0)) fail("branch_detect_tol", "must be > 0");
    if (max_steps < 1) fail("max_steps", "must be >= 1");
    if (max_folds < 0) fail("max_folds", "must be >= 0");
    if (!(min_tangent_cos >= -1.0 && min_tangent_cos < 1.0)) fail("min_tangent_cos", "must lie in [-1, 1)");
  }
};

/// (udot, lamdot) with ||udot||^2 + lamdot^2 = 1.
struct Tangent {
  Vector udot;
  double lamdot = 0.0;

  double dot(const Tangent& o) const { return udot.dot(o.udot) + lamdot * o.lamdot; }
  double norm() const { return std::sqrt(udot.squaredNorm() + lamdot * lamdot); }
  Tangent normalized() const {
    const double n = norm();
    return {udot / n, lamdot / n};
  }
  Tangent operator-() const { return {-udot, -lamdot}; }
};

/// Tangent from J z = -f_lambda, a = +-1/sqrt(1 + |z|^2), (udot, lamdot) = (a z, a),
/// with the sign keeping a positive dot product with `previous`.
inline Tangent tangent(const Factorization& j, const Vector& f_lambda, const Tangent& previous) {
  if (j.singular()) throw TangentAtFold("tangent: Jacobian is singular");
  const Vector z = -j.solve(f_lambda);
  double a = 1.0 / std::sqrt(1.0 + z.squaredNorm());
  Tangent t{a * z, a};
  if (t.dot(previous) < 0.0) t = -t;
  return t;
}

inline Tangent tangent(const SparseMatrix& j, const Vector& f_lambda, const Tangent& previous) {
  try {
    return tangent(Factorization(j), f_lambda, previous);
  } catch (const SingularMatrix& e) {
    throw TangentAtFold(std::string("tangent: ") + e.what());
  }
}

/// Null direction of [J f_lambda] from the bordered system
/// [J f_lambda; previous^T] (z, a) = (0, 1); regular at simple folds.
inline Tangent bordered_tangent(const SparseMatrix& j, const Vector& f_lambda, const Tangent& previous) {
  const auto s = solve_bordered(j, f_lambda, previous.udot, previous.lamdot, Vector::Zero(j.rows()), 1.0);
  Tangent t = Tangent{s.du, s.dlam}.normalized();
  if (t.dot(previous) < 0.0) t = -t;
  return t;
}

inline double step_size_update(int iters, bool failed, double ds, const ContinuationConfig& cfg) {
  if (failed) return std::max(ds * cfg.shrink_factor, cfg.ds_min);
  if (iters <= cfg.fast_iters) return std::min(ds * cfg.grow_factor, cfg.ds_max);
  return ds;
}

struct Stability {
  bool stable = false;
  double smallest_eig = 0.0;
};

/// stable iff f_u is positive definite; smallest_eig is the algebraically
/// smallest eigenvalue.
inline Stability classify_stability(const SparseMatrix& j) {
  // shift below the Gershgorin interval so the nearest eigenvalue is the smallest
  double lower = 0.0;
  for (int k = 0; k < j.outerSize(); ++k) {
    double diag = 0.0, off = 0.0;
    for (SparseMatrix::InnerIterator it(j, k); it; ++it) (it.row() == it.col() ? diag : off) += it.row() == it.col() ? it.value() : std::abs(it.value());
    lower = std::min(lower, diag - off);
  }
  const double shift = lower - 1e-3 * std::max(1.0, inf_norm(j));
  const auto e = smallest_eigenpair(j, shift);
  const Factorization f(j);
  const bool stable = f.negative_count() >= 0 ? f.negative_count() == 0 : e.mu > 0.0;
  return {stable, e.mu};
}

/// Newton on f(u, lambda) = 0 with t.(x - base) - ds = 0, started at base + ds t.
template <ContinuationProblem P>
struct Corrected {
  Vector u;
  double lambda = 0.0;
  int iters = 0;
};

template <ContinuationProblem P>
Corrected<P> correct(const P& p, const Vector& base_u, double base_lambda, const Tangent& t, double ds,
                     const ContinuationConfig& cfg) {
  Vector u = base_u + ds * t.udot;
  double lambda = base_lambda + ds * t.lamdot;
  for (int k = 0;; ++k) {
    if (!p.admissible(u) || !u.allFinite() || !std::isfinite(lambda))
      throw NewtonFailure("correct: iterate left the admissible set");
    const Vector f = p.residual(u, lambda);
    const double n = t.udot.dot(u - base_u) + t.lamdot * (lambda - base_lambda) - ds;
    if (inf_norm(f) <= cfg.newton_tol && std::abs(n) <= cfg.newton_tol) return {u, lambda, k};
    if (k == cfg.max_newton_iters) throw NewtonFailure("correct: no convergence");
    try {
      const auto s = solve_bordered(p.jacobian(u, lambda), p.dlambda(u, lambda), t.udot, t.lamdot, -f, -n);
      u += s.du;
      lambda += s.dlam;
    } catch (const BorderedSingular& e) {
      throw NewtonFailure(e.what());
    } catch (const SingularDeflection& e) {
      throw NewtonFailure(e.what());
    }
  }
}

template <ContinuationProblem P>
struct BranchSample {
  int step = 0;
  double s = 0.0;
  double lambda = 0.0;
  Norms norms;
  Eigen::Index n_dof = 0;
  std::size_t n_tri = 0;
  int newton_iters = 0;
  double ds = 0.0;
  int det_sign = 0;
  double smallest_eig = std::numeric_limits<double>::quiet_NaN();  ///< eigenvalue nearest zero
  int neg_count = -1;
  bool stable = false;
  double lamdot = 0.0;
  Vector u;  ///< empty unless fields are kept
  std::shared_ptr<const P> problem;
};

template <ContinuationProblem P>
struct FoldRecord {
  int index = 0;
  int step = 0;  ///< fold lies between samples step-1 and step
  double lambda = 0.0;
  Norms norms;
  Vector u;
  std::shared_ptr<const P> problem;
};

/// State needed to restart or refine around a point on the branch.
template <ContinuationProblem P>
struct BranchState {
  std::shared_ptr<const P> problem;
  Vector u;
  double lambda = 0.0;
  Tangent tangent;
  double ds = 0.0;
};

enum class SuspicionKind { det_flip, touch, small_eig, inertia };

inline const char* to_string(SuspicionKind k) {
  switch (k) {
    case SuspicionKind::det_flip: return "det_flip";
    case SuspicionKind::touch: return "touch";
    case SuspicionKind::small_eig: return "small_eig";
    case SuspicionKind::inertia: return "inertia";
  }
  return "?";
}

struct MonitorEntry {
  int det_sign = 0;
  double smallest_eig = std::numeric_limits<double>::quiet_NaN();
  int neg_count = -1;
};

struct MonitorHit {
  SuspicionKind kind;
  int offset;  ///< 0 = latest entry, 1 = the one before
};

/// Looks at the newest entries of a history for signs of a singular Jacobian:
/// a det sign flip between the last two entries, a |smallest_eig| local
/// minimum below tol at the middle of the last three, or |smallest_eig| < tol
/// now. Fold-related flips are filtered by the caller.
inline std::optional<MonitorHit> monitor(std::span<const MonitorEntry> h, double tol) {
  const std::size_t n = h.size();
  if (n < 2) return std::nullopt;
  const auto& a = h[n - 2];
  const auto& b = h[n - 1];
  if (a.det_sign != 0 && b.det_sign != 0 && a.det_sign != b.det_sign) return MonitorHit{SuspicionKind::det_flip, 0};
  if (n >= 3) {
    const double e0 = std::abs(h[n - 3].smallest_eig), e1 = std::abs(a.smallest_eig), e2 = std::abs(b.smallest_eig);
    if (e1 < tol && e1 < e0 && e2 > e1) return MonitorHit{SuspicionKind::touch, 1};
  }
  if (std::abs(b.smallest_eig) < tol) return MonitorHit{SuspicionKind::small_eig, 0};
  if (a.neg_count >= 0 && b.neg_count >= 0 && a.neg_count != b.neg_count) return MonitorHit{SuspicionKind::inertia, 0};
  return std::nullopt;
}

template <ContinuationProblem P>
struct Suspicion {
  SuspicionKind kind;
  int step = 0;  ///< singularity lies between samples step-1 and step (or at step)
  BranchState<P> before;
  BranchState<P> after;
  double ds = 0.0;  ///< arc-length step from before to after
  Vector eigvec;  ///< near-null eigenvector at the sample closest to the singularity
};

enum class StopReason { max_steps, s_max, lambda_max, lambda_min, linf_max, max_folds, observer, cannot_proceed };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::max_steps: return "max_steps";
    case StopReason::s_max: return "s_max";
    case StopReason::lambda_max: return "lambda_max";
    case StopReason::lambda_min: return "lambda_min";
    case StopReason::linf_max: return "linf_max";
    case StopReason::max_folds: return "max_folds";
    case StopReason::observer: return "observer";
    case StopReason::cannot_proceed: return "cannot_proceed";
  }
  return "?";
}

template <ContinuationProblem P>
struct Branch {
  std::vector<BranchSample<P>> samples;
  std::vector<FoldRecord<P>> folds;
  std::vector<Suspicion<P>> suspicions;
  StopReason stop = StopReason::max_steps;
  std::string message;
  BranchState<P> last;
};

/// A new discretization plus the map carrying free-dof vectors onto it.
template <ContinuationProblem P>
struct Remeshed {
  std::shared_ptr<const P> problem;
  std::function<Vector(const Vector&)> transfer;
};

template <ContinuationProblem P>
struct TraceHooks {
  /// Called for every admitted sample; returning false stops the trace.
  std::function<bool(const BranchSample<P>&)> observer;
  /// Mesh adaptation at (u, lambda); in_solve selects the refine-only variant.
  std::function<std::optional<Remeshed<P>>(const P&, const Vector&, double, bool in_solve)> adapt;
};

namespace detail {

template <ContinuationProblem P>
struct PointInfo {
  Tangent tangent;
  int det_sign = 0;
  int neg_count = -1;
  double eig = std::numeric_limits<double>::quiet_NaN();
  Vector eigvec;
  double jnorm = 0.0;
};

template <ContinuationProblem P>
PointInfo<P> analyze(const P& p, const Vector& u, double lambda, const Tangent& reference, bool eigs,
                     const Vector* eig_start) {
  PointInfo<P> info;
  const SparseMatrix j = p.jacobian(u, lambda);
  const Vector fl = p.dlambda(u, lambda);
  info.jnorm = inf_norm(j);
  std::optional<Factorization> f;
  try {
    f.emplace(j);
    info.det_sign = f->det_sign();
    info.neg_count = f->negative_count();
  } catch (const SingularMatrix&) {
    info.det_sign = 0;
  }
  try {
    if (!f) throw TangentAtFold("structurally singular");
    info.tangent = tangent(*f, fl, reference);
  } catch (const Error&) {
    try {
      info.tangent = bordered_tangent(j, fl, reference);
    } catch (const BorderedSingular&) {
      info.tangent = reference;
    }
  }
  if (eigs && p.size() > 0) {
    try {
      std::vector<Vector> start;
      if (eig_start && eig_start->size() == p.size()) start.push_back(*eig_start);
      const auto pairs = nearest_eigenpairs(j, 0.0, 1, f && !f->singular() ? &*f : nullptr, start.empty() ? nullptr : &start);
      info.eig = pairs[0].mu;
      info.eigvec = pairs[0].v;
    } catch (const ConvergenceFailure&) {
    }
  }
  return info;
}

}  // namespace detail

/// Bracketed search between `before` (tangent sign s) and a step of size
/// ds_hi where lamdot changed sign, until |lamdot| <= 1e-8.
template <ContinuationProblem P>
FoldRecord<P> locate_fold(const BranchState<P>& before, double ds_hi, const ContinuationConfig& cfg) {
  const P& p = *before.problem;
  auto lamdot_at = [&](double ds, Vector* u_out, double* l_out) {
    const auto c = correct(p, before.u, before.lambda, before.tangent, ds, cfg);
    const auto info = detail::analyze(p, c.u, c.lambda, before.tangent, false, nullptr);
    if (u_out) *u_out = c.u;
    if (l_out) *l_out = c.lambda;
    return info.tangent.lamdot;
  };
  const double s0 = before.tangent.lamdot;
  double lo = 0.0, hi = ds_hi, f_lo = s0, f_hi = lamdot_at(hi, nullptr, nullptr);
  Vector u;
  double lambda = before.lambda;
  int side = 0;
  for (int it = 0; it < 60; ++it) {
    // Illinois-modified regula falsi, with bisection if the secant stalls
    double mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
    if (!(mid > lo && mid < hi) || it % 8 == 7) mid = 0.5 * (lo + hi);
    const double fm = lamdot_at(mid, &u, &lambda);
    if (std::abs(fm) <= 1e-8) {
      FoldRecord<P> rec;
      rec.lambda = lambda;
      rec.norms = p.norms(u);
      rec.u = u;
      rec.problem = before.problem;
      return rec;
    }
    if ((fm > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = fm;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      f_hi = fm;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
  }
  throw ConvergenceFailure("locate_fold: no convergence in 60 iterations");
}

/// Re-solves on a new discretization: Newton with the hyperplane through the
/// transferred point orthogonal to the tangent (zero step).
template <ContinuationProblem P>
std::optional<BranchState<P>> project_after_remesh(const Remeshed<P>& r, const BranchState<P>& old,
                                                   const ContinuationConfig& cfg) {
  const P& p = *r.problem;
  const Vector u0 = r.transfer(old.u);
  if (!p.admissible(u0)) return std::nullopt;
  Tangent guess = Tangent{r.transfer(old.tangent.udot), old.tangent.lamdot}.normalized();
  try {
    const auto c = correct(p, u0, old.lambda, guess, 0.0, cfg);
    const auto info = detail::analyze(p, c.u, c.lambda, guess, false, nullptr);
    if (info.tangent.dot(guess) <= 0.0) return std::nullopt;
    return BranchState<P>{r.problem, c.u, c.lambda, info.tangent, old.ds};
  } catch (const NewtonFailure&) {
    return std::nullopt;
  }
}

/// Pseudo arc-length continuation from a solution (u0, lambda0). The first
/// tangent is oriented along `direction` (e.g. lamdot > 0 for the trivial
/// start).
template <ContinuationProblem P>
Branch<P> trace(std::shared_ptr<const P> problem, Vector u0, double lambda0, const Tangent& direction,
                const ContinuationConfig& cfg, const TraceHooks<P>& hooks = {}) {
  cfg.validate();
  Branch<P> branch;
  BranchState<P> cur{std::move(problem), std::move(u0), lambda0, direction, cfg.ds0};
  std::vector<MonitorEntry> history;
  Vector eigvec;
  double s = 0.0;
  int folds = 0;

  auto make_sample = [&](int step, int iters, double ds, const detail::PointInfo<P>& info) {
    BranchSample<P> smp;
    smp.step = step;
    smp.s = s;
    smp.lambda = cur.lambda;
    smp.norms = cur.problem->norms(cur.u);
    smp.n_dof = cur.problem->size();
    smp.n_tri = cur.problem->num_elements();
    smp.newton_iters = iters;
    smp.ds = ds;
    smp.det_sign = info.det_sign;
    smp.smallest_eig = info.eig;
    smp.neg_count = info.neg_count;
    smp.stable = info.neg_count >= 0 ? info.neg_count == 0 : (info.eig > 0.0);
    smp.lamdot = info.tangent.lamdot;
    if (cfg.keep_fields) smp.u = cur.u;
    smp.problem = cur.problem;
    return smp;
  };

  auto emit = [&](BranchSample<P> smp) {
    branch.samples.push_back(std::move(smp));
    const auto& b = branch.samples.back();
    if (hooks.observer && !hooks.observer(b)) return false;
    return true;
  };

  // initial point
  {
    const auto info = detail::analyze(*cur.problem, cur.u, cur.lambda, direction, cfg.compute_eigs, nullptr);
    cur.tangent = info.tangent;
    eigvec = info.eigvec;
    history.push_back({info.det_sign, info.eig, info.neg_count});
    if (!emit(make_sample(0, 0, 0.0, info))) {
      branch.stop = StopReason::observer;
      branch.last = cur;
      return branch;
    }
  }

  double ds = cfg.ds0;
  for (int step = 1;; ++step) {
    if (step > cfg.max_steps) {
      branch.stop = StopReason::max_steps;
      break;
    }
    // predictor-corrector with step control and one in-solve adaptation
    std::optional<Corrected<P>> next;
    std::optional<detail::PointInfo<P>> found;
    bool adapted_in_solve = false;
    while (!next) {
      try {
        next = correct(*cur.problem, cur.u, cur.lambda, cur.tangent, ds, cfg);
        const Vector* start = eigvec.size() == cur.problem->size() ? &eigvec : nullptr;
        found = detail::analyze(*cur.problem, next->u, next->lambda, cur.tangent, cfg.compute_eigs, start);
        // a sharp turn means the corrector jumped to another part of the curve
        if (found->tangent.dot(cur.tangent) < cfg.min_tangent_cos && ds > cfg.ds_min)
          throw NewtonFailure("tangent turned too far");
      } catch (const NewtonFailure&) {
        next.reset();
        if (ds > cfg.ds_min) {
          ds = step_size_update(0, true, ds, cfg);
          continue;
        }
        if (!adapted_in_solve && hooks.adapt && cfg.nu > 0) {
          adapted_in_solve = true;
          if (auto r = hooks.adapt(*cur.problem, cur.u, cur.lambda, true)) {
            if (auto moved = project_after_remesh(*r, cur, cfg)) {
              cur = *moved;
              ds = cfg.ds0;
              continue;
            }
          }
        }
        break;
      }
    }
    if (!next) {
      branch.stop = StopReason::cannot_proceed;
      branch.message = "Newton failed at ds_min";
      break;
    }

    const BranchState<P> before = cur;
    const auto& info = *found;
    const bool fold = sign_of(info.tangent.lamdot) != sign_of(before.tangent.lamdot) &&
                      sign_of(info.tangent.lamdot) != 0 && sign_of(before.tangent.lamdot) != 0;
    cur.u = next->u;
    cur.lambda = next->lambda;
    cur.tangent = info.tangent;
    s += ds;
    eigvec = info.eigvec;

    if (fold) {
      try {
        FoldRecord<P> rec = locate_fold(before, ds, cfg);
        rec.index = folds;
        rec.step = step;
        branch.folds.push_back(std::move(rec));
      } catch (const Error&) {
        // keep the bracketing samples' midpoint as a rough record
        FoldRecord<P> rec;
        rec.index = folds;
        rec.step = step;
        rec.lambda = 0.5 * (before.lambda + cur.lambda);
        rec.norms = cur.problem->norms(cur.u);
        rec.u = cur.u;
        rec.problem = cur.problem;
        branch.folds.push_back(std::move(rec));
      }
      ++folds;
      // a near-zero eigenvalue seen just before the fold belonged to it
      std::erase_if(branch.suspicions, [step](const Suspicion<P>& x) {
        return x.step >= step - 1 && (x.kind == SuspicionKind::small_eig || x.kind == SuspicionKind::touch);
      });
    }

    history.push_back({info.det_sign, info.eig, info.neg_count});
    if (auto hit = monitor(history, cfg.branch_detect_tol * std::max(info.jnorm, 1e-300))) {
      // a simple fold flips det and inertia by one; anything else is a suspect
      bool explained = false;
      if (fold && (hit->kind == SuspicionKind::det_flip || hit->kind == SuspicionKind::small_eig ||
                   hit->kind == SuspicionKind::touch)) {
        const auto& a = history[history.size() - 2];
        const auto& b = history.back();
        explained = a.neg_count < 0 || b.neg_count < 0 || std::abs(a.neg_count - b.neg_count) == 1;
      }
      if (hit->kind == SuspicionKind::inertia && fold) {
        const auto& a = history[history.size() - 2];
        explained = std::abs(a.neg_count - history.back().neg_count) == 1;
      }
      // near-zero eigenvalue right next to a fold belongs to the fold
      if (!explained && (hit->kind == SuspicionKind::small_eig || hit->kind == SuspicionKind::touch)) {
        const bool fold_near = !branch.folds.empty() && branch.folds.back().step >= step - 1;
        explained = fold_near;
      }
      const int at = step - hit->offset;
      const bool duplicate = !branch.suspicions.empty() && branch.suspicions.back().step >= at - 1;
      if (!explained && !duplicate) {
        Suspicion<P> sus;
        sus.kind = hit->kind;
        sus.step = at;
        sus.before = before;
        sus.after = cur;
        sus.ds = ds;
        sus.eigvec = info.eigvec;
        branch.suspicions.push_back(std::move(sus));
      }
    }

    if (!emit(make_sample(step, next->iters, ds, info))) {
      branch.stop = StopReason::observer;
      break;
    }
    const auto& smp = branch.samples.back();
    if (cfg.max_folds > 0 && folds >= cfg.max_folds) {
      branch.stop = StopReason::max_folds;
      break;
    }
    if (s >= cfg.s_max) {
      branch.stop = StopReason::s_max;
      break;
    }
    if (smp.lambda > cfg.lambda_max) {
      branch.stop = StopReason::lambda_max;
      break;
    }
    if (smp.lambda < cfg.lambda_min) {
      branch.stop = StopReason::lambda_min;
      break;
    }
    if (smp.norms.linf > cfg.linf_max) {
      branch.stop = StopReason::linf_max;
      break;
    }

    ds = step_size_update(next->iters, false, ds, cfg);
    cur.ds = ds;

    if (hooks.adapt && cfg.nu > 0 && step % cfg.nu == 0) {
      if (auto r = hooks.adapt(*cur.problem, cur.u, cur.lambda, false)) {
        if (auto moved = project_after_remesh(*r, cur, cfg)) {
          cur = *moved;
          eigvec.resize(0);
          // the monitor compares like with like; restart its history on the new mesh
          const auto info2 = detail::analyze(*cur.problem, cur.u, cur.lambda, cur.tangent, cfg.compute_eigs, nullptr);
          history.back() = {info2.det_sign, info2.eig, info2.neg_count};
          eigvec = info2.eigvec;
        }
      }
    }
  }
  branch.last = cur;
  return branch;
}

/// Adaptation hook for MemsProblem: estimate, mark, coarsen/refine and P1
/// interpolation of free-dof vectors.
inline std::function<std::optional<Remeshed<MemsProblem>>(const MemsProblem&, const Vector&, double, bool)>
mems_adapter(const ContinuationConfig& cfg) {
  return [cfg](const MemsProblem& p, const Vector& u, double lambda, bool in_solve) -> std::optional<Remeshed<MemsProblem>> {
    const Field uf = p.to_field(u);
    const auto out = adapt_mesh(p.mesh_ptr(), uf, lambda, p.params().source(), cfg.kappa, cfg.rho, !in_solve,
                                cfg.max_elements);
    if (!out.changed) return std::nullopt;
    auto next = std::make_shared<const MemsProblem>(out.mesh, p.params());
    auto old_mesh = p.mesh_ptr();
    auto old_dofs = p;  // keeps the old mesh and dof map alive inside the closure
    Remeshed<MemsProblem> r;
    r.problem = next;
    r.transfer = [old_dofs, next](const Vector& v) {
      const Field f = interpolate(old_dofs.to_field(v), old_dofs.mesh(), next->mesh());
      return next->from_field(f);
    };
    return r;
  };
}

}  // namespace bifurcurve

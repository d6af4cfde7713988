#pragma once

#include "continuation.hpp"

#include <Eigen/SparseLU>

#include <map>
#include <numbers>
#include <tuple>

namespace bifurcurve {

/// Problems that also provide the second derivatives needed by the
/// extended branch-point system.
template <class P>
concept BranchingProblem = ContinuationProblem<P> && requires(const P& p, const Vector& u, double lambda) {
  { p.hessian_action(u, lambda, u) } -> std::convertible_to<SparseMatrix>;
  { p.dlambda_jacobian(u, lambda) } -> std::convertible_to<SparseMatrix>;
  { p.dlambda2(u, lambda) } -> std::convertible_to<Vector>;
};

template <BranchingProblem P>
struct BranchPointRecord {
  double lambda = 0.0;
  Vector u;
  Vector v;  ///< unit null vector of f_u
  double beta = 0.0;
  double residual = 0.0;  ///< inf-norm of the extended residual
  int iterations = 0;
  std::shared_ptr<const P> problem;
  std::uint64_t mesh_generation = 0;
};

// Unknowns ordered (u, v, lambda, beta); equations
//   f + beta v = 0,  f_u v = 0,  v . f_lambda = 0,  v . v - 1 = 0.
template <BranchingProblem P>
Vector extended_residual(const P& p, const Vector& u, const Vector& v, double lambda, double beta) {
  const Eigen::Index n = p.size();
  Vector r(2 * n + 2);
  r.head(n) = p.residual(u, lambda) + beta * v;
  r.segment(n, n) = p.jacobian(u, lambda) * v;
  r(2 * n) = v.dot(p.dlambda(u, lambda));
  r(2 * n + 1) = v.squaredNorm() - 1.0;
  return r;
}

template <BranchingProblem P>
SparseMatrix extended_jacobian(const P& p, const Vector& u, const Vector& v, double lambda, double beta) {
  const Eigen::Index n = p.size();
  const SparseMatrix j = p.jacobian(u, lambda);
  const SparseMatrix h = p.hessian_action(u, lambda, v);
  const SparseMatrix jl = p.dlambda_jacobian(u, lambda);
  const Vector fl = p.dlambda(u, lambda);
  const Vector jlv = jl * v;
  const Vector fll = p.dlambda2(u, lambda);
  std::vector<Triplet> t;
  t.reserve(3 * j.nonZeros() + 6 * n);
  auto block = [&t](const SparseMatrix& m, Eigen::Index r0, Eigen::Index c0) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  };
  block(j, 0, 0);
  block(h, n, 0);
  block(j, n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(i, n + i, beta);
    t.emplace_back(i, 2 * n, fl(i));
    t.emplace_back(i, 2 * n + 1, v(i));
    t.emplace_back(n + i, 2 * n, jlv(i));
    // d(v . f_lambda)/du = (d f_lambda / du)^T v, and d f_lambda/du is symmetric
    t.emplace_back(2 * n, i, jlv(i));
    t.emplace_back(2 * n, n + i, fl(i));
    t.emplace_back(2 * n + 1, n + i, 2.0 * v(i));
  }
  t.emplace_back(2 * n, 2 * n, v.dot(fll));
  SparseMatrix m(2 * n + 2, 2 * n + 2);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

namespace detail {

template <class P>
std::uint64_t generation_of(const P& p) {
  if constexpr (requires { p.mesh().generation(); }) return p.mesh().generation();
  return 0;
}

}  // namespace detail

/// Newton on the extended system from (u, lambda, beta = 0, v_bar).
template <BranchingProblem P>
BranchPointRecord<P> locate_branch_point(std::shared_ptr<const P> problem, const Vector& u0, double lambda0,
                                         const Vector& v0, double tol = 1e-9, int max_iters = 30) {
  const P& p = *problem;
  const Eigen::Index n = p.size();
  Vector u = u0, v = v0.normalized();
  double lambda = lambda0, beta = 0.0;
  for (int k = 0;; ++k) {
    if (!p.admissible(u)) throw ConvergenceFailure("locate_branch_point: iterate left the admissible set");
    const Vector r = extended_residual(p, u, v, lambda, beta);
    const double res = r.lpNorm<Eigen::Infinity>();
    if (res <= tol) {
      if (std::abs(beta) > 1e-7)
        throw NotABranchPoint("locate_branch_point: converged with |beta| = " + std::to_string(std::abs(beta)));
      BranchPointRecord<P> rec;
      rec.lambda = lambda;
      rec.u = u;
      rec.v = v / v.norm();
      rec.beta = beta;
      rec.residual = res;
      rec.iterations = k;
      rec.problem = std::move(problem);
      rec.mesh_generation = detail::generation_of(p);
      return rec;
    }
    if (k == max_iters) throw ConvergenceFailure("locate_branch_point: no convergence in 30 iterations");
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(extended_jacobian(p, u, v, lambda, beta));
    if (lu.info() != Eigen::Success) throw ConvergenceFailure("locate_branch_point: singular extended Jacobian");
    const Vector d = lu.solve(-r);
    if (!d.allFinite()) throw ConvergenceFailure("locate_branch_point: non-finite update");
    u += d.head(n);
    v += d.segment(n, n);
    lambda += d(2 * n);
    beta += d(2 * n + 1);
  }
}

/// Eigenpair nearest zero that best matches `like` (falls back to the nearest).
inline EigenPair tracked_eigenpair(const SparseMatrix& j, const Vector* like, int candidates = 2) {
  const int count = static_cast<int>(std::min<Eigen::Index>(j.rows(), candidates));
  std::vector<Vector> start;
  if (like && like->size() == j.rows()) start.push_back(*like);
  auto pairs = nearest_eigenpairs(j, 0.0, count, nullptr, start.empty() ? nullptr : &start);
  if (!like || like->size() != j.rows()) return pairs.front();
  std::size_t best = 0;
  for (std::size_t i = 1; i < pairs.size(); ++i)
    if (std::abs(pairs[i].v.dot(*like)) > std::abs(pairs[best].v.dot(*like))) best = i;
  return pairs[best];
}

/// Seed for the extended Newton: for a sign change, secant iterations on the
/// tracked eigenvalue along the step (re-correcting at each trial); otherwise
/// the sample itself.
template <BranchingProblem P>
std::tuple<Vector, double, Vector> branch_point_seed(const Suspicion<P>& s, const ContinuationConfig& cfg) {
  const P& p = *s.before.problem;
  const bool same_mesh = s.before.problem == s.after.problem;
  if (s.kind != SuspicionKind::det_flip || !same_mesh || s.ds <= 0.0) {
    const BranchState<P>& at = s.kind == SuspicionKind::touch ? s.before : s.after;
    Vector v = s.eigvec;
    if (v.size() != at.problem->size()) v = tracked_eigenpair(at.problem->jacobian(at.u, at.lambda), nullptr).v;
    return {at.u, at.lambda, v};
  }
  Vector like = s.eigvec;
  auto mu_at = [&](double ds, Vector& u, double& lambda, Vector& v) {
    if (ds == 0.0) {
      u = s.before.u;
      lambda = s.before.lambda;
    } else {
      const auto c = correct(p, s.before.u, s.before.lambda, s.before.tangent, ds, cfg);
      u = c.u;
      lambda = c.lambda;
    }
    const auto e = tracked_eigenpair(p.jacobian(u, lambda), like.size() ? &like : nullptr);
    v = e.v;
    return e.mu;
  };
  Vector u, v, u_best, v_best;
  double lambda = 0.0, lambda_best = 0.0;
  double lo = 0.0, hi = s.ds;
  double f_lo = mu_at(lo, u, lambda, v);
  double f_hi = mu_at(hi, u_best, lambda_best, v_best);
  like = v_best;
  if ((f_lo > 0.0) == (f_hi > 0.0)) return {u_best, lambda_best, v_best};
  double best = std::abs(f_hi);
  for (int it = 0; it < 30; ++it) {
    double mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
    if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    const double fm = mu_at(mid, u, lambda, v);
    if (std::abs(fm) < best) {
      best = std::abs(fm);
      u_best = u;
      lambda_best = lambda;
      v_best = v;
    }
    like = v;
    if (best <= 1e-12 * std::max(1.0, inf_norm(p.jacobian(u, lambda))) || hi - lo < 1e-14) break;
    if ((fm > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
      f_hi = fm;
    }
  }
  return {u_best, lambda_best, v_best};
}

/// Lands on the crossing branch: predictor u_bp + direction delta v, hyperplane
/// normal (v, 0); retried once at delta / 10.
template <BranchingProblem P>
BranchState<P> switch_branch(const BranchPointRecord<P>& bp, double delta, int direction, const ContinuationConfig& cfg) {
  const P& p = *bp.problem;
  const Tangent normal{bp.v, 0.0};
  std::string why;
  for (double d : {delta, delta / 10.0}) {
    try {
      const double ds = direction >= 0 ? d : -d;
      const auto c = correct(p, bp.u, bp.lambda, normal, ds, cfg);
      const Tangent dir{direction >= 0 ? Vector(bp.v) : Vector(-bp.v), 0.0};
      const auto info = detail::analyze(p, c.u, c.lambda, dir, false, nullptr);
      return BranchState<P>{bp.problem, c.u, c.lambda, info.tangent, cfg.ds0};
    } catch (const NewtonFailure& e) {
      why = e.what();
    }
  }
  throw BranchSwitchFailed("switch_branch: corrector failed for both deltas: " + why);
}

inline double switch_delta(double newton_tol, double u_linf) { return 10.0 * std::sqrt(newton_tol) * (1.0 + u_linf); }

/// Max minus min over 64 angular sectors of the sector-mean nodal value,
/// relative to ||u||_inf.
inline double angular_asymmetry(const Field& u, const Mesh& mesh) {
  const auto kind = mesh.domain().kind;
  if (kind != DomainKind::disk && kind != DomainKind::annulus)
    throw DomainMismatch("angular_asymmetry: needs a disk or annulus");
  if (u.mesh_generation != mesh.generation()) throw GenerationMismatch("angular_asymmetry: field from another mesh");
  constexpr int bins = 64;
  std::array<double, bins> sum{};
  std::array<int, bins> count{};
  double linf = 0.0;
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    const Point& x = mesh.vertex(i);
    linf = std::max(linf, std::abs(u.values(i)));
    if (std::hypot(x.x, x.y) < 1e-12) continue;
    double theta = std::atan2(x.y, x.x);
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
    const int b = static_cast<int>(std::floor(theta / (2.0 * std::numbers::pi) * bins + 1e-9)) % bins;
    sum[b] += u.values(i);
    ++count[b];
  }
  if (linf == 0.0) return 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double mean = sum[b] / count[b];
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  return (hi - lo) / linf;
}

/// Restriction of a MEMS problem on an x-axis mirror-symmetric mesh to fields
/// even in y. Variables are orthonormal orbit coordinates r, u = Q r, and all
/// operators are Q^T (.) Q. This removes the rotational null direction of
/// non-radial states and splits dihedral eigenvalue pairs.
class ReflectionReduction {
 public:
  explicit ReflectionReduction(std::shared_ptr<const MemsProblem> inner) : inner_(std::move(inner)) {
    const Mesh& mesh = inner_->mesh();
    const DofMap& dofs = inner_->dofs();
    std::map<std::pair<long long, long long>, int> where;
    auto key = [](const Point& p) {
      return std::pair{std::llround(p.x * 1e9), std::llround(p.y * 1e9)};
    };
    for (Eigen::Index i = 0; i < dofs.size(); ++i) where[key(mesh.vertex(dofs.vertex(i)))] = static_cast<int>(i);
    std::vector<int> orbit(dofs.size(), -1);
    std::vector<int> sizes;
    for (Eigen::Index i = 0; i < dofs.size(); ++i) {
      if (orbit[i] >= 0) continue;
      const Point& p = mesh.vertex(dofs.vertex(i));
      const auto it = where.find(key({p.x, -p.y}));
      if (it == where.end()) throw DomainMismatch("ReflectionReduction: mesh is not mirror-symmetric in y");
      orbit[i] = static_cast<int>(sizes.size());
      orbit[it->second] = orbit[i];
      sizes.push_back(it->second == i ? 1 : 2);
    }
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < dofs.size(); ++i) t.emplace_back(i, orbit[i], 1.0 / std::sqrt(double(sizes[orbit[i]])));
    q_.resize(dofs.size(), static_cast<Eigen::Index>(sizes.size()));
    q_.setFromTriplets(t.begin(), t.end());
    qt_ = q_.transpose();
  }

  const MemsProblem& inner() const { return *inner_; }
  const Mesh& mesh() const { return inner_->mesh(); }
  const ProblemParams& params() const { return inner_->params(); }
  Eigen::Index size() const { return q_.cols(); }
  std::size_t num_elements() const { return inner_->num_elements(); }

  Vector lift(const Vector& r) const { return q_ * r; }
  Vector reduce(const Vector& u) const { return qt_ * u; }
  Field to_field(const Vector& r) const { return inner_->to_field(lift(r)); }

  Vector residual(const Vector& r, double lambda) const { return qt_ * inner_->residual(lift(r), lambda); }
  SparseMatrix jacobian(const Vector& r, double lambda) const { return sandwich(inner_->jacobian(lift(r), lambda)); }
  Vector dlambda(const Vector& r, double lambda) const { return qt_ * inner_->dlambda(lift(r), lambda); }
  SparseMatrix hessian_action(const Vector& r, double lambda, const Vector& w) const {
    return sandwich(inner_->hessian_action(lift(r), lambda, lift(w)));
  }
  SparseMatrix dlambda_jacobian(const Vector& r, double lambda) const {
    return sandwich(inner_->dlambda_jacobian(lift(r), lambda));
  }
  Vector dlambda2(const Vector& r, double) const { return Vector::Zero(r.size()); }
  bool admissible(const Vector& r) const { return inner_->admissible(lift(r)); }
  Norms norms(const Vector& r) const { return inner_->norms(lift(r)); }

 private:
  SparseMatrix sandwich(const SparseMatrix& a) const { return SparseMatrix(qt_ * a * q_); }

  std::shared_ptr<const MemsProblem> inner_;
  SparseMatrix q_, qt_;
};

static_assert(BranchingProblem<MemsProblem>);
static_assert(BranchingProblem<ReflectionReduction>);

}  // namespace bifurcurve

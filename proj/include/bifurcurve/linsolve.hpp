#pragma once

#include "common.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace bifurcurve {

/// Sparse symmetric factorization with determinant sign and inertia.
///
/// LDL^T with AMD ordering is tried first; its diagonal gives the sign,
/// log|det| and the number of negative eigenvalues. If the pivot-free
/// factorization breaks down or meets a pivot below 1e-14 ||A||_inf, sparse
/// LU takes over: the inertia then comes from a shifted LDL^T (-1 if that
/// fails too) and singularity is judged by a condition estimate.
class Factorization {
 public:
  explicit Factorization(const SparseMatrix& a) : a_(a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("factorize: matrix must be square");
    a_.makeCompressed();
    norm_ = inf_norm(a_);
    check_structure();
    if (a_.rows() == 0) return;
    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>>(a_);
    if (ldlt_->info() == Eigen::Success && std::isfinite(ldlt_->vectorD().sum())) {
      const Vector& d = ldlt_->vectorD();
      const double floor = 1e-14 * norm_;
      if (d.cwiseAbs().minCoeff() > floor) {
        int sign = 1;
        negatives_ = 0;
        log_abs_det_ = 0.0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
          if (d(i) < 0.0) {
            sign = -sign;
            ++negatives_;
          }
          log_abs_det_ += std::log(std::abs(d(i)));
        }
        det_sign_ = sign;
        return;
      }
    }
    // a tiny pivot without pivoting does not prove singularity; let LU decide
    ldlt_.reset();
    use_lu();
  }

  Eigen::Index size() const { return a_.rows(); }
  const SparseMatrix& matrix() const { return a_; }
  double matrix_norm() const { return norm_; }
  int det_sign() const { return det_sign_; }
  double log_abs_det() const { return log_abs_det_; }
  /// Number of negative eigenvalues (Sylvester inertia), -1 if unknown.
  int negative_count() const { return negatives_; }
  bool singular() const { return det_sign_ == 0; }

  Vector solve(const Vector& b) const {
    if (b.size() != size()) throw std::invalid_argument("solve: dimension mismatch");
    if (singular()) throw SingularMatrix("solve: matrix is numerically singular", false);
    if (size() == 0) return b;
    Vector x = raw_solve(b);
    const double bn = b.norm();
    for (int k = 0; k < 2; ++k) {
      const Vector r = b - a_ * x;
      if (r.norm() <= 1e-14 * (norm_ * x.norm() + bn)) break;
      x += raw_solve(r);
    }
    if (!x.allFinite()) throw SingularMatrix("solve: non-finite solution", false);
    return x;
  }

  /// Solve that tolerates a numerically singular factorization (used for
  /// inverse iteration close to an eigenvalue).
  Vector solve_unchecked(const Vector& b) const { return size() == 0 ? b : raw_solve(b); }

 private:
  void check_structure() const {
    std::vector<char> row(a_.rows(), 0), col(a_.cols(), 0);
    for (int k = 0; k < a_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a_, k); it; ++it)
        if (it.value() != 0.0) row[it.row()] = col[it.col()] = 1;
    for (Eigen::Index i = 0; i < a_.rows(); ++i)
      if (!row[i] || !col[i]) throw SingularMatrix("factorize: structurally singular (empty row or column)", true);
  }

  void use_lu() {
    lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lu_->analyzePattern(a_);
    lu_->factorize(a_);
    negatives_ = -1;
    if (lu_->info() != Eigen::Success) {
      det_sign_ = 0;
      log_abs_det_ = -std::numeric_limits<double>::infinity();
      lu_.reset();
      return;
    }
    det_sign_ = static_cast<int>(lu_->signDeterminant());
    log_abs_det_ = lu_->logAbsDeterminant();
    // inertia from a slightly shifted LDL^T; only eigenvalues within the
    // shift of zero can be misplaced and those already mean det_sign == 0
    for (double shift : {1e-9 * norm_, -1e-9 * norm_}) {
      SparseMatrix shifted = a_;
      for (Eigen::Index i = 0; i < a_.rows(); ++i) shifted.coeffRef(i, i) += shift;
      Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(shifted);
      if (ldlt.info() != Eigen::Success) continue;
      const Vector& d = ldlt.vectorD();
      if (!(d.cwiseAbs().minCoeff() > 1e-14 * norm_)) continue;
      negatives_ = static_cast<int>((d.array() < 0.0).count());
      break;
    }
    // numerical singularity from a condition estimate on two probe vectors
    Vector probe = Vector::Ones(a_.rows());
    for (int k = 0; k < 2; ++k) {
      const Vector x = lu_->solve(probe);
      if (!x.allFinite() || norm_ * inf_norm(x) > 1e14 * inf_norm(probe)) det_sign_ = 0;
      for (Eigen::Index i = 0; i < probe.size(); ++i) probe(i) = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.5 * std::sin(i + 1.0));
    }
  }

  Vector raw_solve(const Vector& b) const {
    if (ldlt_) return ldlt_->solve(b);
    if (lu_) return lu_->solve(b);
    throw SingularMatrix("solve: no usable factorization", false);
  }

  SparseMatrix a_;
  double norm_ = 0.0;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>> ldlt_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  int det_sign_ = 1;
  double log_abs_det_ = 0.0;
  int negatives_ = 0;
};

inline Factorization factorize(const SparseMatrix& a) { return Factorization(a); }

struct BorderedSolution {
  Vector du;
  double dlam = 0.0;
};

namespace detail {

inline double bordered_residual(const SparseMatrix& j, const Vector& f_lambda, const Vector& udot, double lamdot,
                                const Vector& r_top, double r_bot, const BorderedSolution& s, Vector* top, double* bot) {
  *top = r_top - j * s.du - f_lambda * s.dlam;
  *bot = r_bot - udot.dot(s.du) - lamdot * s.dlam;
  const double scale = r_top.norm() + std::abs(r_bot);
  return (top->norm() + std::abs(*bot)) / (scale > 0.0 ? scale : 1.0);
}

inline BorderedSolution bordered_block(const Factorization& f, const Vector& f_lambda, const Vector& udot, double lamdot,
                                       const Vector& z2, const Vector& r_top, double r_bot) {
  const Vector z1 = f.solve(r_top);
  const double schur = lamdot - udot.dot(z2);
  if (!(std::abs(schur) > 1e-14 * (std::abs(lamdot) + udot.norm() * z2.norm())))
    throw SingularMatrix("bordered: vanishing Schur complement", false);
  BorderedSolution s;
  s.dlam = (r_bot - udot.dot(z1)) / schur;
  s.du = z1 - s.dlam * z2;
  return s;
}

inline BorderedSolution bordered_full(const SparseMatrix& j, const Vector& f_lambda, const Vector& udot, double lamdot,
                                      const Vector& r_top, double r_bot) {
  const Eigen::Index n = j.rows();
  std::vector<Triplet> trip;
  trip.reserve(j.nonZeros() + 2 * n + 1);
  for (int k = 0; k < j.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(j, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (f_lambda(i) != 0.0) trip.emplace_back(i, n, f_lambda(i));
    if (udot(i) != 0.0) trip.emplace_back(n, i, udot(i));
  }
  trip.emplace_back(n, n, lamdot);
  SparseMatrix full(n + 1, n + 1);
  full.setFromTriplets(trip.begin(), trip.end());
  full.makeCompressed();
  Eigen::SparseLU<SparseMatrix> lu;
  lu.analyzePattern(full);
  lu.factorize(full);
  if (lu.info() != Eigen::Success) throw BorderedSingular("bordered system is singular");
  Vector rhs(n + 1);
  rhs << r_top, r_bot;
  Vector x = lu.solve(rhs);
  const Vector r = rhs - full * x;
  x += lu.solve(r);
  if (!x.allFinite()) throw BorderedSingular("bordered system is singular");
  return {x.head(n), x(n)};
}

}  // namespace detail

/// Solves [J f_lambda; udot^T lamdot] (du, dlam) = (r_top, r_bot) by block
/// elimination on the factorization of J plus one refinement step, falling
/// back to sparse LU on the full bordered matrix.
inline BorderedSolution solve_bordered(const Factorization& f, const Vector& f_lambda, const Vector& udot, double lamdot,
                                       const Vector& r_top, double r_bot) {
  const SparseMatrix& j = f.matrix();
  Vector top;
  double bot = 0.0;
  if (!f.singular()) {
    try {
      const Vector z2 = f.solve(f_lambda);
      BorderedSolution s = detail::bordered_block(f, f_lambda, udot, lamdot, z2, r_top, r_bot);
      detail::bordered_residual(j, f_lambda, udot, lamdot, r_top, r_bot, s, &top, &bot);
      const BorderedSolution c = detail::bordered_block(f, f_lambda, udot, lamdot, z2, top, bot);
      s.du += c.du;
      s.dlam += c.dlam;
      if (s.du.allFinite() && std::isfinite(s.dlam) &&
          detail::bordered_residual(j, f_lambda, udot, lamdot, r_top, r_bot, s, &top, &bot) <= 1e-10)
        return s;
    } catch (const SingularMatrix&) {
    }
  }
  BorderedSolution s = detail::bordered_full(j, f_lambda, udot, lamdot, r_top, r_bot);
  if (detail::bordered_residual(j, f_lambda, udot, lamdot, r_top, r_bot, s, &top, &bot) > 1e-9)
    throw BorderedSingular("bordered system is singular");
  return s;
}

inline BorderedSolution solve_bordered(const SparseMatrix& j, const Vector& f_lambda, const Vector& udot, double lamdot,
                                       const Vector& r_top, double r_bot) {
  try {
    return solve_bordered(Factorization(j), f_lambda, udot, lamdot, r_top, r_bot);
  } catch (const SingularMatrix&) {
    BorderedSolution s = detail::bordered_full(j, f_lambda, udot, lamdot, r_top, r_bot);
    Vector top;
    double bot;
    if (detail::bordered_residual(j, f_lambda, udot, lamdot, r_top, r_bot, s, &top, &bot) > 1e-9)
      throw BorderedSingular("bordered system is singular");
    return s;
  }
}

struct EigenPair {
  double mu = 0.0;
  Vector v;
  double residual = 0.0;
};

struct EigenOptions {
  int max_iterations = 300;
  double tol = 1e-10;         ///< relative to ||A||_inf
  double accept_tol = 1e-8;   ///< looser bound accepted when max_iterations runs out
  int extra_vectors = 3;      ///< guard vectors beyond the requested count
};

/// The `count` eigenpairs of symmetric A closest to `shift` (ties go to the
/// smaller algebraic value), by block shifted inverse iteration with
/// Rayleigh-Ritz. `shift_factor` may hold a factorization of A - shift I.
/// `start` columns, if given, seed the block.
inline std::vector<EigenPair> nearest_eigenpairs(const SparseMatrix& a, double shift, int count,
                                                 const Factorization* shift_factor = nullptr,
                                                 const std::vector<Vector>* start = nullptr, EigenOptions opt = {}) {
  const Eigen::Index n = a.rows();
  if (count < 1 || count > n) throw std::invalid_argument("nearest_eigenpairs: bad count");
  const double anorm = std::max(inf_norm(a), std::numeric_limits<double>::min());
  const int p = static_cast<int>(std::min<Eigen::Index>(n, count + opt.extra_vectors));

  auto order = [shift](const Vector& theta) {
    std::vector<int> idx(theta.size());
    for (int i = 0; i < theta.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int x, int y) {
      const double dx = std::abs(theta(x) - shift), dy = std::abs(theta(y) - shift);
      if (std::abs(dx - dy) > 1e-12 * (1.0 + dx + dy)) return dx < dy;
      return theta(x) < theta(y);
    });
    return idx;
  };

  if (n == p) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es{DenseMatrix(a)};
    const auto idx = order(es.eigenvalues());
    std::vector<EigenPair> out;
    for (int k = 0; k < count; ++k) {
      EigenPair e{es.eigenvalues()(idx[k]), es.eigenvectors().col(idx[k]), 0.0};
      e.residual = (a * e.v - e.mu * e.v).norm();
      out.push_back(std::move(e));
    }
    return out;
  }

  std::unique_ptr<Factorization> own;
  if (!shift_factor) {
    SparseMatrix shifted = a;
    double s = shift;
    for (int attempt = 0; attempt < 4; ++attempt) {
      shifted = a;
      for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= s;
      own = std::make_unique<Factorization>(shifted);
      if (!own->singular()) break;
      s = shift + (attempt + 1) * 1e-10 * anorm;
    }
    shift_factor = own.get();
  }

  DenseMatrix x(n, p);
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = uni(rng);
  if (start)
    for (std::size_t j = 0; j < start->size() && static_cast<int>(j) < p; ++j)
      if ((*start)[j].size() == n) x.col(j) = (*start)[j] + 1e-3 * x.col(j) * (*start)[j].norm() / std::sqrt(double(n));

  std::vector<EigenPair> out(count);
  for (int it = 0; it < opt.max_iterations; ++it) {
    DenseMatrix y(n, p);
    for (Eigen::Index j = 0; j < p; ++j) y.col(j) = shift_factor->solve_unchecked(x.col(j));
    Eigen::HouseholderQR<DenseMatrix> qr(y);
    const DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(n, p);
    const DenseMatrix aq = a * q;
    const DenseMatrix h = 0.5 * (q.transpose() * aq + (q.transpose() * aq).transpose());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
    x = q * es.eigenvectors();
    const DenseMatrix ax = aq * es.eigenvectors();
    const auto idx = order(es.eigenvalues());
    double worst = 0.0;
    for (int k = 0; k < count; ++k) {
      out[k].mu = es.eigenvalues()(idx[k]);
      out[k].v = x.col(idx[k]);
      out[k].residual = (ax.col(idx[k]) - out[k].mu * x.col(idx[k])).norm();
      worst = std::max(worst, out[k].residual);
    }
    if (worst <= opt.tol * anorm) return out;
    if (it + 1 == opt.max_iterations && worst <= opt.accept_tol * anorm) return out;
  }
  throw ConvergenceFailure("eigensolver did not converge");
}

/// Eigenpair of symmetric A nearest `shift`; on a tie the smaller value.
inline EigenPair smallest_eigenpair(const SparseMatrix& a, double shift = 0.0, const Factorization* shift_factor = nullptr,
                                    const Vector* start = nullptr) {
  std::vector<Vector> s;
  if (start) s.push_back(*start);
  auto pairs = nearest_eigenpairs(a, shift, 1, shift_factor, start ? &s : nullptr);
  EigenPair e = std::move(pairs.front());
  // fix the sign for reproducibility: largest-magnitude entry positive
  Eigen::Index imax = 0;
  e.v.cwiseAbs().maxCoeff(&imax);
  if (e.v(imax) < 0.0) e.v = -e.v;
  return e;
}

}  // namespace bifurcurve

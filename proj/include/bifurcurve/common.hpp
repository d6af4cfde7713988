#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bifurcurve {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Error hierarchy. Every failure mode named by the library contracts has its
// own type so callers can react (halve a step, retry, abort) without parsing
// messages.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A nodal deflection reached the touchdown singularity u <= -1.
class SingularDeflection : public Error {
 public:
  using Error::Error;
};

/// A field was used with a mesh it was not built on.
class GenerationMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  SingularMatrix(const std::string& what, bool structural)
      : Error(what), structural_(structural) {}
  bool structural() const { return structural_; }

 private:
  bool structural_;
};

/// The (N+1)x(N+1) arc-length system could not be solved.
class BorderedSingular : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

/// Newton correction did not converge; the caller typically shrinks the step.
class NewtonFailure : public Error {
 public:
  using Error::Error;
};

/// Continuation is stuck at the minimal step even after in-solve adaptation.
class CannotProceed : public Error {
 public:
  using Error::Error;
};

/// J is numerically singular, so the tangent cannot be formed from J z = -f_lambda.
class TangentAtFold : public Error {
 public:
  using Error::Error;
};

class NotABranchPoint : public Error {
 public:
  using Error::Error;
};

class BranchSwitchFailed : public Error {
 public:
  using Error::Error;
};

class DomainMismatch : public Error {
 public:
  using Error::Error;
};

/// Configuration problem; key() names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Max absolute row sum.
inline double inf_norm(const SparseMatrix& a) {
  Vector rows = Vector::Zero(a.rows());
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) rows(it.row()) += std::abs(it.value());
  return rows.size() == 0 ? 0.0 : rows.maxCoeff();
}

inline int sign_of(double x) { return (0.0 < x) - (x < 0.0); }

}  // namespace bifurcurve

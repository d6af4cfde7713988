#include <bifurcurve/linsolve.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace bifurcurve;

namespace {

SparseMatrix sparse(const DenseMatrix& d) { return d.sparseView(0.0, 0.0); }

SparseMatrix diag(std::initializer_list<double> v) {
  DenseMatrix d = DenseMatrix::Zero(v.size(), v.size());
  int i = 0;
  for (double x : v) {
    d(i, i) = x;
    ++i;
  }
  return sparse(d);
}

// Gaussian elimination with partial pivoting, written out so the sparse
// factorizations are checked against an independent route.
Vector dense_solve(DenseMatrix a, Vector b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    for (Eigen::Index i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    a.row(k).swap(a.row(piv));
    std::swap(b(k), b(piv));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i) -= f * a.row(k);
      b(i) -= f * b(k);
    }
  }
  Vector x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
    x(i) = s / a(i, i);
  }
  return x;
}

long cofactor_det(const std::vector<std::vector<long>>& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  long det = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::vector<long>> minor;
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<long> row;
      for (std::size_t k = 0; k < n; ++k)
        if (k != c) row.push_back(m[r][k]);
      minor.push_back(row);
    }
    det += (c % 2 == 0 ? 1 : -1) * m[0][c] * cofactor_det(minor);
  }
  return det;
}

DenseMatrix random_symmetric(int n, std::mt19937& rng, double diag_shift) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  DenseMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = d(rng);
  a.diagonal().array() += diag_shift;
  return a;
}

}  // namespace

TEST(Factorize, DeterminantExamples) {
  const auto id = factorize(diag({1, 1, 1}));
  EXPECT_EQ(id.det_sign(), 1);
  EXPECT_NEAR(id.log_abs_det(), 0.0, 1e-15);
  const auto mid = factorize(diag({-1, -1, -1}));
  EXPECT_EQ(mid.det_sign(), -1);
  EXPECT_NEAR(mid.log_abs_det(), 0.0, 1e-15);
  EXPECT_EQ(mid.negative_count(), 3);
  const auto d23 = factorize(diag({2, 3}));
  EXPECT_EQ(d23.det_sign(), 1);
  EXPECT_NEAR(d23.log_abs_det(), std::log(6.0), 1e-15);
}

TEST(Factorize, SingularCases) {
  const auto num = factorize(diag({1, 1e-20, 2}));
  EXPECT_EQ(num.det_sign(), 0);
  EXPECT_THROW(num.solve(Vector::Ones(3)), SingularMatrix);
  try {
    factorize(diag({1, 0, 2}));
    FAIL() << "expected structural singularity";
  } catch (const SingularMatrix& e) {
    EXPECT_TRUE(e.structural());
  }
  try {
    num.solve(Vector::Ones(3));
  } catch (const SingularMatrix& e) {
    EXPECT_FALSE(e.structural());
  }
}

TEST(Factorize, SignMatchesCofactorExpansion) {
  std::mt19937 rng(42);
  std::uniform_int_distribution<int> d(-3, 3);
  int zero_dets = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<long>> m(4, std::vector<long>(4));
    DenseMatrix a(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) {
        m[i][j] = m[j][i] = d(rng);
        a(i, j) = a(j, i) = static_cast<double>(m[i][j]);
      }
    const long det = cofactor_det(m);
    bool structural = false;
    int sign = 0;
    try {
      const auto f = factorize(sparse(a));
      sign = f.det_sign();
      if (det != 0) EXPECT_NEAR(f.log_abs_det(), std::log(std::abs(double(det))), 1e-9);
    } catch (const SingularMatrix& e) {
      structural = e.structural();
    }
    if (structural) {
      EXPECT_EQ(det, 0);
      continue;
    }
    if (det == 0) ++zero_dets;
    EXPECT_EQ(sign, (det > 0) - (det < 0)) << "trial " << trial << " det " << det;
  }
  EXPECT_GT(zero_dets, 0);
}

TEST(Factorize, InertiaCountsNegativeEigenvalues) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix a = random_symmetric(8, rng, 0.3);
    const Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a);
    const int neg = static_cast<int>((es.eigenvalues().array() < 0).count());
    const auto f = factorize(sparse(a));
    if (f.negative_count() >= 0) EXPECT_EQ(f.negative_count(), neg);
    EXPECT_EQ(f.det_sign(), neg % 2 == 0 ? 1 : -1);
  }
}

TEST(Solve, Examples) {
  const Vector b = (Vector(3) << 1, -2, 5).finished();
  EXPECT_LE((factorize(diag({1, 1, 1})).solve(b) - b).norm(), 1e-15);
  const Vector x = factorize(diag({2, 4})).solve((Vector(2) << 2, 4).finished());
  EXPECT_NEAR(x(0), 1.0, 1e-15);
  EXPECT_NEAR(x(1), 1.0, 1e-15);
}

TEST(Solve, RandomSpdAgainstDenseElimination) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix m = random_symmetric(5, rng, 0.0);
    const DenseMatrix a = m * m.transpose() + 0.5 * DenseMatrix::Identity(5, 5);
    Vector b = Vector::Random(5);
    const Vector x = factorize(sparse(a)).solve(b);
    const Vector y = dense_solve(a, b);
    EXPECT_LE((x - y).norm(), 1e-10 * y.norm());
    EXPECT_LE((a * x - b).norm(), 1e-10 * b.norm());
  }
}

TEST(Solve, IndefiniteWithZeroLeadingPivot) {
  DenseMatrix a(2, 2);
  a << 0, 1, 1, 0;
  const auto f = factorize(sparse(a));
  EXPECT_EQ(f.det_sign(), -1);
  const Vector x = f.solve((Vector(2) << 3, 4).finished());
  EXPECT_NEAR(x(0), 4.0, 1e-14);
  EXPECT_NEAR(x(1), 3.0, 1e-14);
}

TEST(Bordered, IdentityExample) {
  const Vector b = (Vector(3) << 1, 2, 3).finished();
  const auto s = solve_bordered(diag({1, 1, 1}), Vector::Zero(3), Vector::Zero(3), 1.0, b, 7.0);
  EXPECT_LE((s.du - b).norm(), 1e-15);
  EXPECT_NEAR(s.dlam, 7.0, 1e-15);
}

TEST(Bordered, ScalarFold) {
  // J = 0 (structurally empty), f_lambda = 1, udot = 1, lamdot = 0
  SparseMatrix j(1, 1);
  const auto s = solve_bordered(j, Vector::Ones(1), Vector::Ones(1), 0.0, Vector::Constant(1, 0.25), -1.5);
  EXPECT_NEAR(s.du(0), -1.5, 1e-15);
  EXPECT_NEAR(s.dlam, 0.25, 1e-15);
  // explicit zero entry goes through the numerical-singularity path
  SparseMatrix z(1, 1);
  z.insert(0, 0) = 1e-300;
  const auto t = solve_bordered(z, Vector::Ones(1), Vector::Ones(1), 0.0, Vector::Constant(1, 0.25), -1.5);
  EXPECT_NEAR(t.du(0), -1.5, 1e-15);
  EXPECT_NEAR(t.dlam, 0.25, 1e-15);
}

TEST(Bordered, RandomAgainstDenseOracle) {
  std::mt19937 rng(5);
  for (int n : {6, 6, 6, 12, 25, 50}) {
    for (int trial = 0; trial < 5; ++trial) {
      const DenseMatrix j = random_symmetric(n, rng, 0.0);
      const Vector fl = Vector::Random(n), ud = Vector::Random(n), rt = Vector::Random(n);
      const double ld = 0.3, rb = -0.7;
      DenseMatrix full(n + 1, n + 1);
      full << j, fl, ud.transpose(), ld;
      Vector rhs(n + 1);
      rhs << rt, rb;
      const Vector x = dense_solve(full, rhs);
      const auto s = solve_bordered(sparse(j), fl, ud, ld, rt, rb);
      Vector y(n + 1);
      y << s.du, s.dlam;
      EXPECT_LE((y - x).norm(), 1e-9 * x.norm()) << "n=" << n;
    }
  }
}

TEST(Bordered, SingularJacobianRegularBorder) {
  // J singular with null vector e1; the border restores regularity
  DenseMatrix j = DenseMatrix::Zero(3, 3);
  j(1, 1) = 2.0;
  j(2, 2) = -1.0;
  const Vector fl = (Vector(3) << 1, 0, 0).finished();
  const Vector ud = (Vector(3) << 1, 0, 0).finished();
  const Vector rt = (Vector(3) << 0.5, 4, 1).finished();
  SparseMatrix js = sparse(j);
  js.coeffRef(0, 0) = 0.0;  // stored zero: numerically singular, not structurally
  const auto s = solve_bordered(js, fl, ud, 0.0, rt, 2.0);
  EXPECT_NEAR(s.du(0), 2.0, 1e-14);
  EXPECT_NEAR(s.du(1), 2.0, 1e-14);
  EXPECT_NEAR(s.du(2), -1.0, 1e-14);
  EXPECT_NEAR(s.dlam, 0.5, 1e-14);
}

TEST(Bordered, SingularBorderedSystemThrows) {
  DenseMatrix j = DenseMatrix::Identity(2, 2);
  j(0, 0) = 0.0;
  SparseMatrix js = sparse(j);
  js.coeffRef(0, 0) = 0.0;
  // f_lambda and udot both orthogonal to the null vector e1
  EXPECT_THROW(solve_bordered(js, (Vector(2) << 0, 1).finished(), (Vector(2) << 0, 1).finished(), 1.0,
                              Vector::Ones(2), 1.0),
               BorderedSingular);
}

TEST(Eigen, DiagonalExamples) {
  const auto a = smallest_eigenpair(diag({1, 2, 3}), 0.0);
  EXPECT_NEAR(a.mu, 1.0, 1e-14);
  EXPECT_NEAR(std::abs(a.v(0)), 1.0, 1e-12);
  const auto b = smallest_eigenpair(diag({-1, 1}), 0.0);
  EXPECT_NEAR(b.mu, -1.0, 1e-14);
  EXPECT_NEAR(std::abs(b.v(0)), 1.0, 1e-12);
  // larger diagonal, iterative path
  const auto c = smallest_eigenpair(diag({5, 4, -0.5, 3, 7, 9, 0.75, 2, 8, 6}), 0.0);
  EXPECT_NEAR(c.mu, -0.5, 1e-12);
}

TEST(Eigen, LaplacianAgainstDenseSolver) {
  const int ne = 10, n = ne - 1;
  const double h = 1.0 / ne;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0 / h);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -1.0 / h);
      t.emplace_back(i + 1, i, -1.0 / h);
    }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(t.begin(), t.end());
  const Eigen::SelfAdjointEigenSolver<DenseMatrix> es{DenseMatrix(k)};
  const auto e = smallest_eigenpair(k, 0.0);
  EXPECT_NEAR(e.mu, es.eigenvalues()(0), 1e-8);
  EXPECT_NEAR(e.v.norm(), 1.0, 1e-12);
  EXPECT_LE((k * e.v - e.mu * e.v).norm(), 1e-8 * inf_norm(k));
  EXPECT_NEAR(e.v.dot(k * e.v), e.mu, 1e-8 * inf_norm(k));
  // shifted: nearest to 150
  const auto f = smallest_eigenpair(k, 150.0);
  double best = es.eigenvalues()(0);
  for (int i = 0; i < n; ++i)
    if (std::abs(es.eigenvalues()(i) - 150.0) < std::abs(best - 150.0)) best = es.eigenvalues()(i);
  EXPECT_NEAR(f.mu, best, 1e-8);
}

TEST(Eigen, DoubleEigenvalueCluster) {
  std::mt19937 rng(1);
  const DenseMatrix q = Eigen::HouseholderQR<DenseMatrix>(DenseMatrix::Random(12, 12)).householderQ();
  Vector ev(12);
  ev << 1e-3, 1e-3, 0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const DenseMatrix a = q * ev.asDiagonal() * q.transpose();
  const auto pairs = nearest_eigenpairs(sparse(0.5 * (a + a.transpose())), 0.0, 2);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_NEAR(pairs[0].mu, 1e-3, 1e-10);
  EXPECT_NEAR(pairs[1].mu, 1e-3, 1e-10);
  EXPECT_NEAR(std::abs(pairs[0].v.dot(pairs[1].v)), 0.0, 1e-8);
}

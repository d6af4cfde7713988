#include <bifurcurve/estimator.hpp>

#include <gtest/gtest.h>

using namespace bifurcurve;

namespace {

// S = -1 turns the operator into -u'' = 1.
struct UnitLoad {
  double value(double, double) const { return -1.0; }
  double dw(double, double) const { return 0.0; }
};

struct NoSource {
  double value(double, double) const { return 0.0; }
  double dw(double, double) const { return 0.0; }
};

}  // namespace

TEST(Estimate, ZeroStateHasZeroIndicators) {
  const Mesh m = generate_domain(DomainSpec::disk(), 4);
  const auto e = estimate(Field::zeros(m), 0.0, ProblemParams{0.1, 4, DomainSpec::disk()}, m);
  ASSERT_EQ(e.size(), m.num_elements());
  for (double x : e) EXPECT_EQ(x, 0.0);
}

TEST(Estimate, LinearSolutionWithoutSource) {
  Mesh m = generate_domain(DomainSpec::square(), 4);
  m = refine(m, std::vector<int>{0, 3, 9});
  const Field u = Field::sample(m, [](const Point& p) { return 0.4 * p.x - 0.2 * p.y; });
  const auto e = estimate(u, 0.0, NoSource{}, m);
  for (double x : e) EXPECT_LE(x, 1e-28);
}

TEST(Estimate, PoissonTwoElementsByHand) {
  // -u'' = 1 on (0,1): nodal values of the P1 solution are exact, u(1/2) = 1/8.
  // Element bubble on h = 1/2: r = int psi = 2h/3 = 1/3, a = 16/(3h) = 32/3.
  const Mesh m = generate_domain(DomainSpec::interval(0, 1), 2);
  Field u = Field::zeros(m);
  u.values(1) = 0.125;
  const auto e = estimate(u, 0.0, UnitLoad{}, m);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_NEAR(e[0], 1.0 / 96.0, 1e-15);
  EXPECT_NEAR(e[1], 1.0 / 96.0, 1e-15);
}

TEST(Estimate, PoissonSquareConcentratesNowhere) {
  // constant load on a uniform mesh: interior indicators are all equal by symmetry
  const Mesh m = generate_domain(DomainSpec::square(), 4);
  const Field u = Field::zeros(m);
  const auto e = estimate(u, 0.0, UnitLoad{}, m);
  double lo = 1e300, hi = 0;
  for (std::size_t t = 0; t < m.num_elements(); ++t) {
    const auto& el = m.element(t);
    bool interior = true;
    for (int k = 0; k < 3; ++k) interior = interior && !m.is_boundary(el[k]);
    if (!interior) continue;
    lo = std::min(lo, e[t]);
    hi = std::max(hi, e[t]);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_NEAR(lo, hi, 1e-12 * hi);
}

TEST(Estimate, RejectsTouchdown) {
  const Mesh m = generate_domain(DomainSpec::square(), 2);
  Field u = Field::zeros(m);
  u.values(4) = -1.0;
  EXPECT_THROW(estimate(u, 1.0, ProblemParams{}, m), SingularDeflection);
}

TEST(Mark, Examples) {
  const auto a = mark({1, 1, 1, 1}, 0.2, 0.01);
  EXPECT_EQ(a.refine, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_TRUE(a.coarsen.empty());
  const auto b = mark({1, 1, 1, 1}, 0.3, 0.05);
  EXPECT_TRUE(b.refine.empty());
  EXPECT_TRUE(b.coarsen.empty());
  const auto c = mark({10, 0, 0, 0}, 0.5, 0.01);
  EXPECT_EQ(c.refine, (std::vector<int>{0}));
  EXPECT_EQ(c.coarsen, (std::vector<int>{1, 2, 3}));
  const auto d = mark({0, 0, 0}, 0.5, 0.01);
  EXPECT_TRUE(d.refine.empty());
  EXPECT_TRUE(d.coarsen.empty());
}

TEST(Mark, ScaleInvariantAndDisjoint) {
  const ErrorVector e{0.3, 1e-9, 2.0, 0.04, 0.0, 0.7};
  ErrorVector scaled = e;
  for (double& x : scaled) x *= 123.0;
  const auto a = mark(e, 0.1, 1e-3);
  const auto b = mark(scaled, 0.1, 1e-3);
  EXPECT_EQ(a.refine, b.refine);
  EXPECT_EQ(a.coarsen, b.coarsen);
  for (int i : a.refine)
    for (int j : a.coarsen) EXPECT_NE(i, j);
}

TEST(Adapt, RefinesWhereTheSolutionBends) {
  auto mesh = std::make_shared<const Mesh>(generate_domain(DomainSpec::square(), 4));
  const Field u = Field::sample(*mesh, [](const Point& p) { return -0.5 * std::exp(-40 * (p.x * p.x + p.y * p.y)); });
  const auto out = adapt_mesh(mesh, u, 0.0, NoSource{}, 0.05, 1e-8, true, 100000);
  EXPECT_TRUE(out.changed);
  EXPECT_GT(out.mesh->num_elements(), mesh->num_elements());
  const auto capped = adapt_mesh(mesh, u, 0.0, NoSource{}, 0.05, 1e-8, true, 10);
  EXPECT_FALSE(capped.changed);
}

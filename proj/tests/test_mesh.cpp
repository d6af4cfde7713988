#include <bifurcurve/mesh.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mesh_checks.hpp"

using namespace bifurcurve;

namespace {

std::vector<int> all_elements(const Mesh& m) {
  std::vector<int> idx(m.num_elements());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::set<std::pair<double, double>> vertex_set(const Mesh& m) {
  std::set<std::pair<double, double>> s;
  for (const auto& p : m.vertices()) s.insert({p.x, p.y});
  return s;
}

}  // namespace

TEST(Mesh, UnitSquareResolutionOne) {
  const Mesh m = generate_domain(DomainSpec::square(), 1);
  EXPECT_EQ(m.num_vertices(), 4u);
  EXPECT_EQ(m.num_elements(), 2u);
  EXPECT_NEAR(m.total_measure(), 1.0, 1e-14);
  for (int v = 0; v < 4; ++v) EXPECT_TRUE(m.is_boundary(v));
  // both triangles use the diagonal as reference edge
  for (const auto& e : m.elements()) {
    const auto& a = m.vertex(e[0]);
    const auto& b = m.vertex(e[1]);
    EXPECT_NEAR(std::hypot(a.x - b.x, a.y - b.y), std::sqrt(2.0), 1e-15);
  }
}

TEST(Mesh, IntervalUniform) {
  const Mesh m = generate_domain(DomainSpec::interval(-1, 1), 4);
  EXPECT_EQ(m.num_vertices(), 5u);
  EXPECT_EQ(m.num_elements(), 4u);
  EXPECT_NEAR(m.total_measure(), 2.0, 1e-15);
  EXPECT_TRUE(m.is_boundary(0));
  EXPECT_TRUE(m.is_boundary(4));
  EXPECT_FALSE(m.is_boundary(2));
}

TEST(Mesh, AnnulusContainment) {
  for (int res : {2, 8, 20}) {
    const Mesh m = generate_domain(DomainSpec::annulus(0.1), res);
    for (const auto& p : m.vertices()) {
      const double r = std::hypot(p.x, p.y);
      EXPECT_GE(r, 0.1 * (1 - 1e-12));
      EXPECT_LE(r, 1.0 + 1e-12);
    }
    expect_valid_mesh(m);
  }
}

TEST(Mesh, InvalidSpecsRejected) {
  EXPECT_THROW(generate_domain(DomainSpec::annulus(1.2), 4), std::invalid_argument);
  EXPECT_THROW(generate_domain(DomainSpec::annulus(0.0), 4), std::invalid_argument);
  EXPECT_THROW(generate_domain(DomainSpec::interval(1, -1), 4), std::invalid_argument);
  EXPECT_THROW(generate_domain(DomainSpec::square(), 0), std::invalid_argument);
}

TEST(Mesh, InitialMeshesAreValid) {
  for (int res : {1, 3, 8}) {
    expect_valid_mesh(generate_domain(DomainSpec::square(), res));
    expect_valid_mesh(generate_domain(DomainSpec::disk(), res));
  }
  const Mesh disk = generate_domain(DomainSpec::disk(), 4);
  EXPECT_EQ(disk.num_vertices(), 1u + 6 * (1 + 2 + 3 + 4));
  EXPECT_EQ(disk.num_elements(), 6u * 16);
}

TEST(Mesh, RefineOneTriangleOfSquare) {
  const Mesh m = generate_domain(DomainSpec::square(), 1);
  const std::vector<int> mark{0};
  const Mesh r = refine(m, mark);
  EXPECT_EQ(r.num_elements(), 4u);
  EXPECT_EQ(r.num_vertices(), 5u);
  EXPECT_NEAR(r.total_measure(), 1.0, 1e-14);
  EXPECT_NE(r.generation(), m.generation());
  expect_valid_mesh(r);
  const auto& mid = r.vertex(4);
  EXPECT_DOUBLE_EQ(mid.x, 0.5);
  EXPECT_DOUBLE_EQ(mid.y, 0.5);
}

TEST(Mesh, RefineNothing) {
  const Mesh m = generate_domain(DomainSpec::square(), 3);
  const Mesh r = refine(m, std::vector<int>{});
  EXPECT_EQ(r.num_elements(), m.num_elements());
  EXPECT_EQ(r.num_vertices(), m.num_vertices());
  EXPECT_GT(r.generation(), m.generation());
}

TEST(Mesh, RandomRefineSequencesStayConforming) {
  std::mt19937 rng(7);
  for (auto spec : {DomainSpec::square(), DomainSpec::disk(), DomainSpec::annulus(0.3)}) {
    Mesh m = generate_domain(spec, 3, 8);
    for (int round = 0; round < 5; ++round) {
      std::vector<int> mark;
      std::bernoulli_distribution pick(0.15);
      for (std::size_t i = 0; i < m.num_elements(); ++i)
        if (pick(rng)) mark.push_back(static_cast<int>(i));
      m = refine(m, mark);
      expect_valid_mesh(m);
      std::vector<int> cmark;
      for (std::size_t i = 0; i < m.num_elements(); ++i)
        if (pick(rng) || pick(rng)) cmark.push_back(static_cast<int>(i));
      m = coarsen(m, cmark);
      expect_valid_mesh(m);
    }
    if (spec.kind == DomainKind::square) EXPECT_NEAR(m.total_measure(), 1.0, 1e-12);
  }
}

TEST(Mesh, RefineCoarsenRoundTrip) {
  for (auto spec : {DomainSpec::square(), DomainSpec::disk(), DomainSpec::interval(-1, 1)}) {
    const Mesh m = generate_domain(spec, 4);
    const Mesh fine = refine(m, all_elements(m));
    EXPECT_GT(fine.num_elements(), m.num_elements());
    const Mesh back = coarsen(fine, all_elements(fine));
    EXPECT_EQ(back.num_elements(), m.num_elements());
    EXPECT_EQ(back.num_vertices(), m.num_vertices());
    EXPECT_EQ(vertex_set(back), vertex_set(m));
    expect_valid_mesh(back);
  }
}

TEST(Mesh, TwoLevelRoundTrip) {
  const Mesh m = generate_domain(DomainSpec::square(), 2);
  Mesh fine = refine(m, all_elements(m));
  fine = refine(fine, all_elements(fine));
  Mesh back = coarsen(fine, all_elements(fine));
  back = coarsen(back, all_elements(back));
  EXPECT_EQ(back.num_elements(), m.num_elements());
  EXPECT_EQ(vertex_set(back), vertex_set(m));
  // never below the initial mesh
  const Mesh again = coarsen(back, all_elements(back));
  EXPECT_EQ(again.num_elements(), m.num_elements());
}

TEST(Mesh, CoarsenNothingIsIdentity) {
  const Mesh m = generate_domain(DomainSpec::square(), 2);
  const Mesh fine = refine(m, all_elements(m));
  const Mesh same = coarsen(fine, std::vector<int>{});
  EXPECT_EQ(same.num_elements(), fine.num_elements());
  EXPECT_EQ(vertex_set(same), vertex_set(fine));
}

TEST(Mesh, CoarsenOneSiblingOnly) {
  const Mesh m = generate_domain(DomainSpec::interval(0, 1), 1);
  const Mesh fine = refine(m, std::vector<int>{0});
  ASSERT_EQ(fine.num_elements(), 2u);
  const Mesh same = coarsen(fine, std::vector<int>{0});
  EXPECT_EQ(same.num_elements(), 2u);

  const Mesh sq = generate_domain(DomainSpec::square(), 2);
  const Mesh sq_fine = refine(sq, std::vector<int>{3});
  std::vector<int> one;
  for (std::size_t i = 0; i < sq_fine.num_elements(); ++i)
    if (sq_fine.sibling_of(i) >= 0) {
      one.push_back(static_cast<int>(i));
      break;
    }
  ASSERT_FALSE(one.empty());
  const Mesh sq_same = coarsen(sq_fine, one);
  EXPECT_EQ(sq_same.num_elements(), sq_fine.num_elements());
}

TEST(Mesh, CircleProjection) {
  Mesh m = generate_domain(DomainSpec::annulus(0.25), 4, 8);
  for (int k = 0; k < 2; ++k) m = refine(m, all_elements(m));
  for (std::size_t v = 0; v < m.num_vertices(); ++v) {
    if (!m.is_boundary(static_cast<int>(v))) continue;
    const double r = std::hypot(m.vertex(v).x, m.vertex(v).y);
    const double target = std::abs(r - 0.25) < std::abs(r - 1.0) ? 0.25 : 1.0;
    EXPECT_NEAR(r / target, 1.0, 1e-12);
  }
}

TEST(Mesh, ShapeRegularityUnderUniformRefinement) {
  Mesh m = generate_domain(DomainSpec::square(), 2);
  const double initial = m.min_angle();
  for (int k = 0; k < 6; ++k) {
    m = refine(m, all_elements(m));
    EXPECT_GE(m.min_angle(), 0.5 * initial - 1e-12);
  }
}

TEST(Mesh, AnnulusHasSectorSymmetry) {
  const Mesh m = generate_domain(DomainSpec::annulus(0.1), 10, 16);
  // reflection about the x-axis maps vertices and triangles onto themselves
  std::set<std::pair<long, long>> pts;
  auto key = [](double x, double y) { return std::pair<long, long>(std::lround(x * 1e9), std::lround(y * 1e9)); };
  for (const auto& p : m.vertices()) pts.insert(key(p.x, p.y));
  for (const auto& p : m.vertices()) EXPECT_TRUE(pts.count(key(p.x, -p.y)));
  std::set<std::array<std::pair<long, long>, 3>> tris;
  auto tri_key = [&](const ElementVertices& e, double sy) {
    std::array<std::pair<long, long>, 3> t;
    for (int k = 0; k < 3; ++k) t[k] = key(m.vertex(e[k]).x, sy * m.vertex(e[k]).y);
    std::sort(t.begin(), t.end());
    return t;
  };
  for (const auto& e : m.elements()) tris.insert(tri_key(e, 1.0));
  for (const auto& e : m.elements()) EXPECT_TRUE(tris.count(tri_key(e, -1.0)));
}

TEST(Interpolate, ConstantsAndLinears) {
  const Mesh m = generate_domain(DomainSpec::square(), 3);
  Mesh fine = refine(m, std::vector<int>{0, 5, 7});
  fine = refine(fine, std::vector<int>{1, 2, 10});
  const Field c = Field::sample(m, [](const Point&) { return 2.5; });
  const Field ci = interpolate(c, m, fine);
  for (Eigen::Index i = 0; i < ci.values.size(); ++i) EXPECT_NEAR(ci.values(i), 2.5, 1e-14);
  auto lin = [](const Point& p) { return 0.3 * p.x - 1.7 * p.y + 0.25; };
  const Field l = Field::sample(m, lin);
  const Field li = interpolate(l, m, fine);
  for (std::size_t i = 0; i < fine.num_vertices(); ++i) EXPECT_NEAR(li.values(i), lin(fine.vertex(i)), 1e-14);
  // and back onto the coarse mesh after coarsening
  const Field lf = Field::sample(fine, lin);
  const Mesh coarse = coarsen(fine, all_elements(fine));
  const Field lc = interpolate(lf, fine, coarse);
  for (std::size_t i = 0; i < coarse.num_vertices(); ++i) EXPECT_NEAR(lc.values(i), lin(coarse.vertex(i)), 1e-14);
}

TEST(Interpolate, MidpointIsEdgeAverage) {
  const Mesh m = generate_domain(DomainSpec::square(), 1);
  Field f = Field::zeros(m);
  f.values << 1.0, 2.0, 3.0, 4.0;
  const Mesh r = refine(m, std::vector<int>{1});
  const Field g = interpolate(f, m, r);
  // the new vertex bisects the diagonal between vertices 0 and 3
  EXPECT_NEAR(g.values(4), 0.5 * (1.0 + 4.0), 1e-15);
}

TEST(Interpolate, IntervalAndGenerationCheck) {
  const Mesh m = generate_domain(DomainSpec::interval(-1, 1), 4);
  const Mesh r = refine(m, std::vector<int>{1, 2});
  auto lin = [](const Point& p) { return 3.0 * p.x - 1.0; };
  const Field g = interpolate(Field::sample(m, lin), m, r);
  for (std::size_t i = 0; i < r.num_vertices(); ++i) EXPECT_NEAR(g.values(i), lin(r.vertex(i)), 1e-14);
  EXPECT_THROW(interpolate(Field::zeros(r), m, r), GenerationMismatch);
}

TEST(Interpolate, DiskRoundoffOutsidePolygon) {
  const Mesh m = generate_domain(DomainSpec::disk(), 3);
  const Mesh r = refine(m, all_elements(m));  // boundary midpoints leave the coarse polygon
  const Field g = interpolate(Field::sample(m, [](const Point&) { return -0.5; }), m, r);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) EXPECT_NEAR(g.values(i), -0.5, 1e-14);
}

TEST(Snapshot, Format) {
  const Mesh m = generate_domain(DomainSpec::square(), 1);
  Field f = Field::zeros(m);
  f.values << 0.0, 0.1, -0.2, 1.0 / 3.0;
  std::ostringstream os;
  write_snapshot(os, m, f);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "4 2 2");
  std::getline(is, line);
  EXPECT_EQ(line, "0 0");
  for (int k = 0; k < 3; ++k) std::getline(is, line);
  EXPECT_EQ(line, "1 1");
  for (int k = 0; k < 2; ++k) std::getline(is, line);
  std::getline(is, line);
  EXPECT_EQ(line, "0");
  std::getline(is, line);
  EXPECT_EQ(line, "0.10000000000000001");
  std::getline(is, line);
  std::getline(is, line);
  EXPECT_EQ(line, "0.33333333333333331");
  EXPECT_FALSE(std::getline(is, line));
}

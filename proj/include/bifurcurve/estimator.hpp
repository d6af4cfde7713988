#pragma once

#include "assembly.hpp"

namespace bifurcurve {

/// Per-element error indicators, all >= 0.
using ErrorVector = std::vector<double>;

namespace detail {

// degree-4 rule on triangles: barycentric points and weights (sum 1)
inline constexpr std::array<std::array<double, 3>, 6> kTriPoints{{
    {0.108103018168070, 0.445948490915965, 0.445948490915965},
    {0.445948490915965, 0.108103018168070, 0.445948490915965},
    {0.445948490915965, 0.445948490915965, 0.108103018168070},
    {0.816847572980459, 0.091576213509771, 0.091576213509771},
    {0.091576213509771, 0.816847572980459, 0.091576213509771},
    {0.091576213509771, 0.091576213509771, 0.816847572980459},
}};
inline constexpr std::array<double, 6> kTriWeights{0.223381589678011, 0.223381589678011, 0.223381589678011,
                                                   0.109951743655322, 0.109951743655322, 0.109951743655322};

// bubble-problem residual and energy accumulated over the elements of a support
struct BubbleSums {
  double r = 0.0;
  double a = 0.0;
  double a_stiff = 0.0;
};

template <class Source>
void add_edge_bubble(const Mesh& mesh, std::size_t t, int ka, int kb, const Vector& u, double lambda,
                     const Source& src, BubbleSums& sums) {
  const auto g = element_geometry(mesh, t);
  const auto& e = mesh.element(t);
  std::array<double, 2> gu{0.0, 0.0};
  for (int k = 0; k < 3; ++k) {
    gu[0] += g.grad[k][0] * u(e[k]);
    gu[1] += g.grad[k][1] * u(e[k]);
  }
  const auto& ga = g.grad[ka];
  const auto& gb = g.grad[kb];
  const double area = g.measure;
  // psi = 4 phi_a phi_b, int phi = area/3
  sums.r -= 4.0 * area / 3.0 * (gu[0] * (ga[0] + gb[0]) + gu[1] * (ga[1] + gb[1]));
  const double stiff = 8.0 * area / 3.0 *
                       (ga[0] * ga[0] + ga[1] * ga[1] + gb[0] * gb[0] + gb[1] * gb[1] + ga[0] * gb[0] + ga[1] * gb[1]);
  sums.a += stiff;
  sums.a_stiff += stiff;
  for (std::size_t q = 0; q < kTriPoints.size(); ++q) {
    const auto& l = kTriPoints[q];
    const double w = l[0] * u(e[0]) + l[1] * u(e[1]) + l[2] * u(e[2]);
    const double psi = 4.0 * l[ka] * l[kb];
    const double wq = kTriWeights[q] * area;
    sums.r -= wq * psi * src.value(w, lambda);
    sums.a += wq * psi * psi * src.dw(w, lambda);
  }
}

inline double bubble_indicator(const BubbleSums& s) {
  const double a = std::max(s.a, 0.1 * s.a_stiff);
  return s.r * s.r / a;
}

}  // namespace detail

/// Hierarchical indicator: for every interior edge E the quadratic bubble
/// psi_E = 4 phi_a phi_b gives r_E = -int grad(psi).grad(u_h) - int psi S and
/// a_E = int |grad psi|^2 + int psi^2 dS/du; r_E^2/a_E is split evenly between
/// the two neighbors. In 1D the element bubble is used instead.
template <class Source>
ErrorVector estimate(const Field& u, double lambda, const Source& src, const Mesh& mesh) {
  if (u.mesh_generation != mesh.generation()) throw GenerationMismatch("estimate: field/mesh mismatch");
  for (Eigen::Index i = 0; i < u.values.size(); ++i)
    if (!(u.values(i) > -1.0)) throw SingularDeflection("estimate: nodal deflection <= -1");
  ErrorVector err(mesh.num_elements(), 0.0);

  if (mesh.dimension() == 1) {
    // 3-point Gauss on [0,1]
    const double c = std::sqrt(0.6);
    const double xi[3] = {0.5 * (1.0 - c), 0.5, 0.5 * (1.0 + c)};
    const double wt[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    for (std::size_t t = 0; t < mesh.num_elements(); ++t) {
      const auto& e = mesh.element(t);
      const double h = mesh.element_measure(t);
      detail::BubbleSums s;
      // int psi' u_h' vanishes because psi' integrates to zero
      s.a = s.a_stiff = 16.0 / (3.0 * h);
      for (int q = 0; q < 3; ++q) {
        const double w = (1.0 - xi[q]) * u.values(e[0]) + xi[q] * u.values(e[1]);
        const double psi = 4.0 * xi[q] * (1.0 - xi[q]);
        s.r -= wt[q] * h * psi * src.value(w, lambda);
        s.a += wt[q] * h * psi * psi * src.dw(w, lambda);
      }
      err[t] = detail::bubble_indicator(s);
    }
    return err;
  }

  struct EdgeSide {
    int element;
    int ka;
    int kb;
  };
  std::unordered_map<std::uint64_t, std::vector<EdgeSide>> edges;
  std::vector<std::uint64_t> order;
  for (std::size_t t = 0; t < mesh.num_elements(); ++t) {
    const auto& e = mesh.element(t);
    for (int k = 0; k < 3; ++k) {
      const int ka = k, kb = (k + 1) % 3;
      const auto key = detail::edge_key(e[ka], e[kb]);
      auto [it, inserted] = edges.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back({static_cast<int>(t), ka, kb});
    }
  }
  for (auto key : order) {
    const auto& sides = edges[key];
    if (sides.size() != 2) continue;  // boundary bubbles violate the Dirichlet condition
    detail::BubbleSums s;
    for (const auto& side : sides) detail::add_edge_bubble(mesh, side.element, side.ka, side.kb, u.values, lambda, src, s);
    const double ind = detail::bubble_indicator(s);
    for (const auto& side : sides) err[side.element] += 0.5 * ind;
  }
  return err;
}

inline ErrorVector estimate(const Field& u, double lambda, const ProblemParams& params, const Mesh& mesh) {
  return estimate(u, lambda, params.source(), mesh);
}

struct MarkedSets {
  std::vector<int> refine;
  std::vector<int> coarsen;
};

/// refine = {i : e_i > kappa sum(e)}, coarsen = {i : e_i < rho sum(e)}.
inline MarkedSets mark(const ErrorVector& e, double kappa, double rho) {
  MarkedSets out;
  double total = 0.0;
  for (double x : e) total += x;
  if (!(total > 0.0)) return out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] > kappa * total) out.refine.push_back(static_cast<int>(i));
    if (e[i] < rho * total) out.coarsen.push_back(static_cast<int>(i));
  }
  return out;
}

struct AdaptedMesh {
  std::shared_ptr<const Mesh> mesh;
  bool changed = false;
};

/// One estimate/mark/coarsen/refine pass. `allow_coarsen` false gives the
/// refine-only variant used inside a struggling solve. `max_elements` caps
/// growth: refinement is skipped once the mesh is that large.
template <class Source>
AdaptedMesh adapt_mesh(const std::shared_ptr<const Mesh>& mesh, const Field& u, double lambda, const Source& src,
                       double kappa, double rho, bool allow_coarsen, std::size_t max_elements) {
  const auto sets = mark(estimate(u, lambda, src, *mesh), kappa, rho);
  std::vector<int> coarsen_set = allow_coarsen ? sets.coarsen : std::vector<int>{};
  std::vector<int> refine_set = mesh->num_elements() < max_elements ? sets.refine : std::vector<int>{};
  if (coarsen_set.empty() && refine_set.empty()) return {mesh, false};
  std::vector<int> map;
  Mesh next = coarsen_set.empty() ? *mesh : coarsen(*mesh, coarsen_set, &map);
  if (!coarsen_set.empty())
    for (int& i : refine_set) i = map[i];
  if (!refine_set.empty()) next = refine(next, refine_set);
  const bool changed = next.num_elements() != mesh->num_elements() || next.num_vertices() != mesh->num_vertices();
  if (!changed) return {mesh, false};
  return {std::make_shared<const Mesh>(std::move(next)), true};
}

}  // namespace bifurcurve

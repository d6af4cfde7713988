#pragma once

#include "mesh.hpp"

#include <memory>

namespace bifurcurve {

/// Source term S(w, lambda) = lambda/(1+w)^2 - lambda eps^(m-2)/(1+w)^m and
/// its derivatives.
struct MemsSource {
  double epsilon = 0.0;
  int m = 4;

  double coupling() const { return std::pow(epsilon, m - 2); }

  void check(double w) const {
    if (!(w > -1.0)) throw SingularDeflection("deflection reached u <= -1");
  }
  /// dS/dlambda; S is linear in lambda.
  double dlambda(double w) const {
    check(w);
    const double r = 1.0 / (1.0 + w);
    return r * r - coupling() * std::pow(r, m);
  }
  double value(double w, double lambda) const { return lambda * dlambda(w); }
  double dw_dlambda(double w) const {
    check(w);
    const double r = 1.0 / (1.0 + w);
    return -2.0 * r * r * r + m * coupling() * std::pow(r, m + 1);
  }
  double dw(double w, double lambda) const { return lambda * dw_dlambda(w); }
  double dww(double w, double lambda) const {
    check(w);
    const double r = 1.0 / (1.0 + w);
    return lambda * (6.0 * r * r * r * r - m * (m + 1) * coupling() * std::pow(r, m + 2));
  }
};

inline double source(double w, double lambda, double epsilon, int m) { return MemsSource{epsilon, m}.value(w, lambda); }

struct ProblemParams {
  double epsilon = 0.0;
  int m = 4;
  DomainSpec domain;

  void validate() const {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
    if (m <= 2) throw std::invalid_argument("m must be > 2");
    domain.validate();
  }
  MemsSource source() const { return {epsilon, m}; }
};

/// Free (non-Dirichlet) degrees of freedom in vertex order.
class DofMap {
 public:
  DofMap() = default;
  explicit DofMap(const Mesh& mesh) : generation_(mesh.generation()), vertex_to_free_(mesh.num_vertices(), -1) {
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
      if (mesh.is_boundary(static_cast<int>(v))) continue;
      vertex_to_free_[v] = static_cast<int>(free_.size());
      free_.push_back(static_cast<int>(v));
    }
  }
  Eigen::Index size() const { return static_cast<Eigen::Index>(free_.size()); }
  int free_index(int vertex) const { return vertex_to_free_[vertex]; }
  int vertex(int free) const { return free_[free]; }

  Field extend(const Vector& u) const {
    Field f{generation_, Vector::Zero(static_cast<Eigen::Index>(vertex_to_free_.size()))};
    for (Eigen::Index i = 0; i < size(); ++i) f.values(free_[i]) = u(i);
    return f;
  }
  Vector restrict(const Field& f) const {
    if (f.mesh_generation != generation_) throw GenerationMismatch("DofMap: field from another mesh");
    Vector u(size());
    for (Eigen::Index i = 0; i < size(); ++i) u(i) = f.values(free_[i]);
    return u;
  }

 private:
  std::uint64_t generation_ = 0;
  std::vector<int> vertex_to_free_;
  std::vector<int> free_;
};

struct Norms {
  double l2 = 0.0;
  double linf = 0.0;
};

inline Norms norms(const Field& u, const Mesh& mesh) {
  if (u.mesh_generation != mesh.generation()) throw GenerationMismatch("norms: field/mesh mismatch");
  Norms n;
  n.linf = inf_norm(u.values);
  double sum = 0.0;
  for (std::size_t t = 0; t < mesh.num_elements(); ++t) {
    const auto& e = mesh.element(t);
    const double meas = mesh.element_measure(t);
    if (mesh.dimension() == 1) {
      const double a = u.values(e[0]), b = u.values(e[1]);
      sum += meas / 3.0 * (a * a + a * b + b * b);
    } else {
      const double a = u.values(e[0]), b = u.values(e[1]), c = u.values(e[2]);
      sum += meas / 12.0 * (a * a + b * b + c * c + (a + b + c) * (a + b + c));
    }
  }
  n.l2 = std::sqrt(sum);
  return n;
}

namespace detail {

/// Geometry of one element: measure, basis gradients (x,y) and quadrature.
struct ElementGeometry {
  int nv = 3;
  double measure = 0.0;
  std::array<std::array<double, 2>, 3> grad{};
  int nq = 3;
  std::array<std::array<double, 3>, 3> phi{};  // phi[q][k]
  std::array<double, 3> weight{};
};

inline ElementGeometry element_geometry(const Mesh& mesh, std::size_t t) {
  ElementGeometry g;
  const auto& e = mesh.element(t);
  g.measure = mesh.element_measure(t);
  if (mesh.dimension() == 1) {
    g.nv = 2;
    g.nq = 2;
    g.grad[0] = {-1.0 / g.measure, 0.0};
    g.grad[1] = {1.0 / g.measure, 0.0};
    const double d = 0.5 / std::sqrt(3.0);
    const double xi[2] = {0.5 - d, 0.5 + d};
    for (int q = 0; q < 2; ++q) {
      g.phi[q] = {1.0 - xi[q], xi[q], 0.0};
      g.weight[q] = 0.5 * g.measure;
    }
    return g;
  }
  const Point& p0 = mesh.vertex(e[0]);
  const Point& p1 = mesh.vertex(e[1]);
  const Point& p2 = mesh.vertex(e[2]);
  const double two_a = 2.0 * g.measure;
  g.grad[0] = {(p1.y - p2.y) / two_a, (p2.x - p1.x) / two_a};
  g.grad[1] = {(p2.y - p0.y) / two_a, (p0.x - p2.x) / two_a};
  g.grad[2] = {(p0.y - p1.y) / two_a, (p1.x - p0.x) / two_a};
  // edge midpoints, exact for quadratics
  g.phi[0] = {0.5, 0.5, 0.0};
  g.phi[1] = {0.0, 0.5, 0.5};
  g.phi[2] = {0.5, 0.0, 0.5};
  g.weight.fill(g.measure / 3.0);
  return g;
}

inline double at_qp(const ElementGeometry& g, const ElementVertices& e, const Vector& values, int q) {
  double w = 0.0;
  for (int k = 0; k < g.nv; ++k) w += g.phi[q][k] * values(e[k]);
  return w;
}

}  // namespace detail

/// Assembles the Galerkin system for -Laplace(u) + S(u, lambda) weak form on
/// the free dofs of a mesh. `Source` provides value/dw/dww/dlambda/dw_dlambda.
template <class Source>
class Assembler {
 public:
  Assembler(const Mesh& mesh, const DofMap& dofs, Source source) : mesh_(mesh), dofs_(dofs), source_(source) {}

  /// f_i = sum_T int grad(phi_i).grad(u_h) + int phi_i S(u_h, lambda)
  Vector residual(const Field& u, double lambda) const {
    check(u);
    Vector f = Vector::Zero(dofs_.size());
    for (std::size_t t = 0; t < mesh_.num_elements(); ++t) {
      const auto g = detail::element_geometry(mesh_, t);
      const auto& e = mesh_.element(t);
      std::array<double, 2> gu{0.0, 0.0};
      for (int k = 0; k < g.nv; ++k) {
        gu[0] += g.grad[k][0] * u.values(e[k]);
        gu[1] += g.grad[k][1] * u.values(e[k]);
      }
      std::array<double, 3> s{};
      for (int q = 0; q < g.nq; ++q) s[q] = source_.value(detail::at_qp(g, e, u.values, q), lambda);
      for (int k = 0; k < g.nv; ++k) {
        const int i = dofs_.free_index(e[k]);
        if (i < 0) continue;
        double r = g.measure * (g.grad[k][0] * gu[0] + g.grad[k][1] * gu[1]);
        for (int q = 0; q < g.nq; ++q) r += g.weight[q] * g.phi[q][k] * s[q];
        f(i) += r;
      }
    }
    return f;
  }

  /// int phi_i dS/dlambda(u_h)
  Vector dlambda(const Field& u) const {
    check(u);
    Vector f = Vector::Zero(dofs_.size());
    for (std::size_t t = 0; t < mesh_.num_elements(); ++t) {
      const auto g = detail::element_geometry(mesh_, t);
      const auto& e = mesh_.element(t);
      std::array<double, 3> s{};
      for (int q = 0; q < g.nq; ++q) s[q] = source_.dlambda(detail::at_qp(g, e, u.values, q));
      for (int k = 0; k < g.nv; ++k) {
        const int i = dofs_.free_index(e[k]);
        if (i < 0) continue;
        for (int q = 0; q < g.nq; ++q) f(i) += g.weight[q] * g.phi[q][k] * s[q];
      }
    }
    return f;
  }

  SparseMatrix stiffness() const {
    return build([](const detail::ElementGeometry& g, int k, int l) {
      return g.measure * (g.grad[k][0] * g.grad[l][0] + g.grad[k][1] * g.grad[l][1]);
    });
  }

  /// K + int phi_i phi_j dS/du(u_h)
  SparseMatrix jacobian(const Field& u, double lambda) const {
    check(u);
    return build_weighted(u, true, [&](double w, const auto&, const auto&, int) { return source_.dw(w, lambda); });
  }

  /// d/du (J v): int phi_i phi_j d2S/du2(u_h) v_h
  SparseMatrix hessian_action(const Field& u, double lambda, const Field& v) const {
    check(u);
    return build_weighted(u, false, [&](double w, const detail::ElementGeometry& g, const ElementVertices& e, int q) {
      return source_.dww(w, lambda) * detail::at_qp(g, e, v.values, q);
    });
  }

  /// dJ/dlambda: int phi_i phi_j d2S/du dlambda(u_h)
  SparseMatrix dlambda_jacobian(const Field& u) const {
    check(u);
    return build_weighted(u, false, [&](double w, const auto&, const auto&, int) { return source_.dw_dlambda(w); });
  }

 private:
  void check(const Field& u) const {
    if (u.mesh_generation != mesh_.generation() || static_cast<std::size_t>(u.values.size()) != mesh_.num_vertices())
      throw GenerationMismatch("assembly: field is not bound to this mesh");
    for (Eigen::Index i = 0; i < u.values.size(); ++i)
      if (!(u.values(i) > -1.0)) throw SingularDeflection("nodal deflection <= -1");
  }

  template <class Entry>
  SparseMatrix build(Entry&& entry) const {
    std::vector<Triplet> trip;
    trip.reserve(mesh_.num_elements() * 9);
    for (std::size_t t = 0; t < mesh_.num_elements(); ++t) {
      const auto g = detail::element_geometry(mesh_, t);
      const auto& e = mesh_.element(t);
      for (int k = 0; k < g.nv; ++k) {
        const int i = dofs_.free_index(e[k]);
        if (i < 0) continue;
        for (int l = 0; l < g.nv; ++l) {
          const int j = dofs_.free_index(e[l]);
          if (j >= 0) trip.emplace_back(i, j, entry(g, k, l));
        }
      }
    }
    SparseMatrix a(dofs_.size(), dofs_.size());
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
  }

  template <class Weight>
  SparseMatrix build_weighted(const Field& u, bool with_stiffness, Weight&& weight) const {
    std::vector<Triplet> trip;
    trip.reserve(mesh_.num_elements() * 9);
    for (std::size_t t = 0; t < mesh_.num_elements(); ++t) {
      const auto g = detail::element_geometry(mesh_, t);
      const auto& e = mesh_.element(t);
      std::array<double, 3> c{};
      for (int q = 0; q < g.nq; ++q) c[q] = g.weight[q] * weight(detail::at_qp(g, e, u.values, q), g, e, q);
      for (int k = 0; k < g.nv; ++k) {
        const int i = dofs_.free_index(e[k]);
        if (i < 0) continue;
        for (int l = 0; l < g.nv; ++l) {
          const int j = dofs_.free_index(e[l]);
          if (j < 0) continue;
          double a = 0.0;
          if (with_stiffness) a = g.measure * (g.grad[k][0] * g.grad[l][0] + g.grad[k][1] * g.grad[l][1]);
          for (int q = 0; q < g.nq; ++q) a += c[q] * g.phi[q][k] * g.phi[q][l];
          trip.emplace_back(i, j, a);
        }
      }
    }
    SparseMatrix a(dofs_.size(), dofs_.size());
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
  }

  const Mesh& mesh_;
  const DofMap& dofs_;
  Source source_;
};

/// Discrete MEMS problem on one mesh, expressed on the free dofs. This is the
/// object the continuation and branching code works with.
class MemsProblem {
 public:
  MemsProblem(std::shared_ptr<const Mesh> mesh, ProblemParams params)
      : mesh_(std::move(mesh)), params_(params), dofs_(std::make_shared<DofMap>(*mesh_)) {
    params_.validate();
    if (mesh_->domain().kind != params_.domain.kind) throw DomainMismatch("mesh domain differs from problem domain");
  }

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  const ProblemParams& params() const { return params_; }
  const DofMap& dofs() const { return *dofs_; }
  Eigen::Index size() const { return dofs_->size(); }
  std::size_t num_elements() const { return mesh_->num_elements(); }

  Field to_field(const Vector& u) const { return dofs_->extend(u); }
  Vector from_field(const Field& f) const { return dofs_->restrict(f); }

  Vector residual(const Vector& u, double lambda) const { return assembler().residual(to_field(u), lambda); }
  SparseMatrix jacobian(const Vector& u, double lambda) const { return assembler().jacobian(to_field(u), lambda); }
  Vector dlambda(const Vector& u, double) const { return assembler().dlambda(to_field(u)); }
  SparseMatrix hessian_action(const Vector& u, double lambda, const Vector& v) const {
    return assembler().hessian_action(to_field(u), lambda, to_field(v));
  }
  SparseMatrix dlambda_jacobian(const Vector& u, double) const { return assembler().dlambda_jacobian(to_field(u)); }
  Vector dlambda2(const Vector& u, double) const { return Vector::Zero(u.size()); }
  SparseMatrix stiffness() const { return assembler().stiffness(); }

  bool admissible(const Vector& u) const { return u.size() == 0 || u.minCoeff() > -1.0 + 1e-12; }
  Norms norms(const Vector& u) const { return bifurcurve::norms(to_field(u), *mesh_); }

 private:
  Assembler<MemsSource> assembler() const { return {*mesh_, *dofs_, params_.source()}; }

  std::shared_ptr<const Mesh> mesh_;
  ProblemParams params_;
  std::shared_ptr<const DofMap> dofs_;
};

}  // namespace bifurcurve

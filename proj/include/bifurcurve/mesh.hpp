#pragma once

#include "common.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bifurcurve {

enum class DomainKind { interval, square, disk, annulus };

/// Computational domain. Dirichlet-zero conditions hold on the whole boundary.
struct DomainSpec {
  DomainKind kind = DomainKind::square;
  double a = -1.0;  ///< interval left end
  double b = 1.0;   ///< interval right end
  double inner_radius = 0.0;  ///< annulus r1, outer radius is 1

  static DomainSpec interval(double a, double b) {
    DomainSpec d;
    d.kind = DomainKind::interval;
    d.a = a;
    d.b = b;
    return d;
  }
  static DomainSpec square() { return DomainSpec{}; }
  static DomainSpec disk() {
    DomainSpec d;
    d.kind = DomainKind::disk;
    return d;
  }
  static DomainSpec annulus(double r1) {
    DomainSpec d;
    d.kind = DomainKind::annulus;
    d.inner_radius = r1;
    return d;
  }

  int dimension() const { return kind == DomainKind::interval ? 1 : 2; }
  bool curved() const { return kind == DomainKind::disk || kind == DomainKind::annulus; }

  void validate() const {
    if (kind == DomainKind::interval && !(a < b))
      throw std::invalid_argument("interval domain requires a < b");
    if (kind == DomainKind::annulus && !(inner_radius > 0.0 && inner_radius < 1.0))
      throw std::invalid_argument("annulus inner radius must lie in (0, 1)");
  }

  /// Exact measure of the continuous domain.
  double exact_measure() const {
    switch (kind) {
      case DomainKind::interval: return b - a;
      case DomainKind::square: return 1.0;
      case DomainKind::disk: return std::numbers::pi;
      case DomainKind::annulus: return std::numbers::pi * (1.0 - inner_radius * inner_radius);
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case DomainKind::interval: return "interval";
      case DomainKind::square: return "square";
      case DomainKind::disk: return "disk";
      case DomainKind::annulus: return "annulus";
    }
    return "unknown";
  }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Element vertex ids. In 2D (v0, v1) is the reference edge and v2 the newest
/// vertex, ordered counterclockwise. In 1D (v0, v1) is the interval, v2 = -1.
using ElementVertices = std::array<int, 3>;

namespace detail {

struct ForestNode {
  ElementVertices v{-1, -1, -1};
  int parent = -1;
  std::array<int, 2> children{-1, -1};
  bool is_leaf() const { return children[0] < 0; }
};

inline std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

inline double cross(const Point& o, const Point& p, const Point& q) {
  return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
}

inline double distance(const Point& p, const Point& q) { return std::hypot(p.x - q.x, p.y - q.y); }

}  // namespace detail

class Mesh;
inline Mesh generate_domain(const DomainSpec& spec, int initial_resolution, int symmetry_sectors);
inline Mesh refine(const Mesh& mesh, std::span<const int> marked);
namespace detail {
inline Mesh coarsen_once(const Mesh& mesh, std::span<const int> marked, std::vector<int>* element_map);
}

/// Conforming simplicial mesh with its newest-vertex-bisection history.
/// Values are immutable; refine() and coarsen() return new generations.
class Mesh {
 public:
  std::uint64_t generation() const { return generation_; }
  const DomainSpec& domain() const { return domain_; }
  int dimension() const { return domain_.dimension(); }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_elements() const { return leaves_.size(); }
  const std::vector<Point>& vertices() const { return vertices_; }
  const Point& vertex(int i) const { return vertices_[i]; }
  const std::vector<ElementVertices>& elements() const { return elements_; }
  const ElementVertices& element(std::size_t i) const { return elements_[i]; }
  bool is_boundary(int v) const { return boundary_[v] != 0; }
  const std::vector<char>& boundary_flags() const { return boundary_; }
  int vertices_per_element() const { return dimension() == 1 ? 2 : 3; }

  /// Number of bisections separating element i from its initial ancestor.
  int level(std::size_t i) const {
    int l = 0;
    for (int n = forest_[leaves_[i]].parent; n >= 0; n = forest_[n].parent) ++l;
    return l;
  }

  /// Forest node id of the parent of element i, or -1 for an initial element.
  int parent_of(std::size_t i) const { return forest_[leaves_[i]].parent; }

  /// Index of the sibling of element i among the active elements, or -1.
  int sibling_of(std::size_t i) const {
    const int p = forest_[leaves_[i]].parent;
    if (p < 0) return -1;
    const auto& ch = forest_[p].children;
    const int other = ch[0] == leaves_[i] ? ch[1] : ch[0];
    for (std::size_t k = 0; k < leaves_.size(); ++k)
      if (leaves_[k] == other) return static_cast<int>(k);
    return -1;
  }

  /// Signed area (2D) or length (1D) of element i.
  double element_measure(std::size_t i) const {
    const auto& e = elements_[i];
    if (dimension() == 1) return vertices_[e[1]].x - vertices_[e[0]].x;
    return 0.5 * detail::cross(vertices_[e[0]], vertices_[e[1]], vertices_[e[2]]);
  }

  double total_measure() const {
    double sum = 0.0;
    for (std::size_t i = 0; i < num_elements(); ++i) sum += element_measure(i);
    return sum;
  }

  double max_edge_length() const {
    double h = 0.0;
    for (const auto& e : elements_) {
      const int n = vertices_per_element();
      for (int k = 0; k < n; ++k)
        for (int l = k + 1; l < n; ++l)
          h = std::max(h, detail::distance(vertices_[e[k]], vertices_[e[l]]));
    }
    return h;
  }

  /// Smallest interior angle over all triangles, in radians.
  double min_angle() const {
    double best = std::numbers::pi;
    for (const auto& e : elements_) {
      for (int k = 0; k < 3; ++k) {
        const Point& o = vertices_[e[k]];
        const Point& p = vertices_[e[(k + 1) % 3]];
        const Point& q = vertices_[e[(k + 2) % 3]];
        const double ux = p.x - o.x, uy = p.y - o.y, vx = q.x - o.x, vy = q.y - o.y;
        best = std::min(best, std::atan2(std::abs(ux * vy - uy * vx), ux * vx + uy * vy));
      }
    }
    return best;
  }

  /// Number of active elements incident to every edge (2D) keyed by edge_key.
  std::unordered_map<std::uint64_t, int> edge_incidence() const {
    std::unordered_map<std::uint64_t, int> count;
    for (const auto& e : elements_)
      for (int k = 0; k < 3; ++k) ++count[detail::edge_key(e[k], e[(k + 1) % 3])];
    return count;
  }

 private:
  friend Mesh generate_domain(const DomainSpec&, int, int);
  friend Mesh refine(const Mesh&, std::span<const int>);
  friend Mesh detail::coarsen_once(const Mesh&, std::span<const int>, std::vector<int>*);

  void finalize() {
    generation_ = detail::next_generation();
    elements_.clear();
    elements_.reserve(leaves_.size());
    for (int n : leaves_) elements_.push_back(forest_[n].v);
    boundary_.assign(vertices_.size(), 0);
    if (dimension() == 1) {
      std::vector<int> degree(vertices_.size(), 0);
      for (const auto& e : elements_) {
        ++degree[e[0]];
        ++degree[e[1]];
      }
      for (std::size_t v = 0; v < degree.size(); ++v) boundary_[v] = degree[v] == 1;
    } else {
      for (const auto& [key, count] : edge_incidence()) {
        if (count != 1) continue;
        boundary_[key >> 32] = 1;
        boundary_[key & 0xffffffffu] = 1;
      }
    }
  }

  std::uint64_t generation_ = 0;
  DomainSpec domain_;
  std::vector<Point> vertices_;
  std::vector<detail::ForestNode> forest_;
  std::vector<int> leaves_;
  std::vector<ElementVertices> elements_;
  std::vector<char> boundary_;
};

/// Nodal P1 coefficients bound to one mesh generation.
struct Field {
  std::uint64_t mesh_generation = 0;
  Vector values;

  static Field zeros(const Mesh& mesh) { return {mesh.generation(), Vector::Zero(mesh.num_vertices())}; }

  template <class F>
  static Field sample(const Mesh& mesh, F&& f) {
    Field out = zeros(mesh);
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) out.values(i) = f(mesh.vertex(i));
    return out;
  }
};

namespace detail {

/// Sets the reference edge of a fresh triangle to its longest edge (ties go
/// to the edge whose opposite vertex has the lowest id) and orients it CCW.
inline ElementVertices orient_initial(const std::vector<Point>& pts, ElementVertices t) {
  int best = -1;
  double best_len = -1.0;
  for (int k = 0; k < 3; ++k) {
    // edge opposite vertex t[k]
    const double len = distance(pts[t[(k + 1) % 3]], pts[t[(k + 2) % 3]]);
    const bool longer = len > best_len * (1.0 + 1e-12);
    const bool tie = !longer && len >= best_len * (1.0 - 1e-12);
    if (best < 0 || longer || (tie && t[k] < t[best])) {
      if (longer || best < 0) best_len = len;
      best = k;
    }
  }
  ElementVertices out{t[(best + 1) % 3], t[(best + 2) % 3], t[best]};
  if (cross(pts[out[0]], pts[out[1]], pts[out[2]]) < 0.0) std::swap(out[0], out[1]);
  return out;
}

struct Ring {
  double radius;
  int count;  // sectors * q
};

/// Triangulates concentric rings sector by sector. Each sector is built as the
/// mirror image of its left half so the mesh inherits the dihedral symmetry of
/// the sector count whenever no two consecutive rings have odd q.
inline void mesh_rings(bool with_center, const std::vector<Ring>& rings, int sectors,
                       std::vector<Point>& pts, std::vector<ElementVertices>& tris) {
  std::vector<int> offset;
  if (with_center) pts.push_back({0.0, 0.0});
  for (const auto& ring : rings) {
    offset.push_back(static_cast<int>(pts.size()));
    for (int j = 0; j < ring.count; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / ring.count;
      pts.push_back({ring.radius * std::cos(theta), ring.radius * std::sin(theta)});
    }
  }
  auto add = [&](int a, int b, int c) { tris.push_back({a, b, c}); };
  if (with_center) {
    for (int j = 0; j < rings[0].count; ++j)
      add(0, offset[0] + j, offset[0] + (j + 1) % rings[0].count);
  }
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    const int q_in = rings[k].count / sectors;
    const int q_out = rings[k + 1].count / sectors;
    for (int s = 0; s < sectors; ++s) {
      auto in = [&](int i) { return offset[k] + (s * q_in + i) % rings[k].count; };
      auto out = [&](int j) { return offset[k + 1] + (s * q_out + j) % rings[k + 1].count; };
      auto in_m = [&](int i) { return in(q_in - i); };
      auto out_m = [&](int j) { return out(q_out - j); };
      const int imax = q_in / 2;
      const int jmax = q_out / 2;
      int i = 0, j = 0;
      while (i < imax || j < jmax) {
        const bool advance_inner =
            j == jmax || (i < imax && static_cast<long>(i + 1) * q_out <= static_cast<long>(j + 1) * q_in);
        if (advance_inner) {
          add(in(i), in(i + 1), out(j));
          add(in_m(i), in_m(i + 1), out_m(j));
          ++i;
        } else {
          add(in(i), out(j + 1), out(j));
          add(in_m(i), out_m(j + 1), out_m(j));
          ++j;
        }
      }
      const bool odd_in = q_in % 2 == 1, odd_out = q_out % 2 == 1;
      if (!odd_in && odd_out) {
        add(in(imax), out(jmax + 1), out(jmax));
      } else if (odd_in && !odd_out) {
        add(in(imax), in(imax + 1), out(jmax));
      } else if (odd_in && odd_out) {
        add(in(imax), in(imax + 1), out(jmax + 1));
        add(in(imax), out(jmax + 1), out(jmax));
      }
    }
  }
}

/// Locates points in a 2D mesh through a uniform bucket grid.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(mesh) {
    const auto& pts = mesh.vertices();
    lo_ = hi_ = pts.front();
    for (const auto& p : pts) {
      lo_.x = std::min(lo_.x, p.x);
      lo_.y = std::min(lo_.y, p.y);
      hi_.x = std::max(hi_.x, p.x);
      hi_.y = std::max(hi_.y, p.y);
    }
    const double pad = 1e-9 * std::max(hi_.x - lo_.x, hi_.y - lo_.y);
    lo_.x -= pad;
    lo_.y -= pad;
    hi_.x += pad;
    hi_.y += pad;
    n_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_elements()) / 2.0)));
    cells_.assign(static_cast<std::size_t>(n_) * n_, {});
    for (std::size_t t = 0; t < mesh.num_elements(); ++t) {
      const auto& e = mesh.element(t);
      double x0 = pts[e[0]].x, x1 = x0, y0 = pts[e[0]].y, y1 = y0;
      for (int k = 1; k < 3; ++k) {
        x0 = std::min(x0, pts[e[k]].x);
        x1 = std::max(x1, pts[e[k]].x);
        y0 = std::min(y0, pts[e[k]].y);
        y1 = std::max(y1, pts[e[k]].y);
      }
      for (int cx = cell_x(x0); cx <= cell_x(x1); ++cx)
        for (int cy = cell_y(y0); cy <= cell_y(y1); ++cy) cells_[cy * n_ + cx].push_back(static_cast<int>(t));
    }
  }

  /// Element containing p (or the closest one) with clamped barycentrics.
  std::pair<int, std::array<double, 3>> locate(const Point& p) const {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    std::array<double, 3> best_bary{};
    const int cx = cell_x(p.x), cy = cell_y(p.y);
    for (int radius = 0; radius <= n_; ++radius) {
      for (int gx = std::max(0, cx - radius); gx <= std::min(n_ - 1, cx + radius); ++gx) {
        for (int gy = std::max(0, cy - radius); gy <= std::min(n_ - 1, cy + radius); ++gy) {
          if (std::max(std::abs(gx - cx), std::abs(gy - cy)) != radius) continue;
          for (int t : cells_[gy * n_ + gx]) {
            const auto bary = barycentric(t, p);
            const double score = std::min({bary[0], bary[1], bary[2]});
            if (score > best_score) {
              best_score = score;
              best = t;
              best_bary = bary;
            }
          }
        }
      }
      if (best >= 0 && best_score >= -1e-12) break;
      // outside the polygon: one more ring of cells settles the nearest element
      if (best >= 0 && radius >= 1) break;
    }
    double sum = 0.0;
    for (double& l : best_bary) {
      l = std::max(l, 0.0);
      sum += l;
    }
    for (double& l : best_bary) l /= sum;
    return {best, best_bary};
  }

 private:
  int cell_x(double x) const {
    return std::clamp(static_cast<int>((x - lo_.x) / (hi_.x - lo_.x) * n_), 0, n_ - 1);
  }
  int cell_y(double y) const {
    return std::clamp(static_cast<int>((y - lo_.y) / (hi_.y - lo_.y) * n_), 0, n_ - 1);
  }
  std::array<double, 3> barycentric(int t, const Point& p) const {
    const auto& e = mesh_.element(t);
    const auto& a = mesh_.vertex(e[0]);
    const auto& b = mesh_.vertex(e[1]);
    const auto& c = mesh_.vertex(e[2]);
    const double area = cross(a, b, c);
    return {cross(p, b, c) / area, cross(a, p, c) / area, cross(a, b, p) / area};
  }

  const Mesh& mesh_;
  Point lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace detail

/// Builds the initial mesh of a domain.
///
/// The square is an n x n grid of squares cut along the (i,j)-(i+1,j+1)
/// diagonal. The disk is the hexagonal ring mesh with n rings (6k vertices on
/// ring k). The annulus uses rings whose vertex counts are even multiples of
/// `symmetry_sectors`, radially spaced for unit aspect ratio, with outer
/// spacing close to 1/n. Intervals are split uniformly.
inline Mesh generate_domain(const DomainSpec& spec, int initial_resolution, int symmetry_sectors = 64) {
  spec.validate();
  if (initial_resolution < 1) throw std::invalid_argument("initial_resolution must be >= 1");
  const int n = initial_resolution;
  Mesh mesh;
  mesh.domain_ = spec;
  std::vector<ElementVertices> tris;
  auto& pts = mesh.vertices_;

  switch (spec.kind) {
    case DomainKind::interval: {
      for (int i = 0; i <= n; ++i) pts.push_back({spec.a + (spec.b - spec.a) * i / n, 0.0});
      pts.back().x = spec.b;
      for (int i = 0; i < n; ++i) tris.push_back({i, i + 1, -1});
      break;
    }
    case DomainKind::square: {
      for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) pts.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
      auto id = [n](int i, int j) { return j * (n + 1) + i; };
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
          tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
      }
      break;
    }
    case DomainKind::disk: {
      std::vector<detail::Ring> rings;
      for (int k = 1; k <= n; ++k) rings.push_back({static_cast<double>(k) / n, 6 * k});
      rings.back().radius = 1.0;
      detail::mesh_rings(true, rings, 6, pts, tris);
      break;
    }
    case DomainKind::annulus: {
      if (symmetry_sectors < 1) throw std::invalid_argument("symmetry_sectors must be >= 1");
      const double r1 = spec.inner_radius;
      const double h = 1.0 / n;
      auto count_at = [&](double r) {
        const int q = std::max(1, static_cast<int>(std::lround(std::numbers::pi * r / (h * symmetry_sectors))));
        return 2 * q * symmetry_sectors;
      };
      std::vector<double> radii{r1};
      while (radii.back() < 1.0) {
        const double r = radii.back();
        radii.push_back(r + std::min(2.0 * std::numbers::pi * r / count_at(r), h));
      }
      const double scale = (1.0 - r1) / (radii.back() - r1);
      std::vector<detail::Ring> rings;
      for (double r : radii) rings.push_back({r1 + (r - r1) * scale, 0});
      rings.front().radius = r1;
      rings.back().radius = 1.0;
      for (auto& ring : rings) ring.count = count_at(ring.radius);
      detail::mesh_rings(false, rings, symmetry_sectors, pts, tris);
      break;
    }
  }

  for (auto& t : tris) {
    detail::ForestNode node;
    node.v = spec.dimension() == 1 ? t : detail::orient_initial(pts, t);
    mesh.leaves_.push_back(static_cast<int>(mesh.forest_.size()));
    mesh.forest_.push_back(node);
  }
  mesh.finalize();
  return mesh;
}

/// Newest vertex bisection of the marked elements plus the closure that
/// removes hanging nodes. Each marked element gets its reference edge marked;
/// an element with any marked edge gets its reference edge marked until a
/// fixpoint is reached. New boundary vertices on circles are projected onto
/// the exact circle.
inline Mesh refine(const Mesh& mesh, std::span<const int> marked) {
  Mesh out = mesh;
  for (int i : marked)
    if (i < 0 || static_cast<std::size_t>(i) >= mesh.num_elements())
      throw std::out_of_range("refine: marked element index out of range");

  auto& forest = out.forest_;
  auto& pts = out.vertices_;
  std::vector<int> new_leaves;
  new_leaves.reserve(mesh.num_elements() * 2);

  if (mesh.dimension() == 1) {
    std::vector<char> mark(mesh.num_elements(), 0);
    for (int i : marked) mark[i] = 1;
    for (std::size_t i = 0; i < mesh.num_elements(); ++i) {
      const int node = mesh.leaves_[i];
      if (!mark[i]) {
        new_leaves.push_back(node);
        continue;
      }
      const auto v = forest[node].v;
      const int m = static_cast<int>(pts.size());
      pts.push_back({0.5 * (pts[v[0]].x + pts[v[1]].x), 0.0});
      const int c0 = static_cast<int>(forest.size());
      forest.push_back({{v[0], m, -1}, node, {-1, -1}});
      forest.push_back({{m, v[1], -1}, node, {-1, -1}});
      forest[node].children = {c0, c0 + 1};
      new_leaves.push_back(c0);
      new_leaves.push_back(c0 + 1);
    }
    out.leaves_ = std::move(new_leaves);
    out.finalize();
    return out;
  }

  const auto incidence = mesh.edge_incidence();
  std::unordered_map<std::uint64_t, char> marked_edges;
  for (int i : marked) {
    const auto& e = mesh.element(i);
    marked_edges[detail::edge_key(e[0], e[1])] = 1;
  }
  // closure: a marked edge forces the reference edge of every element holding it
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& e : mesh.elements()) {
      const auto ref = detail::edge_key(e[0], e[1]);
      if (marked_edges.count(ref)) continue;
      if (marked_edges.count(detail::edge_key(e[1], e[2])) || marked_edges.count(detail::edge_key(e[2], e[0]))) {
        marked_edges[ref] = 1;
        changed = true;
      }
    }
  }

  const DomainSpec& dom = mesh.domain();
  std::unordered_map<std::uint64_t, int> midpoint;
  auto midpoint_of = [&](int a, int b) {
    const auto key = detail::edge_key(a, b);
    if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
    Point m{0.5 * (pts[a].x + pts[b].x), 0.5 * (pts[a].y + pts[b].y)};
    const auto inc = incidence.find(key);
    if (dom.curved() && inc != incidence.end() && inc->second == 1) {
      double target = 1.0;
      if (dom.kind == DomainKind::annulus) {
        const double r = 0.5 * (std::hypot(pts[a].x, pts[a].y) + std::hypot(pts[b].x, pts[b].y));
        if (std::abs(r - dom.inner_radius) < std::abs(r - 1.0)) target = dom.inner_radius;
      }
      const double r = std::hypot(m.x, m.y);
      m.x *= target / r;
      m.y *= target / r;
    }
    const int id = static_cast<int>(pts.size());
    pts.push_back(m);
    midpoint.emplace(key, id);
    return id;
  };

  auto bisect = [&](auto&& self, int node) -> void {
    const auto v = forest[node].v;
    const int a = v[0], b = v[1], c = v[2];
    const int m = midpoint_of(a, b);
    const int c0 = static_cast<int>(forest.size());
    forest.push_back({{c, a, m}, node, {-1, -1}});
    forest.push_back({{b, c, m}, node, {-1, -1}});
    forest[node].children = {c0, c0 + 1};
    if (marked_edges.count(detail::edge_key(c, a)))
      self(self, c0);
    else
      new_leaves.push_back(c0);
    if (marked_edges.count(detail::edge_key(b, c)))
      self(self, c0 + 1);
    else
      new_leaves.push_back(c0 + 1);
  };

  for (std::size_t i = 0; i < mesh.num_elements(); ++i) {
    const int node = mesh.leaves_[i];
    const auto& v = forest[node].v;
    if (marked_edges.count(detail::edge_key(v[0], v[1])))
      bisect(bisect, node);
    else
      new_leaves.push_back(node);
  }
  out.leaves_ = std::move(new_leaves);
  out.finalize();
  return out;
}

/// Merges sibling pairs produced by bisection. A newest vertex is removed only
/// when every active element touching it is a marked child of a parent that
/// was bisected at that vertex, so the result stays conforming. Initial
/// elements are never merged. If `element_map` is given it receives, for each
/// input element, its index in the output (-1 for merged elements).
inline Mesh coarsen(const Mesh& mesh, std::span<const int> marked, std::vector<int>* element_map = nullptr) {
  std::vector<int> total(mesh.num_elements());
  std::iota(total.begin(), total.end(), 0);
  std::vector<int> current(marked.begin(), marked.end());
  Mesh out = mesh;
  // merged parents inherit the mark, so repeated passes undo nested bisections
  for (bool first = true;; first = false) {
    std::vector<int> step;
    Mesh next = detail::coarsen_once(out, current, &step);
    const bool progress = next.num_elements() < out.num_elements();
    if (!progress && !first) break;
    std::vector<char> was(out.num_elements(), 0), mark(next.num_elements(), 1);
    for (int i : current) was[i] = 1;
    for (std::size_t i = 0; i < step.size(); ++i)
      if (step[i] >= 0) mark[step[i]] = was[i];
    for (int& t : total) t = t >= 0 ? step[t] : -1;
    out = std::move(next);
    if (!progress) break;
    current.clear();
    for (std::size_t i = 0; i < mark.size(); ++i)
      if (mark[i]) current.push_back(static_cast<int>(i));
  }
  if (element_map) *element_map = std::move(total);
  return out;
}

inline Mesh detail::coarsen_once(const Mesh& mesh, std::span<const int> marked, std::vector<int>* element_map) {
  const std::size_t ne = mesh.num_elements();
  std::vector<char> mark(ne, 0);
  for (int i : marked) {
    if (i < 0 || static_cast<std::size_t>(i) >= ne) throw std::out_of_range("coarsen: marked element index out of range");
    mark[i] = 1;
  }
  const auto& forest = mesh.forest_;
  std::vector<int> leaf_index(forest.size(), -1);
  for (std::size_t i = 0; i < ne; ++i) leaf_index[mesh.leaves_[i]] = static_cast<int>(i);

  // parents whose two children are marked leaves, grouped by bisection vertex
  std::unordered_map<int, std::vector<int>> parents_at;
  std::vector<int> vertex_order;
  for (std::size_t i = 0; i < ne; ++i) {
    if (!mark[i]) continue;
    const int p = forest[mesh.leaves_[i]].parent;
    if (p < 0) continue;
    const auto& ch = forest[p].children;
    if (ch[0] != mesh.leaves_[i]) continue;  // visit each pair once
    const int l0 = leaf_index[ch[0]], l1 = leaf_index[ch[1]];
    if (l0 < 0 || l1 < 0 || !mark[l0] || !mark[l1]) continue;
    const int m = mesh.dimension() == 1 ? forest[ch[0]].v[1] : forest[ch[0]].v[2];
    auto [it, inserted] = parents_at.try_emplace(m);
    if (inserted) vertex_order.push_back(m);
    it->second.push_back(p);
  }

  std::vector<int> incident(mesh.num_vertices(), 0);
  for (const auto& e : mesh.elements())
    for (int k = 0; k < mesh.vertices_per_element(); ++k) ++incident[e[k]];

  std::vector<char> removed_vertex(mesh.num_vertices(), 0);
  std::vector<char> merged_parent(forest.size(), 0);
  for (int m : vertex_order) {
    const auto& parents = parents_at[m];
    if (incident[m] != 2 * static_cast<int>(parents.size())) continue;
    removed_vertex[m] = 1;
    for (int p : parents) merged_parent[p] = 1;
  }

  // new leaf order: a merged parent takes the slot of its first child
  std::vector<int> leaves;
  std::vector<int> old_to_new(ne, -1);
  for (std::size_t i = 0; i < ne; ++i) {
    const int node = mesh.leaves_[i];
    const int p = forest[node].parent;
    if (p >= 0 && merged_parent[p]) {
      if (forest[p].children[0] == node) leaves.push_back(p);
      continue;
    }
    old_to_new[i] = static_cast<int>(leaves.size());
    leaves.push_back(node);
  }
  if (element_map) *element_map = old_to_new;

  // compact the forest and the vertex list
  Mesh out;
  out.domain_ = mesh.domain_;
  std::vector<int> vmap(mesh.num_vertices(), -1);
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    if (removed_vertex[v]) continue;
    vmap[v] = static_cast<int>(out.vertices_.size());
    out.vertices_.push_back(mesh.vertices_[v]);
  }
  std::vector<char> drop(forest.size(), 0);
  for (std::size_t p = 0; p < forest.size(); ++p)
    if (merged_parent[p]) drop[forest[p].children[0]] = drop[forest[p].children[1]] = 1;
  std::vector<int> nmap(forest.size(), -1);
  for (std::size_t k = 0; k < forest.size(); ++k) {
    if (drop[k]) continue;
    nmap[k] = static_cast<int>(out.forest_.size());
    out.forest_.push_back(forest[k]);
  }
  for (auto& node : out.forest_) {
    for (int& v : node.v)
      if (v >= 0) v = vmap[v];
    if (node.parent >= 0) node.parent = nmap[node.parent];
    if (node.children[0] >= 0) {
      if (nmap[node.children[0]] < 0)
        node.children = {-1, -1};
      else
        node.children = {nmap[node.children[0]], nmap[node.children[1]]};
    }
  }
  for (int node : leaves) out.leaves_.push_back(nmap[node]);
  out.finalize();
  return out;
}

/// P1 interpolation of a field from `old_mesh` onto the vertices of `new_mesh`.
inline Field interpolate(const Field& field, const Mesh& old_mesh, const Mesh& new_mesh) {
  if (field.mesh_generation != old_mesh.generation() ||
      static_cast<std::size_t>(field.values.size()) != old_mesh.num_vertices())
    throw GenerationMismatch("interpolate: field is not bound to the source mesh");
  Field out = Field::zeros(new_mesh);
  if (old_mesh.dimension() == 1) {
    std::vector<std::pair<double, int>> xs;
    for (std::size_t v = 0; v < old_mesh.num_vertices(); ++v) xs.push_back({old_mesh.vertex(v).x, static_cast<int>(v)});
    std::sort(xs.begin(), xs.end());
    for (std::size_t v = 0; v < new_mesh.num_vertices(); ++v) {
      const double x = std::clamp(new_mesh.vertex(v).x, xs.front().first, xs.back().first);
      auto it = std::upper_bound(xs.begin(), xs.end(), std::make_pair(x, std::numeric_limits<int>::max()));
      if (it == xs.end()) --it;
      if (it == xs.begin()) ++it;
      const auto& [x1, i1] = *it;
      const auto& [x0, i0] = *(it - 1);
      const double t = (x - x0) / (x1 - x0);
      out.values(v) = (1.0 - t) * field.values(i0) + t * field.values(i1);
    }
    return out;
  }
  const detail::PointLocator locator(old_mesh);
  for (std::size_t v = 0; v < new_mesh.num_vertices(); ++v) {
    const auto [t, bary] = locator.locate(new_mesh.vertex(v));
    const auto& e = old_mesh.element(t);
    out.values(v) = bary[0] * field.values(e[0]) + bary[1] * field.values(e[1]) + bary[2] * field.values(e[2]);
  }
  return out;
}

/// Writes the plain-text snapshot: "NV NT D", coordinates, element vertex
/// ids (0-based), then nodal values. Reals use 17 significant digits.
inline void write_snapshot(std::ostream& os, const Mesh& mesh, const Field& field) {
  if (field.mesh_generation != mesh.generation()) throw GenerationMismatch("write_snapshot: field/mesh mismatch");
  char buf[64];
  const int d = mesh.dimension();
  os << mesh.num_vertices() << ' ' << mesh.num_elements() << ' ' << d << '\n';
  for (const auto& p : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g", p.x);
    os << buf;
    if (d == 2) {
      std::snprintf(buf, sizeof buf, " %.17g", p.y);
      os << buf;
    }
    os << '\n';
  }
  for (const auto& e : mesh.elements()) {
    os << e[0] << ' ' << e[1];
    if (d == 2) os << ' ' << e[2];
    os << '\n';
  }
  for (Eigen::Index i = 0; i < field.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", field.values(i));
    os << buf << '\n';
  }
}

}  // namespace bifurcurve

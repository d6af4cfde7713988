#pragma once

#include "branching.hpp"
#include "oracle.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace bifurcurve::io {

inline constexpr const char* kBranchHeader =
    "step,s,lambda,u_l2,u_linf,n_dof,n_tri,newton_iters,ds,det_sign,smallest_eig,stable";
inline constexpr const char* kFoldsHeader = "index,lambda,u_l2,u_linf";
inline constexpr const char* kBranchPointsHeader = "lambda,u_l2,u_linf,beta,n_dof";
inline constexpr const char* kOracleCurveHeader = "eta,w,wprime,u0_abs,lambda";
inline constexpr const char* kOracleFoldsHeader = "index,lambda";
inline constexpr const char* kConvergenceHeader = "h_max,n_dof,lambda0,lambda1,rel_err0,rel_err1";

/// Shortest round-trip text for a double ("nan", "inf", "-inf" for non-finite).
inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class P>
void write_branch(std::ostream& os, const std::vector<BranchSample<P>>& samples) {
  os << kBranchHeader << '\n';
  for (const auto& s : samples)
    os << s.step << ',' << num(s.s) << ',' << num(s.lambda) << ',' << num(s.norms.l2) << ',' << num(s.norms.linf) << ','
       << s.n_dof << ',' << s.n_tri << ',' << s.newton_iters << ',' << num(s.ds) << ',' << s.det_sign << ','
       << num(s.smallest_eig) << ',' << (s.stable ? 1 : 0) << '\n';
}

template <class P>
void write_folds(std::ostream& os, const std::vector<FoldRecord<P>>& folds) {
  os << kFoldsHeader << '\n';
  for (const auto& f : folds) os << f.index << ',' << num(f.lambda) << ',' << num(f.norms.l2) << ',' << num(f.norms.linf) << '\n';
}

template <class P>
void write_branch_points(std::ostream& os, const std::vector<BranchPointRecord<P>>& bps) {
  os << kBranchPointsHeader << '\n';
  for (const auto& b : bps) {
    const Norms n = b.problem->norms(b.u);
    os << num(b.lambda) << ',' << num(n.l2) << ',' << num(n.linf) << ',' << num(b.beta) << ',' << b.problem->size() << '\n';
  }
}

inline void write_oracle_curve(std::ostream& os, const oracle::Trajectory& t) {
  os << kOracleCurveHeader << '\n';
  for (const auto& s : t.samples) {
    const auto [u0, lambda] = oracle::map_to_bifurcation(s.eta, s.w);
    os << num(s.eta) << ',' << num(s.w) << ',' << num(s.wprime) << ',' << num(u0) << ',' << num(lambda) << '\n';
  }
}

inline void write_oracle_folds(std::ostream& os, const std::vector<oracle::Fold>& folds) {
  os << kOracleFoldsHeader << '\n';
  for (const auto& f : folds) os << f.index << ',' << num(f.lambda) << '\n';
}

/// Opens `dir/name` for binary writing (LF line endings on every platform).
inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw Error("cannot write " + (dir / name).string());
  return os;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw Error("no column " + name);
  }
  double value(std::size_t row, const std::string& name) const { return std::stod(rows.at(row).at(column(name))); }
};

/// Plain comma-separated reader for the files written above (no quoting).
inline Table read_csv(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw Error("read_csv: empty input");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto r = split(line);
    if (r.size() != t.header.size()) throw Error("read_csv: ragged row");
    t.rows.push_back(std::move(r));
  }
  return t;
}

struct Snapshot {
  int dimension = 2;
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> elements;  ///< third index -1 in 1D
  std::vector<double> values;
};

inline Snapshot read_snapshot(std::istream& is) {
  Snapshot s;
  int nv = 0, nt = 0;
  if (!(is >> nv >> nt >> s.dimension) || nv < 0 || nt < 0 || (s.dimension != 1 && s.dimension != 2))
    throw Error("read_snapshot: bad header");
  s.vertices.resize(nv);
  for (auto& p : s.vertices) {
    if (!(is >> p.x)) throw Error("read_snapshot: truncated coordinates");
    if (s.dimension == 2 && !(is >> p.y)) throw Error("read_snapshot: truncated coordinates");
  }
  s.elements.resize(nt);
  for (auto& e : s.elements) {
    e = {-1, -1, -1};
    for (int k = 0; k < s.dimension + 1; ++k)
      if (!(is >> e[k]) || e[k] < 0 || e[k] >= nv) throw Error("read_snapshot: bad element");
  }
  s.values.resize(nv);
  for (auto& v : s.values)
    if (!(is >> v)) throw Error("read_snapshot: truncated values");
  return s;
}

}  // namespace bifurcurve::io

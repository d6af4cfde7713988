#pragma once

#include "config.hpp"
#include "io.hpp"

#include <functional>
#include <numeric>

namespace bifurcurve {

inline std::shared_ptr<const MemsProblem> make_problem(const ProblemParams& params, int resolution, int sectors = 64) {
  auto mesh = std::make_shared<const Mesh>(generate_domain(params.domain, resolution, sectors));
  return std::make_shared<const MemsProblem>(std::move(mesh), params);
}

/// Trace from the trivial state u = 0, lambda = 0 towards increasing lambda.
template <ContinuationProblem P>
Branch<P> trace_from_rest(std::shared_ptr<const P> p, const ContinuationConfig& cfg, const TraceHooks<P>& hooks = {}) {
  const Eigen::Index n = p->size();
  return trace(std::move(p), Vector::Zero(n), 0.0, Tangent{Vector::Zero(n), 1.0}, cfg, hooks);
}

/// Number of sign changes of lambda - level between consecutive samples.
template <class P>
int count_crossings(const std::vector<BranchSample<P>>& samples, double level) {
  int n = 0;
  for (std::size_t i = 1; i < samples.size(); ++i)
    if ((samples[i - 1].lambda - level) * (samples[i].lambda - level) < 0.0) ++n;
  return n;
}

/// Dominant angular Fourier mode (0..kmax) of a nodal field on a disk or annulus.
inline int angular_mode(const Field& f, const Mesh& mesh, int kmax = 16) {
  int best = 0;
  double best_amp = -1.0;
  for (int k = 0; k <= kmax; ++k) {
    double c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
      const Point& x = mesh.vertex(static_cast<int>(i));
      const double th = std::atan2(x.y, x.x);
      c += f.values(i) * std::cos(k * th);
      s += f.values(i) * std::sin(k * th);
    }
    const double amp = std::hypot(c, s) * (k == 0 ? 0.5 : 1.0);
    if (amp > best_amp) {
      best_amp = amp;
      best = k;
    }
  }
  return best;
}

/// sum_i u_i cos(k theta_i): changes sign when a y-even state passes through
/// the radial branch along mode k.
inline double modal_amplitude(const Field& f, const Mesh& mesh, int k) {
  double c = 0.0;
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Point& x = mesh.vertex(static_cast<int>(i));
    c += f.values(i) * std::cos(k * std::atan2(x.y, x.x));
  }
  return c;
}

inline bool has_angle(const Mesh& m) {
  return m.domain().kind == DomainKind::disk || m.domain().kind == DomainKind::annulus;
}

// ---------------------------------------------------------------------------
// trace

struct TraceRun {
  Branch<MemsProblem> branch;
  std::vector<BranchPointRecord<MemsProblem>> branch_points;
  std::vector<std::string> files;
};

inline void write_snapshot_file(const std::filesystem::path& dir, const BranchSample<MemsProblem>& s) {
  auto os = io::open_out(dir, "snapshot_" + std::to_string(s.step) + ".txt");
  write_snapshot(os, s.problem->mesh(), s.problem->to_field(s.u));
}

/// Branch points located from the suspicions of a trace; failures are skipped.
template <BranchingProblem P>
std::vector<BranchPointRecord<P>> locate_suspicions(const Branch<P>& b, const ContinuationConfig& cfg,
                                                    std::size_t limit) {
  std::vector<BranchPointRecord<P>> out;
  for (const auto& s : b.suspicions) {
    if (out.size() >= limit) break;
    try {
      auto [u, lambda, v] = branch_point_seed(s, cfg);
      auto bp = locate_branch_point(s.after.problem, u, lambda, v);
      const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& o) {
        return std::abs(o.lambda - bp.lambda) <= 1e-6 * std::max(1.0, std::abs(bp.lambda)) &&
               o.u.size() == bp.u.size() && (o.u - bp.u).template lpNorm<Eigen::Infinity>() <= 1e-6;
      });
      if (!seen) out.push_back(std::move(bp));
    } catch (const Error&) {
    }
  }
  return out;
}

inline TraceRun run_trace(const RunConfig& c, const std::filesystem::path& dir) {
  auto p = make_problem(c.problem, c.mesh_resolution, c.symmetry_sectors);
  ContinuationConfig k = c.continuation;
  k.keep_fields = c.snapshot_every > 0;
  TraceHooks<MemsProblem> hooks;
  if (k.nu > 0) hooks.adapt = mems_adapter(k);
  TraceRun run;
  if (c.snapshot_every > 0) {
    hooks.observer = [&](const BranchSample<MemsProblem>& s) {
      if (s.step % c.snapshot_every == 0) {
        write_snapshot_file(dir, s);
        run.files.push_back("snapshot_" + std::to_string(s.step) + ".txt");
      }
      return true;
    };
  }
  run.branch = trace_from_rest(p, k, hooks);
  run.branch_points = locate_suspicions(run.branch, k, static_cast<std::size_t>(c.max_branch_points));
  {
    auto os = io::open_out(dir, "branch.csv");
    io::write_branch(os, run.branch.samples);
  }
  {
    auto os = io::open_out(dir, "folds.csv");
    io::write_folds(os, run.branch.folds);
  }
  {
    auto os = io::open_out(dir, "branch_points.csv");
    io::write_branch_points(os, run.branch_points);
  }
  run.files.insert(run.files.begin(), {"branch.csv", "folds.csv", "branch_points.csv"});
  return run;
}

// ---------------------------------------------------------------------------
// oracle

struct OracleRun {
  std::vector<oracle::Fold> folds;
  std::size_t curve_samples = 0;
  std::vector<std::string> files;
};

inline OracleRun run_oracle(const RunConfig& c, const std::filesystem::path& dir) {
  OracleRun run;
  run.folds = oracle::find_folds(c.oracle_folds, c.oracle_rel_tol);
  const auto traj = oracle::integrate_w(c.oracle_eta_max, c.oracle_rel_tol);
  run.curve_samples = traj.samples.size();
  {
    auto os = io::open_out(dir, "oracle_curve.csv");
    io::write_oracle_curve(os, traj);
  }
  {
    auto os = io::open_out(dir, "oracle_folds.csv");
    io::write_oracle_folds(os, run.folds);
  }
  run.files = {"oracle_curve.csv", "oracle_folds.csv"};
  return run;
}

// ---------------------------------------------------------------------------
// convergence study on the disk at epsilon = 0

struct ConvergenceRow {
  int resolution = 0;
  double h_max = 0.0;
  Eigen::Index n_dof = 0;
  double lambda0 = 0.0, lambda1 = 0.0;
  double rel_err0 = 0.0, rel_err1 = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  double slope0 = 0.0, slope1 = 0.0;
  std::vector<std::string> files;
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline ConvergenceRow convergence_point(int resolution, const ContinuationConfig& base, const std::array<double, 2>& exact,
                                        int sectors = 64) {
  const ProblemParams params{0.0, 4, DomainSpec::disk()};
  auto p = make_problem(params, resolution, sectors);
  ContinuationConfig k = base;
  k.nu = 0;
  k.compute_eigs = false;
  k.keep_fields = false;
  k.max_folds = 2;
  const auto b = trace_from_rest(p, k);
  if (b.folds.size() < 2)
    throw CannotProceed("convergence: resolution " + std::to_string(resolution) + " stopped (" + to_string(b.stop) +
                        ") before the second fold");
  ConvergenceRow r;
  r.resolution = resolution;
  r.h_max = p->mesh().max_edge_length();
  r.n_dof = p->size();
  r.lambda0 = b.folds[0].lambda;
  r.lambda1 = b.folds[1].lambda;
  r.rel_err0 = std::abs(r.lambda0 - exact[0]) / exact[0];
  r.rel_err1 = std::abs(r.lambda1 - exact[1]) / exact[1];
  return r;
}

inline ConvergenceStudy run_convergence(const RunConfig& c, const std::filesystem::path& dir,
                                        const std::function<void(const ConvergenceRow&)>& progress = {}) {
  const auto exact = oracle::find_folds(2, c.oracle_rel_tol);
  ConvergenceStudy st;
  for (int n : c.convergence_ladder) {
    st.rows.push_back(convergence_point(n, c.continuation, {exact[0].lambda, exact[1].lambda}, c.symmetry_sectors));
    if (progress) progress(st.rows.back());
  }
  std::vector<double> h, e0, e1;
  for (const auto& r : st.rows) {
    h.push_back(r.h_max);
    e0.push_back(r.rel_err0);
    e1.push_back(r.rel_err1);
  }
  st.slope0 = loglog_slope(h, e0);
  st.slope1 = loglog_slope(h, e1);
  auto os = io::open_out(dir, "convergence.csv");
  os << io::kConvergenceHeader << '\n';
  for (const auto& r : st.rows)
    os << io::num(r.h_max) << ',' << r.n_dof << ',' << io::num(r.lambda0) << ',' << io::num(r.lambda1) << ','
       << io::num(r.rel_err0) << ',' << io::num(r.rel_err1) << '\n';
  st.files = {"convergence.csv"};
  return st;
}

// ---------------------------------------------------------------------------
// branch hunt

template <BranchingProblem P>
struct SwitchedBranch {
  int point = 0;
  int direction = 1;
  Branch<P> branch;
  bool rejoined = false;  ///< came back to the symmetric branch
  double rejoin_lambda = 0.0;
  int partner = -1;  ///< branch point it rejoined at
  std::string error;
};

template <BranchingProblem P>
struct Hunt {
  Branch<P> symmetric;
  std::vector<BranchPointRecord<P>> points;
  std::vector<int> modes;   ///< angular mode of the null vector, -1 off disk/annulus
  std::vector<int> family;  ///< points joined by a switched branch share a family
  int families = 0;
  std::vector<SwitchedBranch<P>> switched;
};

namespace detail {

inline int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace detail

/// Symmetric branch from rest, its branch points, and both switched branches of
/// every point. A switched trace ends after switch_max_steps, at the lambda
/// limits, or when it returns to the symmetric branch: its modal amplitude
/// changes sign or its asymmetry drops below `rejoin_asymmetry`. That last
/// sample is dropped.
template <BranchingProblem P>
Hunt<P> hunt(std::shared_ptr<const P> p, const RunConfig& c, double rejoin_asymmetry = 1e-3) {
  Hunt<P> h;
  ContinuationConfig k = c.continuation;
  k.keep_fields = true;
  k.compute_eigs = true;
  h.symmetric = trace_from_rest(p, k);
  h.points = locate_suspicions(h.symmetric, k, static_cast<std::size_t>(c.max_branch_points));
  std::sort(h.points.begin(), h.points.end(), [](const auto& a, const auto& b) { return a.lambda > b.lambda; });

  const bool angular = has_angle(p->mesh());
  for (const auto& bp : h.points) h.modes.push_back(angular ? angular_mode(bp.problem->to_field(bp.v), bp.problem->mesh()) : -1);

  std::vector<int> parent(h.points.size());
  std::iota(parent.begin(), parent.end(), 0);

  ContinuationConfig ks = k;
  ks.max_steps = c.switch_max_steps;
  // asymmetric branches may bulge past the symmetric one before returning
  ks.linf_max = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.points.size(); ++i) {
    const auto& bp = h.points[i];
    const Norms n = bp.problem->norms(bp.u);
    // a 2% perturbation of the peak deflection along the null vector
    const double vmax = bp.v.template lpNorm<Eigen::Infinity>();
    const double delta = std::max(0.02 * n.linf / std::max(vmax, 1e-300), switch_delta(k.newton_tol, n.linf));
    for (int dir : {1, -1}) {
      SwitchedBranch<P> sw;
      sw.point = static_cast<int>(i);
      sw.direction = dir;
      try {
        const auto start = switch_branch(bp, delta, dir, ks);
        TraceHooks<P> hooks;
        double prev_amp = 0.0, prev_lambda = 0.0;
        if (angular && h.modes[i] > 0) {
          // stop on the first sample back at (or through) the symmetric branch
          const int mode = h.modes[i];
          hooks.observer = [&, mode](const BranchSample<P>& s) {
            const Field f = s.problem->to_field(s.u);
            const double amp = modal_amplitude(f, s.problem->mesh(), mode);
            const bool through = s.step > 0 && (amp > 0.0) != (prev_amp > 0.0);
            if (through || (s.step > 0 && angular_asymmetry(f, s.problem->mesh()) < rejoin_asymmetry)) {
              sw.rejoined = true;
              sw.rejoin_lambda =
                  through ? prev_lambda + (s.lambda - prev_lambda) * prev_amp / (prev_amp - amp) : s.lambda;
              return false;
            }
            prev_amp = amp;
            prev_lambda = s.lambda;
            return true;
          };
        }
        sw.branch = trace(start.problem, start.u, start.lambda, start.tangent, ks, hooks);
        if (sw.rejoined) sw.branch.samples.pop_back();
      } catch (const Error& e) {
        sw.error = e.what();
      }
      if (sw.rejoined) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < h.points.size(); ++j) {
          if (j == i || h.modes[j] != h.modes[i]) continue;
          const double d = std::abs(h.points[j].lambda - sw.rejoin_lambda);
          if (d < best) {
            best = d;
            sw.partner = static_cast<int>(j);
          }
        }
        const double reach = 0.02 * std::max(1.0, std::abs(sw.rejoin_lambda));
        if (sw.partner >= 0 && best <= reach)
          parent[detail::find_root(parent, sw.partner)] = detail::find_root(parent, static_cast<int>(i));
        else
          sw.partner = -1;
      }
      h.switched.push_back(std::move(sw));
    }
  }
  std::map<int, int> ids;
  for (std::size_t i = 0; i < h.points.size(); ++i) {
    const int r = detail::find_root(parent, static_cast<int>(i));
    const auto [it, fresh] = ids.try_emplace(r, static_cast<int>(ids.size()));
    h.family.push_back(it->second);
  }
  h.families = static_cast<int>(ids.size());
  return h;
}

template <BranchingProblem P>
std::vector<std::string> write_hunt(const Hunt<P>& h, const std::filesystem::path& dir) {
  std::vector<std::string> files{"branch.csv", "folds.csv", "branch_points.csv", "symmetry_breaking.csv"};
  {
    auto os = io::open_out(dir, "branch.csv");
    io::write_branch(os, h.symmetric.samples);
  }
  {
    auto os = io::open_out(dir, "folds.csv");
    io::write_folds(os, h.symmetric.folds);
  }
  {
    auto os = io::open_out(dir, "branch_points.csv");
    io::write_branch_points(os, h.points);
  }
  {
    auto os = io::open_out(dir, "symmetry_breaking.csv");
    os << "point,lambda,mode,family\n";
    for (std::size_t i = 0; i < h.points.size(); ++i)
      os << i << ',' << io::num(h.points[i].lambda) << ',' << h.modes[i] << ',' << h.family[i] << '\n';
  }
  for (const auto& sw : h.switched) {
    if (sw.branch.samples.empty()) continue;
    const std::string name =
        "branch_switched_" + std::to_string(sw.point) + (sw.direction > 0 ? "_pos" : "_neg") + ".csv";
    auto os = io::open_out(dir, name);
    io::write_branch(os, sw.branch.samples);
    files.push_back(name);
  }
  return files;
}

// ---------------------------------------------------------------------------
// critical epsilon by bisection on fold existence

struct FoldProbe {
  bool fold = false;
  double lambda = 0.0;  ///< first fold when there is one
};

/// Traces from rest until the first fold or until ||u||_inf reaches
/// linf_fraction (1 - epsilon).
inline FoldProbe probe_fold(const ProblemParams& params, int resolution, ContinuationConfig cfg,
                            double linf_fraction = 0.9) {
  auto p = make_problem(params, resolution);
  cfg.max_folds = 1;
  cfg.nu = 0;
  cfg.compute_eigs = false;
  cfg.keep_fields = false;
  cfg.linf_max = linf_fraction * (1.0 - params.epsilon);
  const auto b = trace_from_rest(p, cfg);
  if (b.stop == StopReason::cannot_proceed) throw CannotProceed("probe_fold: " + b.message);
  if (b.folds.empty()) return {false, 0.0};
  return {true, b.folds.front().lambda};
}

struct CriticalEpsilon {
  double epsilon = 0.0;  ///< midpoint of the final bracket
  double lo = 0.0, hi = 0.0;
  double fold_lambda = 0.0;  ///< fold seen at the largest folding epsilon
  int probes = 0;
};

/// Bisection for the epsilon where folds disappear: `probe(lo)` must fold and
/// `probe(hi)` must not.
inline CriticalEpsilon bisect_fold_existence(const std::function<FoldProbe(double)>& probe, double lo, double hi,
                                             double tol) {
  CriticalEpsilon out;
  const auto a = probe(lo), b = probe(hi);
  out.probes = 2;
  if (!a.fold || b.fold) throw Error("bisect_fold_existence: bracket does not separate folding from monotone branches");
  out.fold_lambda = a.lambda;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const auto r = probe(mid);
    ++out.probes;
    if (r.fold) {
      lo = mid;
      out.fold_lambda = r.lambda;
    } else {
      hi = mid;
    }
  }
  out.lo = lo;
  out.hi = hi;
  out.epsilon = 0.5 * (lo + hi);
  return out;
}

// ---------------------------------------------------------------------------
// manifest

inline detail::Json manifest(const RunConfig& c, const std::vector<std::string>& files) {
  detail::Json m;
  m["schema_version"] = kSchemaVersion;
  m["experiment"] = to_string(c.experiment);
  m["config"] = to_json(c);
  m["files"] = files;
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const detail::Json& m) {
  auto os = io::open_out(dir, "manifest.json");
  os << m.dump(2) << '\n';
}

}  // namespace bifurcurve

// End-to-end checks, one [PASS]/[FAIL] line per criterion. Runs the shipped
// configs from configs/ through the same library entry points as the CLI.

#include <bifurcurve/experiments.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>

namespace fs = std::filesystem;
using namespace bifurcurve;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig config(const std::string& name) { return load_config(std::string(BIFURCURVE_CONFIG_DIR) + "/" + name); }

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "bifurcurve_acceptance" / name;
  fs::remove_all(d);
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs a check; an exception counts as a failure with its message.
template <class F>
void check(const char* name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("threw: ") + e.what());
  }
}

constexpr double kFold0 = 0.78922927, kFold1 = 0.41533025, kCentre = 4.0 / 9.0;

}  // namespace

int main() {
  check("oracle folds", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = scratch("oracle");
    run_oracle(config("oracle.json"), dir);
    const double secs = seconds_since(t0);
    std::ifstream in(dir / "oracle_folds.csv");
    const auto t = io::read_csv(in);
    const double l0 = t.value(0, "lambda"), l1 = t.value(1, "lambda");
    const bool ok = std::abs(l0 - kFold0) <= 1e-6 && std::abs(l1 - kFold1) <= 1e-6 && secs < 1.0;
    report("oracle folds", ok, fmt("lambda0=%.9f lambda1=%.9f in %.3fs", l0, l1, secs));
  });

  check("spiral centre", [] {
    const auto f = oracle::find_folds(6);
    bool alternate = true, closer = true;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
      alternate = alternate && (f[k].lambda - kCentre) * (f[k + 1].lambda - kCentre) < 0.0;
      closer = closer && std::abs(f[k + 1].lambda - kCentre) < std::abs(f[k].lambda - kCentre);
    }
    const double d0 = std::abs(f[0].lambda - kCentre), d5 = std::abs(f[5].lambda - kCentre);
    report("spiral centre", alternate && closer && d5 < d0 / 3.0,
           fmt("alternating=%d monotone=%d |l5-4/9|=%.3e |l0-4/9|/3=%.3e", alternate, closer, d5, d0 / 3.0));
  });

  check("FEM convergence", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto st = run_convergence(config("convergence.json"), scratch("convergence"));
    const double secs = seconds_since(t0);
    bool decreasing = true;
    for (std::size_t i = 1; i < st.rows.size(); ++i)
      decreasing = decreasing && st.rows[i].rel_err0 < st.rows[i - 1].rel_err0 && st.rows[i].rel_err1 < st.rows[i - 1].rel_err1;
    const auto& fine = st.rows.back();
    // first and last meshes of the ladder halve h
    const auto& coarse = st.rows.front();
    const double h_ratio = coarse.h_max / fine.h_max;
    const double r0 = coarse.rel_err0 / fine.rel_err0, r1 = coarse.rel_err1 / fine.rel_err1;
    const bool halving = std::abs(h_ratio - 2.0) < 0.05 && r0 >= 3.0 && r0 <= 5.5 && r1 >= 3.0 && r1 <= 5.5;
    const bool slopes = st.slope0 >= 1.7 && st.slope0 <= 2.3 && st.slope1 >= 1.7 && st.slope1 <= 2.3;
    const bool finest = fine.rel_err0 <= 5e-3 && fine.rel_err1 <= 5e-3;
    report("FEM convergence", decreasing && slopes && finest && halving,
           fmt("slopes %.3f/%.3f, finest %ld dofs E_rel %.2e/%.2e, halving h gives %.2fx/%.2fx, %.0fs",
               st.slope0, st.slope1, static_cast<long>(fine.n_dof), fine.rel_err0, fine.rel_err1, r0, r1, secs));
  });

  check("disk eps=0.3 unique branch", [] {
    const auto c = config("disk_eps0p3.json");
    const auto run = run_trace(c, scratch("disk_eps0p3"));
    const auto& b = run.branch;
    const bool range = b.stop == StopReason::linf_max && std::abs(c.continuation.linf_max - 0.9 * 0.7) < 1e-12;
    report("disk eps=0.3 unique branch", range && b.folds.empty() && b.suspicions.empty(),
           fmt("%zu folds, %zu suspicions, stop=%s at ||u||inf=%.4f", b.folds.size(), b.suspicions.size(),
               to_string(b.stop), b.samples.back().norms.linf));
  });

  check("disk eps=0.1 three solutions at lambda=0.6", [] {
    const auto run = run_trace(config("disk_eps0p1.json"), scratch("disk_eps0p1"));
    const auto& s = run.branch.samples;
    std::vector<std::pair<bool, bool>> st;
    for (std::size_t i = 1; i < s.size(); ++i)
      if ((s[i - 1].lambda - 0.6) * (s[i].lambda - 0.6) < 0.0) st.push_back({s[i - 1].stable, s[i].stable});
    bool ok = st.size() == 3;
    std::string cls;
    const bool want[3] = {true, false, true};
    for (std::size_t k = 0; k < st.size(); ++k) {
      cls += st[k].first == st[k].second ? (st[k].first ? "stable " : "unstable ") : "mixed ";
      ok = ok && k < 3 && st[k].first == want[k] && st[k].second == want[k];
    }
    report("disk eps=0.1 three solutions at lambda=0.6", ok, fmt("%zu crossings: %s", st.size(), cls.c_str()));
  });

  check("disk eps=0.01 five solutions at lambda=0.444", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = run_trace(config("disk_eps0p01.json"), scratch("disk_eps0p01"));
    const int n = count_crossings(run.branch.samples, 0.444);
    std::size_t max_dofs = 0;
    for (const auto& s : run.branch.samples) max_dofs = std::max<std::size_t>(max_dofs, s.n_dof);
    std::string folds;
    for (std::size_t k = 0; k < std::min<std::size_t>(3, run.branch.folds.size()); ++k)
      folds += fmt("%.5f ", run.branch.folds[k].lambda);
    report("disk eps=0.01 five solutions at lambda=0.444", n == 5 && run.branch.stop == StopReason::lambda_max,
           fmt("%d crossings, first folds %s, up to %zu dofs, stop=%s, %.0fs", n, folds.c_str(), max_dofs,
               to_string(run.branch.stop), seconds_since(t0)));
  });

  check("disk critical epsilon", [] {
    const ContinuationConfig cfg = config("disk_eps0p1.json").continuation;
    const auto r = bisect_fold_existence(
        [&](double e) { return probe_fold(ProblemParams{e, 4, DomainSpec::disk()}, 16, cfg); }, 0.24, 0.27, 1e-3);
    report("disk critical epsilon", std::abs(r.epsilon - 0.25966) <= 0.01 && std::abs(r.fold_lambda - 0.9583) <= 0.05,
           fmt("eps_c=%.5f (bracket %.5f..%.5f), fold lambda=%.5f, %d probes", r.epsilon, r.lo, r.hi, r.fold_lambda,
               r.probes));
  });

  check("interval bistability", [] {
    const auto a = run_trace(config("interval_eps0p1.json"), scratch("interval_eps0p1"));
    const auto b = run_trace(config("interval_eps0p3.json"), scratch("interval_eps0p3"));
    const ContinuationConfig cfg = config("interval_eps0p1.json").continuation;
    const auto r = bisect_fold_existence(
        [&](double e) { return probe_fold(ProblemParams{e, 4, DomainSpec::interval(-1, 1)}, 200, cfg); }, 0.1, 0.3,
        1e-3);
    report("interval bistability",
           a.branch.folds.size() == 2 && b.branch.folds.empty() && std::abs(r.epsilon - 0.2758) <= 0.01,
           fmt("%zu folds at eps=0.1, %zu at eps=0.3, cutoff %.5f", a.branch.folds.size(), b.branch.folds.size(),
               r.epsilon));
  });

  check("square eps=0.1 three solutions at lambda=2", [] {
    const auto run = run_trace(config("square_eps0p1.json"), scratch("square_eps0p1"));
    const int n = count_crossings(run.branch.samples, 2.0);
    report("square eps=0.1 three solutions at lambda=2", n == 3, fmt("%d crossings", n));
  });

  check("annulus symmetry breaking", [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto hunt_of = [](const char* name) {
      const RunConfig c = config(name);
      auto red = std::make_shared<const ReflectionReduction>(make_problem(c.problem, c.mesh_resolution, c.symmetry_sectors));
      return hunt(red, c);
    };
    double sym_max = 0.0, switched_min = std::numeric_limits<double>::infinity();
    std::size_t switched_samples = 0;
    auto scan = [&](const Hunt<ReflectionReduction>& h) {
      for (const auto& s : h.symmetric.samples)
        sym_max = std::max(sym_max, angular_asymmetry(s.problem->to_field(s.u), s.problem->mesh()));
      for (const auto& sw : h.switched)
        for (const auto& s : sw.branch.samples) {
          switched_min = std::min(switched_min, angular_asymmetry(s.problem->to_field(s.u), s.problem->mesh()));
          ++switched_samples;
        }
    };
    const auto h02 = hunt_of("annulus_eps0p2.json");
    scan(h02);
    const auto h01 = hunt_of("annulus_eps0p1.json");
    scan(h01);
    const auto h00 = hunt_of("annulus_eps0.json");
    scan(h00);
    const bool a = h02.families == 1 && h01.families == 2;
    const bool b = h00.points.size() >= 3;
    const bool c = sym_max < 1e-6 && switched_min > 1e-3 && switched_samples > 0;
    report("annulus symmetry breaking", a && b && c,
           fmt("(a) families %d at eps=0.2 (%zu points), %d at eps=0.1 (%zu points); (b) %zu points at eps=0; "
               "(c) symmetric max %.1e, switched min %.1e over %zu samples; %.0fs",
               h02.families, h02.points.size(), h01.families, h01.points.size(), h00.points.size(), sym_max,
               switched_min, switched_samples, seconds_since(t0)));
  });

  check("property suites", [] {
    const std::string filter =
        "Jacobian.*:Factorize.*:ExtendedSystem.*:Mesh.*:Interpolate.*:Tangent.*:Trace.TangentsStayNormalizedAndDirected:"
        "Bordered.*:Solve.*:LocateFold.*:LocateBranchPoint.*:SwitchBranch.*";
    const std::string cmd = std::string(BIFURCURVE_UNIT_TESTS) + " --gtest_brief=1 --gtest_filter='" + filter + "' >/dev/null";
    const int status = std::system(cmd.c_str());
    report("property suites", status == 0, fmt("unit test subset exit status %d", status));
  });

  std::printf("%d failing\n", failures);
  return failures == 0 ? 0 : 1;
}

#include <bifurcurve/bifurcurve.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace bifurcurve;

namespace {

enum Exit { ok = 0, failure = 1, bad_config = 2, cannot_proceed = 3 };

fs::path output_dir(RunConfig& c) {
  if (const char* env = std::getenv("BIFURCURVE_OUT"); env && *env) c.output_dir = env;
  return c.output_dir;
}

int do_trace(RunConfig c) {
  const fs::path dir = output_dir(c);
  const auto run = run_trace(c, dir);
  const auto& b = run.branch;
  auto m = manifest(c, run.files);
  m["stop"] = to_string(b.stop);
  m["message"] = b.message;
  m["samples"] = b.samples.size();
  m["folds"] = b.folds.size();
  m["suspicions"] = b.suspicions.size();
  m["branch_points"] = run.branch_points.size();
  write_manifest(dir, m);
  std::printf("trace: %zu samples, %zu folds, %zu branch points, stop=%s\n", b.samples.size(), b.folds.size(),
              run.branch_points.size(), to_string(b.stop));
  for (const auto& f : b.folds) std::printf("  fold %d lambda=%.10g\n", f.index, f.lambda);
  if (b.stop == StopReason::cannot_proceed) {
    std::fprintf(stderr, "trace: cannot proceed: %s (partial outputs in %s)\n", b.message.c_str(), dir.c_str());
    return cannot_proceed;
  }
  return ok;
}

int do_oracle(RunConfig c) {
  const fs::path dir = output_dir(c);
  const auto run = run_oracle(c, dir);
  auto m = manifest(c, run.files);
  m["curve_samples"] = run.curve_samples;
  write_manifest(dir, m);
  for (const auto& f : run.folds) std::printf("fold %d lambda=%.10f\n", f.index, f.lambda);
  return ok;
}

int do_convergence(RunConfig c) {
  const fs::path dir = output_dir(c);
  const auto st = run_convergence(c, dir, [](const ConvergenceRow& r) {
    std::printf("n=%d h_max=%.4g dofs=%ld lambda0=%.8f (E=%.3e) lambda1=%.8f (E=%.3e)\n", r.resolution, r.h_max,
                static_cast<long>(r.n_dof), r.lambda0, r.rel_err0, r.lambda1, r.rel_err1);
    std::fflush(stdout);
  });
  auto m = manifest(c, st.files);
  m["slope0"] = st.slope0;
  m["slope1"] = st.slope1;
  write_manifest(dir, m);
  std::printf("log-log slopes: %.3f (first fold), %.3f (second fold)\n", st.slope0, st.slope1);
  return ok;
}

template <BranchingProblem P>
int finish_hunt(const RunConfig& c, const fs::path& dir, const Hunt<P>& h) {
  auto m = manifest(c, write_hunt(h, dir));
  m["stop"] = to_string(h.symmetric.stop);
  m["branch_points"] = h.points.size();
  m["families"] = h.families;
  write_manifest(dir, m);
  std::printf("branch-hunt: %zu branch points in %d families, stop=%s\n", h.points.size(), h.families,
              to_string(h.symmetric.stop));
  for (std::size_t i = 0; i < h.points.size(); ++i)
    std::printf("  point %zu lambda=%.8f mode=%d family=%d\n", i, h.points[i].lambda, h.modes[i], h.family[i]);
  if (h.symmetric.stop == StopReason::cannot_proceed) {
    std::fprintf(stderr, "branch-hunt: cannot proceed: %s\n", h.symmetric.message.c_str());
    return cannot_proceed;
  }
  return ok;
}

int do_branch_hunt(RunConfig c) {
  const fs::path dir = output_dir(c);
  // hunts run on the initial mesh
  c.continuation.nu = 0;
  auto p = make_problem(c.problem, c.mesh_resolution, c.symmetry_sectors);
  if (c.problem.domain.kind == DomainKind::annulus && c.mirror_reduction) {
    auto red = std::make_shared<const ReflectionReduction>(p);
    return finish_hunt(c, dir, hunt(red, c));
  }
  return finish_hunt(c, dir, hunt(p, c));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bifurcation diagrams of the regularized MEMS equation"};
  app.require_subcommand(1);
  std::string path;
  const std::pair<const char*, const char*> subs[] = {
      {"trace", "trace the branch from rest"},
      {"oracle", "radial disk oracle for epsilon = 0"},
      {"branch-hunt", "locate branch points and switch branches"},
      {"convergence", "fold convergence on fixed disk meshes"},
      {"validate", "parse the config and print it with all defaults"},
  };
  for (const auto& [name, help] : subs) app.add_subcommand(name, help)->add_option("config", path, "JSON config")->required();
  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  RunConfig c;
  try {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    auto j = detail::Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("", "config is not valid JSON");
    if (cmd != "validate") j["experiment"] = cmd;
    c = parse_config(j);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return bad_config;
  }

  try {
    if (cmd == "validate") {
      std::cout << to_json(c).dump(2) << '\n';
      return ok;
    }
    if (cmd == "trace") return do_trace(c);
    if (cmd == "oracle") return do_oracle(c);
    if (cmd == "convergence") return do_convergence(c);
    return do_branch_hunt(c);
  } catch (const CannotProceed& e) {
    std::fprintf(stderr, "%s: cannot proceed: %s\n", cmd.c_str(), e.what());
    return cannot_proceed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", cmd.c_str(), e.what());
    return failure;
  }
}

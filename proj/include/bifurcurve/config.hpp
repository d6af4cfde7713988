#pragma once

#include "continuation.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace bifurcurve {

enum class Experiment { trace, oracle, branch_hunt, convergence };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::trace: return "trace";
    case Experiment::oracle: return "oracle";
    case Experiment::branch_hunt: return "branch-hunt";
    case Experiment::convergence: return "convergence";
  }
  return "?";
}

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  Experiment experiment = Experiment::trace;
  std::string output_dir = "out";
  ProblemParams problem{0.0, 4, DomainSpec::disk()};
  int mesh_resolution = 16;
  int symmetry_sectors = 64;
  ContinuationConfig continuation;
  int snapshot_every = 0;  ///< 0 writes no snapshots

  // oracle
  int oracle_folds = 6;
  double oracle_eta_max = 1e8;
  double oracle_rel_tol = 1e-12;

  // convergence study: disk resolutions, finest last
  std::vector<int> convergence_ladder{32, 40, 48, 64};

  // branch hunt
  int max_branch_points = 12;
  int switch_max_steps = 400;
  bool mirror_reduction = true;  ///< annulus only: solve on the y-even subspace

  void validate() const;
};

namespace detail {

using Json = nlohmann::ordered_json;

inline double limit_from_json(const Json& v, const std::string& key, double none) {
  if (v.is_null()) return none;
  if (!v.is_number()) throw ConfigError(key, key + ": expected a number or null");
  return v.get<double>();
}

inline Json limit_to_json(double x) {
  if (std::isinf(x)) return nullptr;
  return x;
}

template <class T>
T typed(const Json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key, key + ": expected true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key, key + ": expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(key, key + ": expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(key, key + ": expected a string");
  }
  return v.get<T>();
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, std::string(key) + ": " + what); };
  const auto& d = problem.domain;
  if (!(problem.epsilon >= 0.0)) fail("epsilon", "must be >= 0");
  if (problem.m <= 2) fail("m", "must be > 2");
  if (d.kind == DomainKind::interval && !(d.a < d.b)) fail("interval_b", "must exceed interval_a");
  if (d.kind == DomainKind::annulus && !(d.inner_radius > 0.0 && d.inner_radius < 1.0))
    fail("inner_radius", "must lie in (0, 1)");
  if (mesh_resolution < 1) fail("mesh_resolution", "must be >= 1");
  if (symmetry_sectors < 1) fail("symmetry_sectors", "must be >= 1");
  if (snapshot_every < 0) fail("snapshot_every", "must be >= 0");
  if (oracle_folds < 1) fail("oracle_folds", "must be >= 1");
  if (!(oracle_eta_max > 1e-3)) fail("oracle_eta_max", "must exceed the series start");
  if (!(oracle_rel_tol > 0.0 && oracle_rel_tol < 1e-3)) fail("oracle_rel_tol", "must lie in (0, 1e-3)");
  if (experiment == Experiment::convergence) {
    // the reference values come from the epsilon = 0 disk oracle
    if (d.kind != DomainKind::disk) fail("domain", "convergence study runs on the disk");
    if (problem.epsilon != 0.0) fail("epsilon", "convergence study needs epsilon = 0");
    if (convergence_ladder.size() < 3) fail("convergence_ladder", "needs at least 3 meshes");
    for (std::size_t i = 0; i < convergence_ladder.size(); ++i) {
      if (convergence_ladder[i] < 1) fail("convergence_ladder", "resolutions must be >= 1");
      if (i > 0 && convergence_ladder[i] <= convergence_ladder[i - 1])
        fail("convergence_ladder", "resolutions must increase");
    }
  }
  if (max_branch_points < 0) fail("max_branch_points", "must be >= 0");
  if (switch_max_steps < 1) fail("switch_max_steps", "must be >= 1");
  continuation.validate();
}

/// Every key with its resolved value; parse_config(to_json(c)) == c.
inline detail::Json to_json(const RunConfig& c) {
  using detail::limit_to_json;
  const auto& k = c.continuation;
  detail::Json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = to_string(c.experiment);
  j["output_dir"] = c.output_dir;
  j["domain"] = c.problem.domain.name();
  j["interval_a"] = c.problem.domain.a;
  j["interval_b"] = c.problem.domain.b;
  j["inner_radius"] = c.problem.domain.inner_radius;
  j["epsilon"] = c.problem.epsilon;
  j["m"] = c.problem.m;
  j["mesh_resolution"] = c.mesh_resolution;
  j["symmetry_sectors"] = c.symmetry_sectors;
  j["ds0"] = k.ds0;
  j["ds_min"] = k.ds_min;
  j["ds_max"] = k.ds_max;
  j["newton_tol"] = k.newton_tol;
  j["max_newton_iters"] = k.max_newton_iters;
  j["grow_factor"] = k.grow_factor;
  j["shrink_factor"] = k.shrink_factor;
  j["fast_iters"] = k.fast_iters;
  j["min_tangent_cos"] = k.min_tangent_cos;
  j["kappa"] = k.kappa;
  j["rho"] = k.rho;
  j["nu"] = k.nu;
  j["branch_detect_tol"] = k.branch_detect_tol;
  j["max_elements"] = k.max_elements;
  j["compute_eigs"] = k.compute_eigs;
  j["max_steps"] = k.max_steps;
  j["s_max"] = limit_to_json(k.s_max);
  j["lambda_max"] = limit_to_json(k.lambda_max);
  j["lambda_min"] = limit_to_json(k.lambda_min);
  j["linf_max"] = limit_to_json(k.linf_max);
  j["max_folds"] = k.max_folds;
  j["snapshot_every"] = c.snapshot_every;
  j["oracle_folds"] = c.oracle_folds;
  j["oracle_eta_max"] = c.oracle_eta_max;
  j["oracle_rel_tol"] = c.oracle_rel_tol;
  j["convergence_ladder"] = c.convergence_ladder;
  j["max_branch_points"] = c.max_branch_points;
  j["switch_max_steps"] = c.switch_max_steps;
  j["mirror_reduction"] = c.mirror_reduction;
  return j;
}

inline RunConfig parse_config(const detail::Json& j) {
  using detail::typed;
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("schema_version", "schema_version: missing");
  if (typed<int>(j.at("schema_version"), "schema_version") != kSchemaVersion)
    throw ConfigError("schema_version", "schema_version: unsupported (expected " + std::to_string(kSchemaVersion) + ")");

  RunConfig c;
  auto& k = c.continuation;
  std::string domain = "disk";
  double a = -1.0, b = 1.0, r1 = 0.1;
  for (const auto& [key, v] : j.items()) {
    if (key == "schema_version") continue;
    else if (key == "experiment") {
      const auto e = typed<std::string>(v, key);
      if (e == "trace") c.experiment = Experiment::trace;
      else if (e == "oracle") c.experiment = Experiment::oracle;
      else if (e == "branch-hunt") c.experiment = Experiment::branch_hunt;
      else if (e == "convergence") c.experiment = Experiment::convergence;
      else throw ConfigError(key, key + ": unknown experiment '" + e + "'");
    } else if (key == "output_dir") c.output_dir = typed<std::string>(v, key);
    else if (key == "domain") domain = typed<std::string>(v, key);
    else if (key == "interval_a") a = typed<double>(v, key);
    else if (key == "interval_b") b = typed<double>(v, key);
    else if (key == "inner_radius") r1 = typed<double>(v, key);
    else if (key == "epsilon") c.problem.epsilon = typed<double>(v, key);
    else if (key == "m") c.problem.m = typed<int>(v, key);
    else if (key == "mesh_resolution") c.mesh_resolution = typed<int>(v, key);
    else if (key == "symmetry_sectors") c.symmetry_sectors = typed<int>(v, key);
    else if (key == "ds0") k.ds0 = typed<double>(v, key);
    else if (key == "ds_min") k.ds_min = typed<double>(v, key);
    else if (key == "ds_max") k.ds_max = typed<double>(v, key);
    else if (key == "newton_tol") k.newton_tol = typed<double>(v, key);
    else if (key == "max_newton_iters") k.max_newton_iters = typed<int>(v, key);
    else if (key == "grow_factor") k.grow_factor = typed<double>(v, key);
    else if (key == "shrink_factor") k.shrink_factor = typed<double>(v, key);
    else if (key == "fast_iters") k.fast_iters = typed<int>(v, key);
    else if (key == "min_tangent_cos") k.min_tangent_cos = typed<double>(v, key);
    else if (key == "kappa") k.kappa = typed<double>(v, key);
    else if (key == "rho") k.rho = typed<double>(v, key);
    else if (key == "nu") k.nu = typed<int>(v, key);
    else if (key == "branch_detect_tol") k.branch_detect_tol = typed<double>(v, key);
    else if (key == "max_elements") {
      const auto n = typed<long long>(v, key);
      if (n < 1) throw ConfigError(key, key + ": must be >= 1");
      k.max_elements = static_cast<std::size_t>(n);
    } else if (key == "compute_eigs") k.compute_eigs = typed<bool>(v, key);
    else if (key == "max_steps") k.max_steps = typed<int>(v, key);
    else if (key == "s_max") k.s_max = detail::limit_from_json(v, key, std::numeric_limits<double>::infinity());
    else if (key == "lambda_max") k.lambda_max = detail::limit_from_json(v, key, std::numeric_limits<double>::infinity());
    else if (key == "lambda_min") k.lambda_min = detail::limit_from_json(v, key, -std::numeric_limits<double>::infinity());
    else if (key == "linf_max") k.linf_max = detail::limit_from_json(v, key, std::numeric_limits<double>::infinity());
    else if (key == "max_folds") k.max_folds = typed<int>(v, key);
    else if (key == "snapshot_every") c.snapshot_every = typed<int>(v, key);
    else if (key == "oracle_folds") c.oracle_folds = typed<int>(v, key);
    else if (key == "oracle_eta_max") c.oracle_eta_max = typed<double>(v, key);
    else if (key == "oracle_rel_tol") c.oracle_rel_tol = typed<double>(v, key);
    else if (key == "convergence_ladder") {
      if (!v.is_array()) throw ConfigError(key, key + ": expected an array of integers");
      c.convergence_ladder.clear();
      for (const auto& x : v) c.convergence_ladder.push_back(typed<int>(x, key));
    } else if (key == "max_branch_points") c.max_branch_points = typed<int>(v, key);
    else if (key == "switch_max_steps") c.switch_max_steps = typed<int>(v, key);
    else if (key == "mirror_reduction") c.mirror_reduction = typed<bool>(v, key);
    else throw ConfigError(key, "unknown key '" + key + "'");
  }
  if (domain == "interval") c.problem.domain = DomainSpec::interval(a, b);
  else if (domain == "square") c.problem.domain = DomainSpec::square();
  else if (domain == "disk") c.problem.domain = DomainSpec::disk();
  else if (domain == "annulus") c.problem.domain = DomainSpec::annulus(r1);
  else throw ConfigError("domain", "domain: unknown domain '" + domain + "'");
  c.validate();
  return c;
}

inline RunConfig parse_config(std::istream& in) {
  detail::Json j;
  try {
    j = detail::Json::parse(in);
  } catch (const detail::Json::parse_error& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
  return parse_config(in);
}

}  // namespace bifurcurve

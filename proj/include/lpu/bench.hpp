#ifndef LPU_BENCH_HPP
#define LPU_BENCH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "encoding.hpp"
#include "errors.hpp"
#include "generators.hpp"
#include "krylov.hpp"
#include "matrix_market.hpp"
#include "matrix_ref.hpp"
#include "random.hpp"
#include "sparse_matrix.hpp"
#include "stats.hpp"

namespace lpu {

using json = nlohmann::json;

/// Current version of the report and chart-data documents.
inline constexpr int report_schema_version = 1;

inline constexpr const char* apply_time_kind = "apply_time_ns";
inline constexpr const char* roundtrip_time_kind = "roundtrip_model_ns";

struct PathProblem {
  std::filesystem::path path;
  friend bool operator==(const PathProblem&, const PathProblem&) = default;
};

/// Synthetic problem built in memory: "banded" (banded_spd) or "random_spd" (random_diag_dominant).
struct GeneratedProblem {
  std::string kind = "banded";
  std::size_t n = 1000;
  std::size_t bandwidth = 5;
  double density = 0.1;
  double margin = 1.0;
  std::uint64_t seed = 1;
  friend bool operator==(const GeneratedProblem&, const GeneratedProblem&) = default;
};

using ProblemSource = std::variant<PathProblem, MatrixRef, GeneratedProblem>;

struct ProblemSpec {
  ProblemSource source;
  /// Report label; derived from the source when empty.
  std::string label;
  friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

inline std::string problem_label(const ProblemSpec& p) {
  if (!p.label.empty()) return p.label;
  return std::visit(
      [](const auto& s) -> std::string {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PathProblem>) {
          return s.path.stem().string();
        } else if constexpr (std::is_same_v<S, MatrixRef>) {
          return s.name;
        } else {
          return s.kind + "-n" + std::to_string(s.n) +
                 (s.kind == "banded" ? "-bw" + std::to_string(s.bandwidth) : std::string{});
        }
      },
      p.source);
}

struct LpuSolverConfig {
  std::string label = "lpu";
  EncodingConfig encoding;
  CavityParams cavity;
  DynamicsMode mode = DynamicsMode::phase_only;
  RunControls controls;
  friend bool operator==(const LpuSolverConfig&, const LpuSolverConfig&) = default;
};

using PlanSolver = std::variant<SolverSpec, LpuSolverConfig>;

inline std::string solver_label(const PlanSolver& s) {
  if (const auto* spec = std::get_if<SolverSpec>(&s)) return solver_label(spec->kind);
  return std::get<LpuSolverConfig>(s).label;
}

struct BenchmarkPlan {
  std::vector<ProblemSpec> problems;
  std::vector<PlanSolver> solvers;
  std::size_t runs_per_pair = 10;
  /// Overrides every solver's own tolerance.
  double tol = 1e-5;
  std::uint64_t rhs_seed_base = 1;
  /// Draw a fresh b for every run instead of one b per problem.
  bool rhs_per_run = false;

  void validate() const {
    if (runs_per_pair < 1) throw argument_error("plan: runs_per_pair must be at least 1");
    if (!(tol > 0.0)) throw argument_error("plan: tol must be positive");
    std::set<std::string> labels;
    for (const auto& s : solvers)
      if (!labels.insert(solver_label(s)).second)
        throw argument_error("plan: duplicate solver label '" + solver_label(s) + "'");
  }

  friend bool operator==(const BenchmarkPlan&, const BenchmarkPlan&) = default;
};

struct RunRecord {
  std::string problem;
  std::string solver;
  std::size_t run_index = 0;
  /// apply_time_kind for digital solvers, roundtrip_time_kind for the emulator.
  std::string time_kind;
  double time_ns = 0.0;
  bool converged = false;
  /// ||A x - b|| / ||b|| of the returned x; empty when the run failed outright.
  std::optional<double> residual;
  std::uint64_t iterations_or_roundtrips = 0;
  std::uint64_t rhs_seed = 0;
  std::string rhs_checksum;
  /// Non-convergence cause or error text; empty for converged runs.
  std::string status;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct PairSummary {
  std::string problem;
  std::string solver;
  std::string time_kind;
  std::size_t n_runs = 0;
  std::size_t n_converged = 0;
  /// Empty when no run converged.
  std::optional<SummaryStats> stats;
};

/// Loads collection matrices for plans that reference them by name.
using MatrixLoader = std::function<SparseMatrix(const MatrixRef&)>;

/// Receives the solution of every run: (problem index, solver index, run index, x).
using SolutionObserver = std::function<void(std::size_t, std::size_t, std::size_t, std::span<const double>)>;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline SparseMatrix load_problem(const ProblemSpec& p, const MatrixLoader& loader) {
  return std::visit(
      [&](const auto& s) -> SparseMatrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PathProblem>) {
          return read_matrix_market(s.path).matrix;
        } else if constexpr (std::is_same_v<S, MatrixRef>) {
          if (!loader) throw argument_error("plan references collection matrix '" + s.name +
                                            "' but no collection loader is available");
          return loader(s);
        } else {
          if (s.kind == "banded") return banded_spd(s.n, s.bandwidth, s.seed, s.margin);
          if (s.kind == "random_spd") return random_diag_dominant(s.n, s.density, s.seed, true, s.margin);
          throw argument_error("unknown generated problem kind '" + s.kind + "'");
        }
      },
      p.source);
}

inline std::uint64_t rhs_seed_for(const BenchmarkPlan& plan, std::size_t problem_index, std::size_t run_index) {
  if (!plan.rhs_per_run) return plan.rhs_seed_base + problem_index;
  return plan.rhs_seed_base + problem_index * plan.runs_per_pair + run_index;
}

/**
 * Runs every (problem, solver) pair runs_per_pair times, sequentially.
 * Problems that fail to load or solver runs that throw are recorded with their
 * error text; the plan always runs to completion.
 */
inline std::vector<RunRecord> run_plan(const BenchmarkPlan& plan, const MatrixLoader& loader = {},
                                       const SolutionObserver& on_solution = {}) {
  plan.validate();
  std::vector<RunRecord> records;
  for (std::size_t pi = 0; pi < plan.problems.size(); ++pi) {
    const std::string plabel = problem_label(plan.problems[pi]);
    std::optional<SparseMatrix> A;
    std::string load_error;
    try {
      A = load_problem(plan.problems[pi], loader);
      if (!A->is_square()) throw dimension_error("matrix is not square");
    } catch (const std::exception& e) {
      load_error = std::string("problem load failed: ") + e.what();
    }

    std::optional<Vector> shared_b;
    for (std::size_t si = 0; si < plan.solvers.size(); ++si) {
      const auto& solver = plan.solvers[si];
      const bool is_lpu = std::holds_alternative<LpuSolverConfig>(solver);
      for (std::size_t run = 0; run < plan.runs_per_pair; ++run) {
        RunRecord rec;
        rec.problem = plabel;
        rec.solver = solver_label(solver);
        rec.run_index = run;
        rec.time_kind = is_lpu ? roundtrip_time_kind : apply_time_kind;
        rec.rhs_seed = rhs_seed_for(plan, pi, run);
        if (!A) {
          rec.status = load_error;
          records.push_back(std::move(rec));
          continue;
        }
        Vector b_local;
        if (plan.rhs_per_run) {
          b_local = random_rhs(A->rows(), rec.rhs_seed);
        } else if (!shared_b) {
          shared_b = random_rhs(A->rows(), rec.rhs_seed);
        }
        const Vector& b = plan.rhs_per_run ? b_local : *shared_b;
        rec.rhs_checksum = hex64(vector_checksum(b));
        try {
          if (const auto* spec = std::get_if<SolverSpec>(&solver)) {
            SolverSpec s = *spec;
            s.tol = plan.tol;
            auto out = solve(*A, b, s);
            rec.time_ns = out.apply_time_ns;
            rec.converged = out.converged;
            rec.residual = out.final_residual;
            rec.iterations_or_roundtrips = out.iterations;
            if (!out.converged) rec.status = to_string(out.reason);
            if (on_solution) on_solution(pi, si, run, out.x);
          } else {
            const auto& cfg = std::get<LpuSolverConfig>(solver);
            RunControls controls = cfg.controls;
            controls.tol = plan.tol;
            const auto problem = encode(*A, b, cfg.encoding);
            auto out = lpu::run(problem, *A, b, cfg.cavity, cfg.mode, controls);
            rec.time_ns = out.time_ns;
            rec.converged = out.converged;
            rec.residual = out.final_residual;
            rec.iterations_or_roundtrips = out.roundtrips;
            if (!out.converged) rec.status = "max_roundtrips";
            if (on_solution) on_solution(pi, si, run, out.decoded_x);
          }
        } catch (const std::exception& e) {
          rec.status = e.what();
        }
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

/// One summary per (problem, solver), in record order; only converged runs enter the statistics.
inline std::vector<PairSummary> summarize_records(const std::vector<RunRecord>& records) {
  std::vector<PairSummary> out;
  std::vector<std::vector<double>> times;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const PairSummary& s) {
      return s.problem == r.problem && s.solver == r.solver;
    });
    if (it == out.end()) {
      out.push_back({r.problem, r.solver, r.time_kind, 0, 0, std::nullopt});
      times.emplace_back();
      it = out.end() - 1;
    }
    auto& t = times[static_cast<std::size_t>(it - out.begin())];
    ++it->n_runs;
    if (r.converged) {
      ++it->n_converged;
      t.push_back(r.time_ns);
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (times[k].empty()) continue;
    auto s = summarize(times[k]);
    s.n_total = out[k].n_runs;
    out[k].stats = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON encoding of plans, records and summaries

namespace detail {

template <class E>
E enum_from(const json& j, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  const auto s = j.get<std::string>();
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw parse_error(std::string("unknown ") + what + " '" + s + "'");
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw parse_error(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw parse_error(std::string("unknown key '") + key + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

inline json to_json(const EncodingConfig& c) {
  return {{"theta_max", c.theta_max},
          {"system_mode", to_string(c.system_mode)},
          {"beta_init", c.beta_init},
          {"sign", to_string(c.sign)}};
}

inline EncodingConfig encoding_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"theta_max", "system_mode", "beta_init", "sign"}, "encoding");
  EncodingConfig c;
  detail::read_opt(j, "theta_max", c.theta_max);
  detail::read_opt(j, "beta_init", c.beta_init);
  if (j.contains("system_mode"))
    c.system_mode = detail::enum_from<SystemMode>(
        j["system_mode"], {{"direct", SystemMode::direct}, {"normal_equations", SystemMode::normal_equations}},
        "system_mode");
  if (j.contains("sign"))
    c.sign = detail::enum_from<SignConvention>(
        j["sign"], {{"stabilized", SignConvention::stabilized}, {"as_written", SignConvention::as_written}}, "sign");
  c.validate();
  return c;
}

inline json to_json(const CavityParams& p) {
  return {{"tau", p.tau},     {"tau_gain", p.tau_gain},   {"pump", p.pump},
          {"alpha", p.alpha}, {"amplitude", p.amplitude}, {"dt", p.dt},
          {"roundtrip_ns", p.roundtrip_ns}};
}

/// Missing "pump" defaults to the balanced pump for the given alpha and amplitude.
inline CavityParams cavity_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"tau", "tau_gain", "pump", "alpha", "amplitude", "dt", "roundtrip_ns"},
                              "cavity");
  CavityParams p;
  detail::read_opt(j, "tau", p.tau);
  detail::read_opt(j, "tau_gain", p.tau_gain);
  detail::read_opt(j, "alpha", p.alpha);
  detail::read_opt(j, "amplitude", p.amplitude);
  detail::read_opt(j, "dt", p.dt);
  detail::read_opt(j, "roundtrip_ns", p.roundtrip_ns);
  p.pump = CavityParams::balanced_pump(p.alpha, p.amplitude);
  detail::read_opt(j, "pump", p.pump);
  p.validate();
  return p;
}

inline DynamicsMode mode_from_json(const json& j) {
  return detail::enum_from<DynamicsMode>(j,
                                         {{"phase_only", DynamicsMode::phase_only},
                                          {"phase", DynamicsMode::phase_only},
                                          {"full_field", DynamicsMode::full_field},
                                          {"full", DynamicsMode::full_field}},
                                         "mode");
}

inline json to_json(const PlanSolver& s) {
  if (const auto* spec = std::get_if<SolverSpec>(&s)) {
    json j = std::visit(
        [](const auto& k) -> json {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Cg>) return {{"kind", "cg"}};
          else if constexpr (std::is_same_v<K, Gmres>) return {{"kind", "gmres"}, {"restart", k.restart}};
          else if constexpr (std::is_same_v<K, BiCgStab>) return {{"kind", "bicgstab"}};
          else return {{"kind", "richardson"}, {"omega", k.omega}};
        },
        spec->kind);
    j["max_iterations"] = spec->max_iterations;
    return j;
  }
  const auto& c = std::get<LpuSolverConfig>(s);
  return {{"kind", "lpu"},
          {"label", c.label},
          {"mode", to_string(c.mode)},
          {"encoding", to_json(c.encoding)},
          {"cavity", to_json(c.cavity)},
          {"check_every", c.controls.check_every},
          {"max_roundtrips", c.controls.max_roundtrips},
          {"max_restarts", c.controls.max_restarts},
          {"adaptive_scale", c.controls.adaptive_scale},
          {"integrator", to_string(c.controls.step.integrator)},
          {"kernel", to_string(c.controls.step.kernel)}};
}

inline PlanSolver solver_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw parse_error("solver entry needs a \"kind\"");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "lpu") {
    detail::reject_unknown_keys(j,
                                {"kind", "label", "mode", "encoding", "cavity", "check_every", "max_roundtrips",
                                 "max_restarts", "adaptive_scale", "integrator", "kernel"},
                                "lpu solver");
    LpuSolverConfig c;
    if (j.contains("mode")) c.mode = mode_from_json(j["mode"]);
    if (c.mode == DynamicsMode::generic_cavity) throw parse_error("lpu solver cannot use generic_cavity mode");
    c.label = j.value("label", std::string("lpu-") + (c.mode == DynamicsMode::phase_only ? "phase" : "full"));
    if (j.contains("encoding")) c.encoding = encoding_from_json(j["encoding"]);
    if (j.contains("cavity")) c.cavity = cavity_from_json(j["cavity"]);
    detail::read_opt(j, "check_every", c.controls.check_every);
    detail::read_opt(j, "max_roundtrips", c.controls.max_roundtrips);
    detail::read_opt(j, "max_restarts", c.controls.max_restarts);
    detail::read_opt(j, "adaptive_scale", c.controls.adaptive_scale);
    if (j.contains("integrator"))
      c.controls.step.integrator = detail::enum_from<Integrator>(
          j["integrator"], {{"euler", Integrator::euler}, {"rk4", Integrator::rk4}}, "integrator");
    if (j.contains("kernel"))
      c.controls.step.kernel = detail::enum_from<PhaseKernel>(
          j["kernel"], {{"exact", PhaseKernel::exact}, {"linearized", PhaseKernel::linearized}}, "kernel");
    return c;
  }
  SolverSpec s;
  if (kind == "cg") {
    detail::reject_unknown_keys(j, {"kind", "max_iterations"}, "cg solver");
    s.kind = Cg{};
  } else if (kind == "gmres") {
    detail::reject_unknown_keys(j, {"kind", "restart", "max_iterations"}, "gmres solver");
    Gmres g;
    detail::read_opt(j, "restart", g.restart);
    s.kind = g;
  } else if (kind == "bicgstab") {
    detail::reject_unknown_keys(j, {"kind", "max_iterations"}, "bicgstab solver");
    s.kind = BiCgStab{};
  } else if (kind == "richardson") {
    detail::reject_unknown_keys(j, {"kind", "omega", "max_iterations"}, "richardson solver");
    Richardson r;
    detail::read_opt(j, "omega", r.omega);
    s.kind = r;
  } else {
    throw parse_error("unknown solver kind '" + kind + "'");
  }
  detail::read_opt(j, "max_iterations", s.max_iterations);
  s.validate();
  return s;
}

inline json to_json(const ProblemSpec& p) {
  json j = std::visit(
      [](const auto& s) -> json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PathProblem>) {
          return {{"path", s.path.string()}};
        } else if constexpr (std::is_same_v<S, MatrixRef>) {
          json r = {{"name", s.name}};
          if (s.group) r["group"] = *s.group;
          return r;
        } else {
          return {{"generate",
                   {{"kind", s.kind},
                    {"n", s.n},
                    {"bandwidth", s.bandwidth},
                    {"density", s.density},
                    {"margin", s.margin},
                    {"seed", s.seed}}}};
        }
      },
      p.source);
  if (!p.label.empty()) j["label"] = p.label;
  return j;
}

inline ProblemSpec problem_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"path", "name", "group", "generate", "label"}, "problem");
  ProblemSpec p;
  p.label = j.value("label", std::string{});
  const int kinds = int(j.contains("path")) + int(j.contains("name")) + int(j.contains("generate"));
  if (kinds != 1) throw parse_error("problem needs exactly one of \"path\", \"name\", \"generate\"");
  if (j.contains("path")) {
    p.source = PathProblem{j["path"].get<std::string>()};
  } else if (j.contains("name")) {
    MatrixRef r{j["name"].get<std::string>(), std::nullopt};
    if (j.contains("group")) r.group = j["group"].get<std::string>();
    if (r.name.empty()) throw parse_error("problem name must not be empty");
    p.source = r;
  } else {
    const auto& g = j["generate"];
    detail::reject_unknown_keys(g, {"kind", "n", "bandwidth", "density", "margin", "seed"}, "generate");
    GeneratedProblem gp;
    detail::read_opt(g, "kind", gp.kind);
    detail::read_opt(g, "n", gp.n);
    detail::read_opt(g, "bandwidth", gp.bandwidth);
    detail::read_opt(g, "density", gp.density);
    detail::read_opt(g, "margin", gp.margin);
    detail::read_opt(g, "seed", gp.seed);
    if (gp.kind != "banded" && gp.kind != "random_spd")
      throw parse_error("unknown generated problem kind '" + gp.kind + "'");
    p.source = gp;
  }
  return p;
}

inline json to_json(const BenchmarkPlan& plan) {
  json problems = json::array(), solvers = json::array();
  for (const auto& p : plan.problems) problems.push_back(to_json(p));
  for (const auto& s : plan.solvers) solvers.push_back(to_json(s));
  return {{"problems", problems},
          {"solvers", solvers},
          {"runs_per_pair", plan.runs_per_pair},
          {"tol", plan.tol},
          {"rhs_seed_base", plan.rhs_seed_base},
          {"rhs_per_run", plan.rhs_per_run}};
}

inline BenchmarkPlan plan_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"problems", "solvers", "runs_per_pair", "tol", "rhs_seed_base", "rhs_per_run"},
                              "plan");
  BenchmarkPlan plan;
  try {
    for (const auto& p : j.at("problems")) plan.problems.push_back(problem_from_json(p));
    for (const auto& s : j.at("solvers")) plan.solvers.push_back(solver_from_json(s));
    detail::read_opt(j, "runs_per_pair", plan.runs_per_pair);
    detail::read_opt(j, "tol", plan.tol);
    detail::read_opt(j, "rhs_seed_base", plan.rhs_seed_base);
    detail::read_opt(j, "rhs_per_run", plan.rhs_per_run);
  } catch (const json::exception& e) {
    throw parse_error(std::string("plan: ") + e.what());
  } catch (const argument_error& e) {
    throw parse_error(std::string("plan: ") + e.what());
  }
  if (plan.problems.empty() || plan.solvers.empty()) throw parse_error("plan needs at least one problem and solver");
  plan.validate();
  return plan;
}

inline BenchmarkPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open plan " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
  auto plan = plan_from_json(j);
  // relative matrix paths are taken relative to the plan file
  for (auto& p : plan.problems)
    if (auto* local = std::get_if<PathProblem>(&p.source); local && local->path.is_relative())
      local->path = path.parent_path() / local->path;
  return plan;
}

inline json to_json(const RunRecord& r) {
  return {{"problem", r.problem},
          {"solver", r.solver},
          {"run_index", r.run_index},
          {"time_kind", r.time_kind},
          {"time_ns", r.time_ns},
          {"converged", r.converged},
          {"residual", r.residual ? json(*r.residual) : json(nullptr)},
          {"iterations_or_roundtrips", r.iterations_or_roundtrips},
          {"rhs_seed", r.rhs_seed},
          {"rhs_checksum", r.rhs_checksum},
          {"status", r.status}};
}

inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.problem = j.at("problem").get<std::string>();
  r.solver = j.at("solver").get<std::string>();
  r.run_index = j.at("run_index").get<std::size_t>();
  r.time_kind = j.at("time_kind").get<std::string>();
  r.time_ns = j.at("time_ns").get<double>();
  r.converged = j.at("converged").get<bool>();
  if (!j.at("residual").is_null()) r.residual = j["residual"].get<double>();
  r.iterations_or_roundtrips = j.at("iterations_or_roundtrips").get<std::uint64_t>();
  r.rhs_seed = j.at("rhs_seed").get<std::uint64_t>();
  r.rhs_checksum = j.at("rhs_checksum").get<std::string>();
  r.status = j.at("status").get<std::string>();
  return r;
}

inline json to_json(const PairSummary& s) {
  json j = {{"problem", s.problem},     {"solver", s.solver},           {"time_kind", s.time_kind},
            {"n_runs", s.n_runs},       {"n_converged", s.n_converged}, {"median_ns", nullptr},
            {"p25_ns", nullptr},        {"p75_ns", nullptr}};
  if (s.stats) {
    j["median_ns"] = s.stats->median_ns;
    j["p25_ns"] = s.stats->p25_ns;
    j["p75_ns"] = s.stats->p75_ns;
  }
  return j;
}

/**
 * Full report: the expanded plan (every default written out), records and
 * per-pair summaries. Re-running the embedded plan reproduces every record
 * except the wall-clock apply times.
 */
inline json report_json(const BenchmarkPlan& plan, const std::vector<RunRecord>& records,
                        const std::vector<PairSummary>& summaries) {
  if (records.empty()) throw argument_error("report: no records");
  json recs = json::array(), sums = json::array();
  for (const auto& r : records) recs.push_back(to_json(r));
  for (const auto& s : summaries) sums.push_back(to_json(s));
  return {{"schema_version", report_schema_version},
          {"generator", "lpu-emu"},
          {"percentile_convention", percentile_convention},
          {"time_kinds",
           {{apply_time_kind, "wall-clock duration of the digital solver's iteration loop"},
            {roundtrip_time_kind, "emulated roundtrips multiplied by the roundtrip duration; not wall clock"}}},
          {"statistics", "median, p25 and p75 over converged runs only; n_converged and n_runs reported per pair"},
          {"plan", to_json(plan)},
          {"records", recs},
          {"summaries", sums}};
}

struct ParsedReport {
  int schema_version = 0;
  BenchmarkPlan plan;
  std::vector<RunRecord> records;
};

inline ParsedReport parse_report(const json& j) {
  ParsedReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != report_schema_version)
      throw parse_error("unsupported report schema_version " + std::to_string(r.schema_version));
    r.plan = plan_from_json(j.at("plan"));
    for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
  } catch (const json::exception& e) {
    throw parse_error(std::string("report: ") + e.what());
  }
  return r;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace detail

inline constexpr const char* report_csv_header =
    "problem,solver,run_index,time_kind,time_ns,converged,residual,iterations_or_roundtrips,rhs_seed,"
    "rhs_checksum,status";

/// One header line plus one line per record.
inline std::string report_csv(const std::vector<RunRecord>& records) {
  std::string out = std::string(report_csv_header) + "\n";
  for (const auto& r : records) {
    out += detail::csv_field(r.problem) + ',' + detail::csv_field(r.solver) + ',' + std::to_string(r.run_index) +
           ',' + r.time_kind + ',' + detail::fmt17(r.time_ns) + ',' + (r.converged ? "true" : "false") + ',' +
           (r.residual ? detail::fmt17(*r.residual) : std::string{}) + ',' +
           std::to_string(r.iterations_or_roundtrips) + ',' + std::to_string(r.rhs_seed) + ',' + r.rhs_checksum +
           ',' + detail::csv_field(r.status) + '\n';
  }
  return out;
}

/**
 * Grouped-bar data: one group per problem (plan order), one bar per solver
 * (plan order) with the median and the asymmetric [p25, p75] range.
 */
inline json chart_json(const std::vector<PairSummary>& summaries) {
  if (summaries.empty()) throw argument_error("chart: no summarized pairs");
  json groups = json::array();
  for (const auto& s : summaries) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const json& g) { return g["problem"] == s.problem; });
    if (it == groups.end()) {
      groups.push_back({{"problem", s.problem}, {"bars", json::array()}});
      it = groups.end() - 1;
    }
    json bar = {{"solver", s.solver}, {"time_kind", s.time_kind}, {"n_runs", s.n_runs},
                {"n_converged", s.n_converged}};
    if (s.stats) {
      bar["median_ns"] = s.stats->median_ns;
      bar["p25_ns"] = s.stats->p25_ns;
      bar["p75_ns"] = s.stats->p75_ns;
      bar["error_minus_ns"] = s.stats->median_ns - s.stats->p25_ns;
      bar["error_plus_ns"] = s.stats->p75_ns - s.stats->median_ns;
    } else {
      for (const char* k : {"median_ns", "p25_ns", "p75_ns", "error_minus_ns", "error_plus_ns"}) bar[k] = nullptr;
    }
    (*it)["bars"].push_back(bar);
  }
  return {{"schema_version", report_schema_version},
          {"title", "Solve runtimes"},
          {"y_axis", "time to solution [ns], log scale"},
          {"percentile_convention", percentile_convention},
          {"problems", groups}};
}

/// Static SVG: one panel per problem, log-scaled bars with p25..p75 whiskers.
inline std::string chart_svg(const json& chart) {
  const auto& groups = chart.at("problems");
  const double panel_w = 360, panel_h = 260, margin_l = 70, margin_b = 70, margin_t = 30;
  const double width = panel_w * static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double height = panel_h + margin_b + margin_t;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  std::size_t gi = 0;
  for (const auto& g : groups) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& bar : g["bars"]) {
      if (bar["median_ns"].is_null()) continue;
      lo = std::min(lo, bar["p25_ns"].get<double>());
      hi = std::max(hi, bar["p75_ns"].get<double>());
    }
    if (!(hi > 0.0)) {
      lo = 1.0;
      hi = 10.0;
    }
    const double dmin = std::floor(std::log10(std::max(lo, 1e-3))) - 0.5;
    const double dmax = std::ceil(std::log10(hi)) + 0.2;
    const double x0 = static_cast<double>(gi) * panel_w + margin_l;
    const double plot_w = panel_w - margin_l - 20, plot_h = panel_h;
    auto ypos = [&](double v) {
      return margin_t + plot_h * (1.0 - (std::log10(std::max(v, 1e-3)) - dmin) / (dmax - dmin));
    };
    svg << "<text x=\"" << x0 + plot_w / 2 << "\" y=\"18\" text-anchor=\"middle\">Solve runtimes for "
        << g["problem"].get<std::string>() << "</text>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << margin_t << "\" x2=\"" << x0 << "\" y2=\"" << margin_t + plot_h
        << "\" stroke=\"black\"/>\n";
    for (int d = static_cast<int>(std::ceil(dmin)); d <= static_cast<int>(std::floor(dmax)); ++d) {
      svg << "<text x=\"" << x0 - 5 << "\" y=\"" << ypos(std::pow(10.0, d)) + 4
          << "\" text-anchor=\"end\">1e" << d << "</text>\n";
    }
    const auto& bars = g["bars"];
    const double slot = plot_w / static_cast<double>(std::max<std::size_t>(1, bars.size()));
    std::size_t bi = 0;
    for (const auto& bar : bars) {
      const double cx = x0 + slot * (static_cast<double>(bi) + 0.5);
      const double bw = slot * 0.6;
      if (!bar["median_ns"].is_null()) {
        const double top = ypos(bar["median_ns"].get<double>());
        svg << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << top << "\" width=\"" << bw << "\" height=\""
            << margin_t + plot_h - top << "\" fill=\"#4a7ab5\"/>\n";
        const double y25 = ypos(bar["p25_ns"].get<double>()), y75 = ypos(bar["p75_ns"].get<double>());
        svg << "<line x1=\"" << cx << "\" y1=\"" << y25 << "\" x2=\"" << cx << "\" y2=\"" << y75
            << "\" stroke=\"black\"/>\n";
      }
      svg << "<text x=\"" << cx << "\" y=\"" << margin_t + plot_h + 14 << "\" text-anchor=\"middle\">"
          << bar["solver"].get<std::string>() << "</text>\n";
      ++bi;
    }
    ++gi;
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("write failed for " + path.string());
}

} // namespace lpu

#endif // LPU_BENCH_HPP

// lpu: command-line front end for the emulator, the digital baselines, the
// benchmark harness and the matrix collection cache.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <lpu/bench.hpp>
#include <lpu/collection.hpp>

namespace fs = std::filesystem;
using lpu::json;

namespace {

enum ExitCode : int {
  ok = 0,
  other_failure = 1,
  bad_arguments = 2,
  parse_failure = 3,
  not_converged = 4,
  network_failure = 5,
};

struct CommonOptions {
  // empty: resolved from the environment when first needed
  std::string cache_dir;
  std::string collection_url;
};

struct MatrixSource {
  std::string matrix;
  std::uint64_t rhs_seed = 1;
};

struct SolveOptions {
  MatrixSource src;
  std::string solver = "cg";
  std::size_t restart = 30;
  double omega = 1.0;
  double tol = 1e-5;
  std::size_t max_iterations = 10000;
  std::string out;
};

struct EmulateOptions {
  MatrixSource src;
  std::string mode = "phase";
  std::string sign = "stabilized";
  std::string system = "direct";
  double theta_max = 0.3;
  double beta = 0.01;
  double tau = 1.0;
  double tau_gain = 10.0;
  std::optional<double> pump;
  double alpha = 0.1;
  double amplitude = 1.0;
  double dt = 1.0;
  double roundtrip_ns = 20.0;
  std::string integrator = "euler";
  std::string kernel = "exact";
  double tol = 1e-5;
  std::uint64_t check_every = 100;
  std::uint64_t max_roundtrips = 200000;
  std::uint64_t max_restarts = 12;
  bool fixed_scale = false;
  std::string trace;
  std::string out;
};

struct BenchOptions {
  std::string plan;
  std::string out;
  std::string csv;
  std::string chart;
  std::string svg;
  std::optional<std::size_t> runs;
};

struct FetchArgs {
  std::vector<std::string> names;
  bool refetch = false;
};

struct InfoOptions {
  std::string matrix;
};

lpu::CollectionClient client_for(const CommonOptions& c) {
  return lpu::CollectionClient(c.cache_dir.empty() ? lpu::default_cache_dir() : fs::path(c.cache_dir),
                               c.collection_url.empty() ? lpu::default_collection_url() : c.collection_url);
}

// "name" or "group/name"
lpu::MatrixRef ref_from_name(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return {s, std::nullopt};
  return {s.substr(slash + 1), s.substr(0, slash)};
}

// A path when the file exists, otherwise a collection matrix name.
lpu::ParsedMatrix load_matrix(const std::string& spec, const CommonOptions& common) {
  if (spec.empty()) throw lpu::argument_error("empty matrix argument");
  if (fs::exists(spec)) return lpu::read_matrix_market(spec);
  const fs::path p(spec);
  const auto ext = p.extension().string();
  if (ext == ".mtx" || ext == ".gz" || spec.front() == '.' || spec.front() == '/' ||
      std::count(spec.begin(), spec.end(), '/') > 1)
    throw lpu::not_found_error("no such file: " + spec);
  auto client = client_for(common);
  return client.load(ref_from_name(spec));
}

void add_matrix_options(CLI::App* cmd, MatrixSource& src) {
  cmd->add_option("-m,--matrix", src.matrix, "Matrix Market file (.mtx or .mtx.gz) or collection name")->required();
  cmd->add_option("--rhs-seed", src.rhs_seed, "Seed of the standard-normal right-hand side b");
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_vector_summary(const lpu::Vector& x) {
  std::cout << "x (n = " << x.size() << "): [";
  for (std::size_t i = 0; i < std::min<std::size_t>(x.size(), 6); ++i) std::cout << (i ? ", " : "") << fmt(x[i]);
  if (x.size() > 6) std::cout << ", ...";
  std::cout << "]  ||x|| = " << fmt(lpu::norm2(x)) << "\n";
}

void write_json(const std::string& path, const json& j) {
  lpu::write_text_file(path, j.dump(2) + "\n");
}

int run_solve(const SolveOptions& o, const CommonOptions& common) {
  const auto parsed = load_matrix(o.src.matrix, common);
  const auto& A = parsed.matrix;
  const auto b = lpu::random_rhs(A.rows(), o.src.rhs_seed);
  lpu::SolverSpec spec;
  if (o.solver == "cg") spec.kind = lpu::Cg{};
  else if (o.solver == "gmres") spec.kind = lpu::Gmres{o.restart};
  else if (o.solver == "bicgstab") spec.kind = lpu::BiCgStab{};
  else spec.kind = lpu::Richardson{o.omega};
  spec.tol = o.tol;
  spec.max_iterations = o.max_iterations;
  const auto out = lpu::solve(A, b, spec);

  std::cout << "matrix: " << parsed.metadata.name << " (n = " << A.rows() << ", nnz = " << A.nnz() << ")\n"
            << "solver: " << lpu::solver_label(spec.kind) << "\n"
            << "converged: " << (out.converged ? "true" : "false") << "\n"
            << "stop reason: " << lpu::to_string(out.reason) << "\n"
            << "iterations: " << out.iterations << "\n"
            << "relative residual: " << fmt(out.final_residual, "%.3e") << "\n"
            << "apply time: " << fmt(out.apply_time_ns, "%.0f") << " ns (wall clock, iteration loop only)\n";
  print_vector_summary(out.x);
  if (!o.out.empty()) {
    write_json(o.out, {{"schema_version", lpu::report_schema_version},
                       {"matrix", parsed.metadata.name},
                       {"n", A.rows()},
                       {"nnz", A.nnz()},
                       {"rhs_seed", o.src.rhs_seed},
                       {"rhs_checksum", lpu::hex64(lpu::vector_checksum(b))},
                       {"solver", lpu::to_json(lpu::PlanSolver{spec})},
                       {"tol", spec.tol},
                       {"converged", out.converged},
                       {"stop_reason", lpu::to_string(out.reason)},
                       {"iterations", out.iterations},
                       {"relative_residual", out.final_residual},
                       {"apply_time_ns", out.apply_time_ns},
                       {"x", out.x}});
  }
  return out.converged ? ok : not_converged;
}

int run_emulate(const EmulateOptions& o, const CommonOptions& common) {
  lpu::LpuSolverConfig cfg;
  cfg.label = "lpu-" + o.mode;
  cfg.encoding.theta_max = o.theta_max;
  cfg.encoding.beta_init = o.beta;
  cfg.encoding.sign = o.sign == "stabilized" ? lpu::SignConvention::stabilized : lpu::SignConvention::as_written;
  cfg.encoding.system_mode = o.system == "direct" ? lpu::SystemMode::direct : lpu::SystemMode::normal_equations;
  cfg.cavity.tau = o.tau;
  cfg.cavity.tau_gain = o.tau_gain;
  cfg.cavity.alpha = o.alpha;
  cfg.cavity.amplitude = o.amplitude;
  cfg.cavity.pump = o.pump ? *o.pump : lpu::CavityParams::balanced_pump(o.alpha, o.amplitude);
  cfg.cavity.dt = o.dt;
  cfg.cavity.roundtrip_ns = o.roundtrip_ns;
  cfg.mode = o.mode == "phase" ? lpu::DynamicsMode::phase_only : lpu::DynamicsMode::full_field;
  cfg.controls.tol = o.tol;
  cfg.controls.check_every = o.check_every;
  cfg.controls.max_roundtrips = o.max_roundtrips;
  cfg.controls.max_restarts = o.max_restarts;
  cfg.controls.adaptive_scale = !o.fixed_scale;
  cfg.controls.step.integrator = o.integrator == "euler" ? lpu::Integrator::euler : lpu::Integrator::rk4;
  cfg.controls.step.kernel = o.kernel == "exact" ? lpu::PhaseKernel::exact : lpu::PhaseKernel::linearized;
  cfg.encoding.validate();
  cfg.cavity.validate();

  const auto parsed = load_matrix(o.src.matrix, common);
  const auto& A = parsed.matrix;
  const auto b = lpu::random_rhs(A.rows(), o.src.rhs_seed);
  const auto problem = lpu::encode(A, b, cfg.encoding);
  const auto r = lpu::run(problem, A, b, cfg.cavity, cfg.mode, cfg.controls);

  std::cout << "matrix: " << parsed.metadata.name << " (n = " << A.rows() << ", nnz = " << A.nnz() << ")\n"
            << "mode: " << lpu::to_string(cfg.mode) << ", sign: " << lpu::to_string(cfg.encoding.sign)
            << ", system: " << lpu::to_string(cfg.encoding.system_mode) << "\n"
            << "converged: " << (r.converged ? "true" : "false") << "\n"
            << "relative residual: " << fmt(r.final_residual, "%.3e") << "\n"
            << "roundtrips: " << r.roundtrips << "\n"
            << "time: " << fmt(r.time_ns, "%.0f") << " ns (roundtrips x " << fmt(cfg.cavity.roundtrip_ns)
            << " ns, model time)\n"
            << "restarts: " << r.restarts << ", final beta: " << fmt(r.final_beta) << ", sigma: "
            << fmt(problem.sigma) << "\n"
            << "max phase offset: " << fmt(r.max_phase_seen) << " rad\n";
  if (cfg.mode == lpu::DynamicsMode::full_field)
    std::cout << "amplitude spread: " << fmt(r.amplitude_spread, "%.3e") << "\n";
  print_vector_summary(r.decoded_x);

  if (!o.trace.empty()) {
    std::ofstream t(o.trace);
    if (!t) throw lpu::io_error("cannot write " + o.trace);
    lpu::write_trace_csv(t, r);
  }
  if (!o.out.empty()) {
    json trace = json::array();
    for (const auto& p : r.residual_trace) trace.push_back({p.roundtrip, p.residual, p.max_phase});
    write_json(o.out, {{"schema_version", lpu::report_schema_version},
                       {"matrix", parsed.metadata.name},
                       {"n", A.rows()},
                       {"nnz", A.nnz()},
                       {"rhs_seed", o.src.rhs_seed},
                       {"rhs_checksum", lpu::hex64(lpu::vector_checksum(b))},
                       {"solver", lpu::to_json(lpu::PlanSolver{cfg})},
                       {"tol", cfg.controls.tol},
                       {"sigma", problem.sigma},
                       {"converged", r.converged},
                       {"relative_residual", r.final_residual},
                       {"roundtrips", r.roundtrips},
                       {"time_ns", r.time_ns},
                       {"time_kind", lpu::roundtrip_time_kind},
                       {"restarts", r.restarts},
                       {"final_beta", r.final_beta},
                       {"max_phase_seen", r.max_phase_seen},
                       {"amplitude_spread", r.amplitude_spread},
                       {"trace_columns", {"roundtrip", "residual", "max_phase"}},
                       {"trace", trace},
                       {"x", r.decoded_x}});
  }
  return r.converged ? ok : not_converged;
}

int run_bench(const BenchOptions& o, const CommonOptions& common) {
  auto plan = lpu::read_plan(o.plan);
  if (o.runs) {
    plan.runs_per_pair = *o.runs;
    plan.validate();
  }
  auto client = client_for(common);
  const lpu::MatrixLoader loader = [&](const lpu::MatrixRef& ref) { return client.load(ref).matrix; };
  const auto records = lpu::run_plan(plan, loader);
  const auto sums = lpu::summarize_records(records);

  for (const auto& s : sums) {
    std::cout << s.problem << "  " << s.solver << "  converged " << s.n_converged << "/" << s.n_runs;
    if (s.stats)
      std::cout << "  median " << fmt(s.stats->median_ns, "%.0f") << " ns  [p25 " << fmt(s.stats->p25_ns, "%.0f")
                << ", p75 " << fmt(s.stats->p75_ns, "%.0f") << "]  (" << s.time_kind << ")";
    std::cout << "\n";
  }
  write_json(o.out, lpu::report_json(plan, records, sums));
  if (!o.csv.empty()) lpu::write_text_file(o.csv, lpu::report_csv(records));
  const auto chart = lpu::chart_json(sums);
  if (!o.chart.empty()) write_json(o.chart, chart);
  if (!o.svg.empty()) lpu::write_text_file(o.svg, lpu::chart_svg(chart));
  std::cout << "report: " << o.out << " (" << records.size() << " records)\n";
  return ok;
}

int run_fetch(const FetchArgs& o, const CommonOptions& common) {
  auto client = client_for(common);
  for (const auto& name : o.names) {
    const auto e = client.fetch(ref_from_name(name), lpu::FetchOptions{o.refetch});
    std::cout << e.ref.label() << "  " << e.local_path.string() << "  sha256 " << e.checksum << "  "
              << (e.bytes_downloaded ? "downloaded " + std::to_string(e.bytes_downloaded) + " bytes"
                                     : std::string("cached"))
              << "\n";
  }
  return ok;
}

int run_info(const InfoOptions& o, const CommonOptions& common) {
  const auto parsed = load_matrix(o.matrix, common);
  const auto& A = parsed.matrix;
  std::size_t zero_diag = 0;
  for (std::size_t i = 0; i < std::min(A.rows(), A.cols()); ++i)
    if (A.at(i, i) == 0.0) ++zero_diag;
  std::cout << "name: " << parsed.metadata.name << "\n"
            << "source: " << parsed.metadata.source << "\n"
            << "n = " << A.rows() << "\n"
            << "cols = " << A.cols() << "\n"
            << "nnz = " << A.nnz() << "\n"
            << "symmetry: " << lpu::to_string(parsed.metadata.symmetry) << "\n"
            << "file entries: " << parsed.metadata.file_entries << "\n"
            << "max row 1-norm: " << fmt(lpu::max_row_abs_sum(A)) << "\n"
            << "zero diagonal entries: " << zero_diag << "\n"
            << "numerically symmetric: " << (A == lpu::transpose(A) ? "yes" : "no") << "\n";
  return ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laser processing unit emulator, Krylov baselines and benchmark harness", "lpu"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");
  app.footer("Exit codes: 0 ok, 1 other failure, 2 bad arguments, 3 parse error, 4 not converged, 5 network failure.\n"
             "Environment: LPU_CACHE_DIR (cache directory), LPU_COLLECTION_URL (collection base URL),\n"
             "HTTPS_PROXY / HTTP_PROXY (proxy).");

  CommonOptions common;
  app.add_option("--cache-dir", common.cache_dir,
                 "Matrix cache directory [$LPU_CACHE_DIR, else $XDG_CACHE_HOME/lpu-emu, else ~/.cache/lpu-emu]");
  app.add_option("--collection-url", common.collection_url,
                 "Base URL of the sparse matrix collection [$LPU_COLLECTION_URL, else https://sparse.tamu.edu]");

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Run one digital solver on a matrix with a random right-hand side");
  add_matrix_options(solve, so.src);
  solve->add_option("-s,--solver", so.solver, "Solver")->check(CLI::IsMember({"cg", "gmres", "bicgstab", "richardson"}));
  solve->add_option("--restart", so.restart, "GMRES restart length")->check(CLI::PositiveNumber);
  solve->add_option("--omega", so.omega, "Richardson step");
  solve->add_option("--tol", so.tol, "Relative residual tolerance ||Ax-b||/||b||")->check(CLI::PositiveNumber);
  solve->add_option("--max-iterations", so.max_iterations, "Iteration cap");
  solve->add_option("-o,--out", so.out, "Write a JSON result here [not written]");

  EmulateOptions eo;
  auto* emulate = app.add_subcommand("emulate", "Solve a system by integrating the laser dynamics to steady state");
  add_matrix_options(emulate, eo.src);
  emulate->add_option("--mode", eo.mode, "Dynamics: phase (phase-only) or full (complex fields with gain)")
      ->check(CLI::IsMember({"phase", "full"}));
  emulate->add_option("--sign", eo.sign, "Coupling sign convention")->check(CLI::IsMember({"stabilized", "as_written"}));
  emulate->add_option("--system", eo.system, "Encode A x = b directly or the normal equations")
      ->check(CLI::IsMember({"direct", "normal"}));
  emulate->add_option("--theta-max", eo.theta_max, "Phase offset budget in radians; exceeding it halves beta");
  emulate->add_option("--beta", eo.beta, "Initial scale of b")->check(CLI::PositiveNumber);
  emulate->add_option("--tau", eo.tau, "Cavity time unit (roundtrips)")->check(CLI::PositiveNumber);
  emulate->add_option("--tau-gain", eo.tau_gain, "Gain time constant (roundtrips)")->check(CLI::PositiveNumber);
  emulate->add_option("--pump", eo.pump, "Pump P [2*alpha*(1+amplitude^2), which makes g = 1 at |E| = amplitude]")
      ->check(CLI::PositiveNumber);
  emulate->add_option("--alpha", eo.alpha, "Roundtrip loss")->check(CLI::NonNegativeNumber);
  emulate->add_option("--amplitude", eo.amplitude, "Steady laser amplitude D")->check(CLI::PositiveNumber);
  emulate->add_option("--dt", eo.dt, "Integrator step in roundtrips (1/k)")->check(CLI::PositiveNumber);
  emulate->add_option("--roundtrip-ns", eo.roundtrip_ns, "Duration of one roundtrip in ns")->check(CLI::PositiveNumber);
  emulate->add_option("--integrator", eo.integrator, "Time stepper")->check(CLI::IsMember({"euler", "rk4"}));
  emulate->add_option("--kernel", eo.kernel, "Phase coupling: exact sine or linearized")
      ->check(CLI::IsMember({"exact", "linearized"}));
  emulate->add_option("--tol", eo.tol, "Relative residual tolerance against the original system")
      ->check(CLI::PositiveNumber);
  emulate->add_option("--check-every", eo.check_every, "Roundtrips between residual checks")->check(CLI::PositiveNumber);
  emulate->add_option("--max-roundtrips", eo.max_roundtrips, "Roundtrip cap over all restarts");
  emulate->add_option("--max-restarts", eo.max_restarts, "Restart budget for scale reductions");
  emulate->add_flag("--fixed-scale", eo.fixed_scale, "Only rescale on theta-max violations, not on the sine floor");
  emulate->add_option("--trace", eo.trace, "Write the residual trace as CSV here [not written]");
  emulate->add_option("-o,--out", eo.out, "Write a JSON result here [not written]");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Execute a benchmark plan and write the report");
  bench->add_option("-p,--plan", bo.plan, "Plan file (JSON)")->required()->check(CLI::ExistingFile);
  bench->add_option("-o,--out", bo.out, "Report file (JSON)")->required();
  bench->add_option("--csv", bo.csv, "Also write the run records as CSV [not written]");
  bench->add_option("--chart", bo.chart, "Also write grouped bar chart data (JSON) [not written]");
  bench->add_option("--svg", bo.svg, "Also write the bar chart as SVG [not written]");
  bench->add_option("--runs", bo.runs, "Override runs_per_pair from the plan [plan value]")->check(CLI::PositiveNumber);

  FetchArgs fo;
  auto* fetch = app.add_subcommand("fetch", "Download collection matrices into the cache");
  fetch->add_option("names", fo.names, "Matrix names, optionally as group/name")->required();
  fetch->add_flag("--refetch", fo.refetch, "Re-download when the cached file fails its checksum");

  InfoOptions io;
  auto* info = app.add_subcommand("info", "Print statistics of a matrix file or cached collection matrix");
  info->add_option("matrix", io.matrix, "Matrix Market file or collection name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : bad_arguments;
  }

  try {
    if (*solve) return run_solve(so, common);
    if (*emulate) return run_emulate(eo, common);
    if (*bench) return run_bench(bo, common);
    if (*fetch) return run_fetch(fo, common);
    if (*info) return run_info(io, common);
  } catch (const lpu::parse_error& e) {
    std::cerr << "lpu: parse error: " << e.what() << "\n";
    return parse_failure;
  } catch (const lpu::network_error& e) {
    std::cerr << "lpu: network error: " << e.what() << "\n";
    return network_failure;
  } catch (const lpu::divergence_error& e) {
    std::cerr << "lpu: not converged: " << e.what() << "\n";
    return not_converged;
  } catch (const lpu::restart_budget_error& e) {
    std::cerr << "lpu: not converged: " << e.what() << "\n";
    return not_converged;
  } catch (const lpu::argument_error& e) {
    std::cerr << "lpu: " << e.what() << "\n";
    return bad_arguments;
  } catch (const lpu::dimension_error& e) {
    std::cerr << "lpu: " << e.what() << "\n";
    return bad_arguments;
  } catch (const lpu::not_found_error& e) {
    std::cerr << "lpu: " << e.what() << "\n";
    return bad_arguments;
  } catch (const lpu::ambiguous_name_error& e) {
    std::cerr << "lpu: " << e.what() << "\n";
    return bad_arguments;
  } catch (const std::exception& e) {
    std::cerr << "lpu: " << e.what() << "\n";
    return other_failure;
  }
  return other_failure;
}

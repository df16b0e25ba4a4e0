#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbal/io.hpp"
#include "cbal/oracle.hpp"
#include "cbal/solver.hpp"

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string vec_line(const cbal::Vec& v) {
  std::string out;
  for (int j = 0; j < v.size(); ++j) {
    if (j) out += ' ';
    out += fmt(v[j]);
  }
  return out.empty() ? std::string("(none)") : out;
}

cbal::Problem load_problem(const std::string& path) {
  return cbal::parse_problem(cbal::read_text_file(path));
}

cbal::Strategy parse_strategy(const std::string& s) {
  if (s == "round-robin") return cbal::Strategy::RoundRobin;
  if (s == "contiguous") return cbal::Strategy::Contiguous;
  throw cbal::SolverError("unknown strategy: " + s +
                          " (expected round-robin or contiguous)");
}

int run_validate(const std::string& path) {
  const cbal::Problem p = load_problem(path);
  const cbal::ValidationReport rep = cbal::validate(p);
  if (!rep.ok) {
    for (const auto& issue : rep.issues)
      std::cerr << "invalid: " << issue << "\n";
    return 1;
  }
  std::cout << "ok: n=" << p.n << ", F=" << p.F.size() << ", G="
            << p.G.rows.size() << ", H=" << p.H.rows.size() << "\n";
  for (size_t j = 0; j < rep.quad_min_eigenvalues.size(); ++j)
    std::cout << "quadratic constraint " << j
              << ": min Hessian eigenvalue " << fmt(rep.quad_min_eigenvalues[j])
              << "\n";
  return 0;
}

int run_partition_info(const std::string& path, int N, int M,
                       const std::string& strategy) {
  const cbal::Problem p = load_problem(path);
  const cbal::ConsensusPartition part =
      cbal::build_partition(p, N, M, parse_strategy(strategy));
  std::cout << "blocks: " << part.N << ", subvectors per block: " << part.M
            << "\n";
  std::cout << "subvector ranges:";
  for (int l = 0; l < part.M; ++l)
    std::cout << " [" << part.range_lo[l] << "," << part.range_hi[l] << ")";
  std::cout << "\n";
  auto print_assign = [&](const char* name, const std::vector<int>& assign) {
    std::cout << name << " rows by block:";
    for (int i = 0; i < part.N; ++i) {
      std::cout << " " << i << ":[";
      bool first = true;
      for (size_t j = 0; j < assign.size(); ++j)
        if (assign[j] == i) {
          if (!first) std::cout << ' ';
          std::cout << j;
          first = false;
        }
      std::cout << "]";
    }
    std::cout << "\n";
  };
  print_assign("F", part.F_assign);
  print_assign("G", part.G_assign);
  print_assign("H", part.H_assign);
  return 0;
}

struct SolveFlags {
  std::string problem, config_path, trace_path;
  int N = 2, M = 2;
  std::string strategy = "round-robin";
  std::string mode;
  double tol = -1.0;
  long max_iter = -1;
  bool no_scale = false;
  double target_range = -1.0;
};

cbal::SolverConfig build_config(const SolveFlags& fl) {
  cbal::SolverConfig cfg;
  if (!fl.config_path.empty())
    cbal::parse_config_into(cbal::read_text_file(fl.config_path), cfg);
  if (fl.tol > 0.0) cfg.tol = fl.tol;
  if (fl.max_iter > 0) cfg.max_iter = fl.max_iter;
  if (fl.no_scale) cfg.scale = false;
  if (fl.target_range > 0.0) cfg.target_range = fl.target_range;
  if (!fl.mode.empty()) {
    if (fl.mode == "seq" || fl.mode == "sequential")
      cfg.mode = cbal::ExecMode::Sequential;
    else if (fl.mode == "par" || fl.mode == "parallel")
      cfg.mode = cbal::ExecMode::ParallelBlocks;
    else
      throw cbal::SolverError("unknown mode: " + fl.mode +
                              " (expected seq or par)");
  }
  return cfg;
}

int run_solve(const SolveFlags& fl) {
  const cbal::Problem p = load_problem(fl.problem);
  const cbal::SolverConfig cfg = build_config(fl);
  const cbal::SolveResult res =
      cbal::run_solver(p, cfg, fl.N, fl.M, parse_strategy(fl.strategy));
  std::cout << "status: " << cbal::status_name(res.status) << "\n";
  std::cout << "message: " << res.message << "\n";
  std::cout << "iterations: " << res.iterations << "\n";
  std::cout << "objective: " << fmt(res.objective) << "\n";
  std::cout << "final residual: " << fmt(res.final_residual) << "\n";
  std::cout << "cumulative certificate sum: " << fmt(res.cumulative_J)
            << (res.cumulative_J >= 0.0 ? " (nonnegative)" : " (negative)")
            << "\n";
  std::cout << "descent gap warnings: " << res.descent_gap_warnings << "\n";
  std::cout << "inner cap hits: " << res.inner_cap_hits << "\n";
  std::cout << "Z: " << vec_line(res.z) << "\n";
  const std::string table = cbal::trace_csv(res.trace);
  if (fl.trace_path.empty()) {
    std::cout << "\n" << table;
  } else {
    cbal::write_text_file(fl.trace_path, table);
    std::cout << "trace written to " << fl.trace_path << "\n";
  }
  if (res.status == cbal::SolveStatus::Converged) return 0;
  if (res.status == cbal::SolveStatus::IterationCap) return 2;
  return 1;
}

int run_oracle(const std::string& path, double tol, unsigned long seed) {
  const cbal::Problem p = load_problem(path);
  const cbal::ValidationReport rep = cbal::validate(p);
  if (!rep.ok) {
    for (const auto& issue : rep.issues)
      std::cerr << "invalid: " << issue << "\n";
    return 1;
  }
  const cbal::OracleSolution sol = cbal::solve_reference(p, tol, seed);
  const bool opt = sol.status == cbal::OracleStatus::Optimal;
  std::cout << "status: " << (opt ? "Optimal" : "Infeasible") << "\n";
  std::cout << "f_star: " << fmt(sol.f_star) << "\n";
  std::cout << "z_star: " << vec_line(sol.z_star) << "\n";
  std::cout << "violation: " << fmt(sol.violation) << "\n";
  if (opt) {
    std::cout << "F multipliers: " << vec_line(sol.F_mult) << "\n";
    std::cout << "G multipliers: " << vec_line(sol.G_mult) << "\n";
    std::cout << "H multipliers: " << vec_line(sol.H_mult) << "\n";
  }
  return 0;
}

int run_compare(const SolveFlags& fl, const std::string& solution_text,
                double tol, unsigned long seed) {
  const cbal::Problem p = load_problem(fl.problem);
  const cbal::OracleSolution sol = cbal::solve_reference(p, tol, seed);
  if (sol.status != cbal::OracleStatus::Optimal)
    throw cbal::SolverError(
        "compare: reference reports the instance infeasible (violation " +
        fmt(sol.violation) + ")");
  cbal::Vec candidate;
  if (!solution_text.empty()) {
    std::istringstream in(solution_text);
    std::vector<double> vals;
    double v = 0.0;
    while (in >> v) vals.push_back(v);
    if (static_cast<int>(vals.size()) != p.n)
      throw cbal::SolverError("compare: --solution needs exactly " +
                              std::to_string(p.n) + " values");
    candidate = Eigen::Map<const cbal::Vec>(vals.data(), p.n);
  } else {
    const cbal::SolverConfig cfg = build_config(fl);
    const cbal::SolveResult res =
        cbal::run_solver(p, cfg, fl.N, fl.M, parse_strategy(fl.strategy));
    std::cout << "solver status: " << cbal::status_name(res.status) << " in "
              << res.iterations << " iterations\n";
    candidate = res.z;
  }
  const cbal::GapReport rep = cbal::compare(candidate, sol, p);
  std::cout << "oracle f_star: " << fmt(sol.f_star) << "\n";
  std::cout << "oracle z_star: " << vec_line(sol.z_star) << "\n";
  std::cout << "candidate: " << vec_line(candidate) << "\n";
  std::cout << "relative objective gap: " << fmt(rep.objective_gap_rel)
            << "\n";
  std::cout << "max violation: " << fmt(rep.max_violation) << "\n";
  std::cout << "max coordinate distance: " << fmt(rep.max_coord_distance)
            << "\n";
  std::cout << "matching coordinates (within " << fmt(rep.match_tol)
            << "): " << rep.matching_coordinates << " of " << p.n << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"consensus-block augmented Lagrangian solver"};
  app.require_subcommand(1);

  std::string v_problem;
  auto* v_cmd = app.add_subcommand("validate", "check a problem file");
  v_cmd->add_option("problem", v_problem, "problem file")->required();

  std::string pi_problem, pi_strategy = "round-robin";
  int pi_N = 2, pi_M = 2;
  auto* pi_cmd =
      app.add_subcommand("partition-info", "show the consensus partition");
  pi_cmd->add_option("problem", pi_problem, "problem file")->required();
  pi_cmd->add_option("-N,--blocks", pi_N, "number of consensus blocks");
  pi_cmd->add_option("-M,--subvectors", pi_M, "subvectors per block");
  pi_cmd->add_option("--strategy", pi_strategy,
                     "row assignment: round-robin or contiguous");

  SolveFlags s_fl;
  auto* s_cmd = app.add_subcommand("solve", "run the distributed solver");
  s_cmd->add_option("problem", s_fl.problem, "problem file")->required();
  s_cmd->add_option("-N,--blocks", s_fl.N, "number of consensus blocks");
  s_cmd->add_option("-M,--subvectors", s_fl.M, "subvectors per block");
  s_cmd->add_option("--strategy", s_fl.strategy,
                    "row assignment: round-robin or contiguous");
  s_cmd->add_option("--config", s_fl.config_path, "key-value config file");
  s_cmd->add_option("--trace", s_fl.trace_path,
                    "write the iteration trace to this file");
  s_cmd->add_option("--tol", s_fl.tol, "stopping tolerance");
  s_cmd->add_option("--max-iter", s_fl.max_iter, "iteration cap");
  s_cmd->add_option("--mode", s_fl.mode, "seq or par");
  s_cmd->add_flag("--no-scale", s_fl.no_scale, "skip row scaling");
  s_cmd->add_option("--target-range", s_fl.target_range,
                    "scaled row range target");

  std::string o_problem;
  double o_tol = 1e-6;
  unsigned long o_seed = 12345;
  auto* o_cmd = app.add_subcommand("oracle", "run the reference solver");
  o_cmd->add_option("problem", o_problem, "problem file")->required();
  o_cmd->add_option("--tol", o_tol, "feasibility tolerance");
  o_cmd->add_option("--seed", o_seed, "random start seed");

  SolveFlags c_fl;
  std::string c_solution;
  double c_tol = 1e-6;
  unsigned long c_seed = 12345;
  auto* c_cmd =
      app.add_subcommand("compare", "gap report between solver and reference");
  c_cmd->add_option("problem", c_fl.problem, "problem file")->required();
  c_cmd->add_option("--solution", c_solution,
                    "candidate point (space-separated, quoted); when absent "
                    "the solver runs with the flags below");
  c_cmd->add_option("-N,--blocks", c_fl.N, "number of consensus blocks");
  c_cmd->add_option("-M,--subvectors", c_fl.M, "subvectors per block");
  c_cmd->add_option("--strategy", c_fl.strategy,
                    "row assignment: round-robin or contiguous");
  c_cmd->add_option("--config", c_fl.config_path, "key-value config file");
  c_cmd->add_option("--tol", c_tol, "oracle feasibility tolerance");
  c_cmd->add_option("--seed", c_seed, "oracle random start seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*v_cmd) return run_validate(v_problem);
    if (*pi_cmd) return run_partition_info(pi_problem, pi_N, pi_M, pi_strategy);
    if (*s_cmd) return run_solve(s_fl);
    if (*o_cmd) return run_oracle(o_problem, o_tol, o_seed);
    if (*c_cmd) return run_compare(c_fl, c_solution, c_tol, c_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

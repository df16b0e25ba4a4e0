#pragma once
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cbal/config.hpp"
#include "cbal/consensus.hpp"
#include "cbal/diagnostics.hpp"
#include "cbal/dual.hpp"
#include "cbal/partition.hpp"
#include "cbal/problem.hpp"
#include "cbal/scaling.hpp"
#include "cbal/state.hpp"
#include "cbal/subproblem.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Deterministic simulated N x M process grid. One iteration runs the
// block sweeps (sequentially or one thread per block), the Z ring, the
// slack and dual updates, the certificate assembly, and the parameter
// schedules. All cross-block reductions happen on the coordinating
// thread in block order, so both execution modes produce identical
// numbers.
// =======================================================================

struct ProcessTopology {
  int N = 1, M = 1;
  std::vector<int> ring_order;  // permutation of 0..N-1
  ExecMode mode = ExecMode::Sequential;
};

struct IterationTrace {
  long k = 0;
  double L = 0.0;                        // merit after this iteration
  std::array<double, FAM_COUNT> r{};     // residual inf-norms per family
  double D = 0.0, P = 0.0, U_sum = 0.0, J = 0.0;
  double D_alpha = 0.0;    // step-form dual decrease, for cross-checks
  double descent_gap = 0.0;
  int sigma1_active = 0;   // subblocks that ran with a positive L1 weight
  double slope = 0.0;      // running consensus-residual rate estimate
  std::vector<std::size_t> hop_bytes;  // ring payloads this iteration
  double wall_seconds = 0.0;
  bool curvature_bound_ok = true;
  bool cap_engaged = false;  // some schedule was clipped at its cap

  double max_residual() const {
    double m = 0.0;
    for (double v : r) m = std::max(m, v);
    return m;
  }
};

enum class SolveStatus { Converged, IterationCap, InnerFailure };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::IterationCap: return "IterationCap";
    default: return "InnerFailure";
  }
}

struct SolveResult {
  SolveStatus status = SolveStatus::IterationCap;
  std::string message;
  Vec z;
  double objective = 0.0;  // original-units cost at z
  long iterations = 0;
  double final_residual = 0.0;
  double cumulative_J = 0.0;
  long descent_gap_warnings = 0;
  long inner_cap_hits = 0;
  std::vector<IterationTrace> trace;
};

// Inner-solver failures carry their grid coordinates so a failing run can
// be triaged from the message; the outer loop converts them to a status
// instead of crashing.
struct InnerSolveError : SolverError {
  using SolverError::SolverError;
};

class Engine {
 public:
  Engine(const Problem& input, int N, int M, Strategy strategy,
         SolverConfig config)
      : original(input), cfg(std::move(config)) {
    const ValidationReport rep = validate(original);
    if (!rep.ok) throw SolverError("problem: " + rep.issues.front());
    cfg.finalize();
    validate_config(cfg);
    if (cfg.scale) {
      auto scaled = scale_problem(original, cfg.target_range);
      problem = std::move(scaled.first);
      scaling = std::move(scaled.second);
    } else {
      problem = original;
      scaling.F_scales.assign(original.F.size(), 1.0);
      scaling.G_scales.assign(original.G.rows.size(), 1.0);
      scaling.H_scales.assign(original.H.rows.size(), 1.0);
    }
    part = build_partition(problem, N, M, strategy);
    views = make_block_views(problem, part);
    bounds =
        slack_upper_bounds(problem, part, cfg.eps_slack * cfg.target_range);
    rho.assign(part.N, cfg.rho);
    fgamma.resize(part.N);
    for (int i = 0; i < part.N; ++i)
      fgamma[i] = std::isnan(cfg.f_curvature_bound)
                      ? block_curvature_constant(views[i], problem.u)
                      : cfg.f_curvature_bound;
    topo.N = part.N;
    topo.M = part.M;
    topo.ring_order.resize(part.N);
    std::iota(topo.ring_order.begin(), topo.ring_order.end(), 0);
    topo.mode = cfg.mode;
    auto init = init_state(problem, part, views, bounds, cfg);
    state = std::move(init.first);
    sched = std::move(init.second);
    emit_initial_row();
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // One full iteration of the pipeline; appends and returns the trace row.
  IterationTrace step() {
    const auto t0 = std::chrono::steady_clock::now();
    TransitionData td;
    td.Zk = state.Z;
    td.tau = sched.tau;
    td.gamma = sched.gamma;
    td.L_k = lagrangian_value(problem, views, state.X, state.Z, state.Y,
                              state.mu, rho);
    td.blocks.resize(part.N);

    // Per-subvector displacement norms recorded for the schedules.
    std::vector<std::vector<double>> dx_sq(part.N,
                                           std::vector<double>(part.M, 0.0));
    std::vector<std::vector<double>> dx_l1 = dx_sq;
    std::vector<Vec> X_new(part.N);
    long cap_hits = 0;

    auto sweep_block = [&](int i) {
      BlockTransition& bt = td.blocks[i];
      bt.Xk = state.X[i];
      bt.Yk = state.Y[i];
      bt.muk = state.mu[i];
      bt.F_mid.resize(part.M);
      bt.F_new.resize(part.M);
      bt.sigma1.resize(part.M);
      bt.sigma2.resize(part.M);
      bt.U.resize(part.M);
      Vec composite = state.X[i];
      long local_cap_hits = 0;
      for (int l = 0; l < part.M; ++l) {
        const int lo = part.range_lo[l], m = part.subvector_size(l);
        bt.F_mid[l] = views[i].F_values(composite);
        bt.sigma1[l] = sched.sigma1[i][l];
        bt.sigma2[l] = sched.sigma2[i][l];
        SubblockContext ctx = make_subblock_context(
            views[i], lo, part.range_hi[l], composite, state.Z, state.Y[i],
            state.mu[i], rho[i], bt.sigma1[l], bt.sigma2[l]);
        SubblockResult res;
        try {
          res = solve_subblock(ctx, cfg.inner_tol, cfg.inner_cap);
        } catch (const SolverError& e) {
          throw InnerSolveError("block " + std::to_string(i) +
                                " subvector " + std::to_string(l) + ": " +
                                e.what());
        }
        if (res.hit_cap) ++local_cap_hits;
        const Vec dx = res.x - composite.segment(lo, m);
        composite.segment(lo, m) = res.x;
        bt.F_new[l] = views[i].F_values(composite);
        bt.U[l] = compute_U(views[i], lo, dx, bt.muk[FAM_F], bt.Yk[FAM_F],
                            rho[i], bt.F_new[l]);
        dx_sq[i][l] = dx.squaredNorm();
        dx_l1[i][l] = dx.cwiseAbs().sum();
      }
      X_new[i] = std::move(composite);
      return local_cap_hits;
    };

    if (topo.mode == ExecMode::ParallelBlocks && part.N > 1) {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> errors(part.N);
      std::vector<long> hits(part.N, 0);
      workers.reserve(part.N);
      for (int i = 0; i < part.N; ++i)
        workers.emplace_back([&, i] {
          try {
            hits[i] = sweep_block(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      for (auto& w : workers) w.join();
      for (int i = 0; i < part.N; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
      for (long h : hits) cap_hits += h;
    } else {
      for (int i = 0; i < part.N; ++i) cap_hits += sweep_block(i);
    }
    inner_cap_hits += cap_hits;

    IterationTrace row;
    row.curvature_bound_ok = true;
    for (int i = 0; i < part.N; ++i)
      for (int l = 0; l < part.M; ++l) {
        const BlockTransition& bt = td.blocks[i];
        if (!curvature_bound_holds(bt.U[l], fgamma[i], bt.muk[FAM_F],
                                   bt.Yk[FAM_F], bt.F_new[l], rho[i],
                                   dx_l1[i][l]))
          row.curvature_bound_ok = false;
      }

    const RingResult ring =
        update_z_ring(X_new, state.Y, state.mu, rho, sched.tau, state.Z,
                      problem.u, topo.ring_order);
    td.Zk1 = ring.Z;
    row.hop_bytes = ring.hop_payload_bytes;

    double D_alpha = 0.0;
    for (int i = 0; i < part.N; ++i) {
      BlockTransition& bt = td.blocks[i];
      for (int fam = 0; fam < FAM_COUNT; ++fam) {
        const Vec r0 = slack_free_residual(views[i],
                                           static_cast<Family>(fam),
                                           X_new[i], ring.Z);
        bt.Yk1[fam] = update_slack(bt.Yk[fam], r0, bt.muk[fam],
                                   sched.gamma[i][fam], rho[i],
                                   bounds.of(i, static_cast<Family>(fam)));
      }
      bt.Xk1 = X_new[i];
      bt.r_new = residuals(views[i], bt.Xk1, ring.Z, bt.Yk1);
      for (int fam = 0; fam < FAM_COUNT; ++fam) {
        const DualStepResult ds =
            dual_step(bt.muk[fam], bt.r_new[fam], cfg.alpha[fam],
                      state.mu_upper[i][fam]);
        bt.muk1[fam] = ds.mu;
        D_alpha += dual_decrease_term(ds, bt.r_new[fam]);
      }
    }

    // Commit the new iterate.
    state.Z = ring.Z;
    for (int i = 0; i < part.N; ++i) {
      state.X[i] = td.blocks[i].Xk1;
      state.Y[i] = td.blocks[i].Yk1;
      state.mu[i] = td.blocks[i].muk1;
    }
    state.k += 1;
    check_state(problem, part, bounds, state);

    td.L_k1 = lagrangian_value(problem, views, state.X, state.Z, state.Y,
                               state.mu, rho);
    const CertificateRecord rec = certificate(views, part, td, rho);
    if (rec.descent_gap < -1e-7) ++gap_warnings;
    cumulative_J += rec.J_k;

    // Schedules for the next iteration.
    const double cap = cfg.schedule_cap();
    const Vec dZ = td.Zk1 - td.Zk;
    bool cap_engaged = false;
    for (int i = 0; i < part.N; ++i) {
      for (int l = 0; l < part.M; ++l) {
        sched.sigma1[i][l] =
            sigma1_schedule(td.blocks[i].U[l], dx_l1[i][l], cfg.big_gamma);
        sched.sigma2[i][l] = next_sigma2(td.blocks[i].sigma2[l], rho[i],
                                         cfg.margin, cap, dx_sq[i][l]);
        cap_engaged = cap_engaged || sched.sigma2[i][l] == cap;
        sched.U_prev[i][l] = td.blocks[i].U[l];
      }
      for (int fam = 0; fam < FAM_COUNT; ++fam) {
        const double dy_sq =
            (td.blocks[i].Yk1[fam] - td.blocks[i].Yk[fam]).squaredNorm();
        sched.gamma[i][fam] = next_gamma(td.gamma[i][fam], rho[i],
                                         cfg.margin, cap, dy_sq);
        cap_engaged = cap_engaged || sched.gamma[i][fam] == cap;
      }
    }
    sched.tau = next_tau(td.tau, rho, cfg.margin, cap, dZ.squaredNorm());
    cap_engaged = cap_engaged || sched.tau == cap;

    row.k = state.k;
    row.L = td.L_k1;
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      double m = 0.0;
      for (int i = 0; i < part.N; ++i)
        m = std::max(m, linf(td.blocks[i].r_new[fam]));
      row.r[fam] = m;
    }
    row.D = rec.D_k;
    row.P = rec.P_k;
    row.U_sum = rec.U_sum;
    row.J = rec.J_k;
    row.D_alpha = D_alpha;
    row.descent_gap = rec.descent_gap;
    for (int i = 0; i < part.N; ++i)
      for (int l = 0; l < part.M; ++l)
        if (td.blocks[i].sigma1[l] > 0.0) ++row.sigma1_active;
    consensus_history.push_back(std::max(row.r[FAM_PX], row.r[FAM_NX]));
    row.slope = slope_so_far(consensus_history);
    row.cap_engaged = cap_engaged;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    trace.push_back(row);
    return row;
  }

  SolveResult run() {
    SolveResult out;
    try {
      while (state.k < cfg.max_iter) {
        const IterationTrace row = step();
        if (row.max_residual() <= cfg.tol) {
          out.status = SolveStatus::Converged;
          out.message = "converged: max extended residual " +
                        std::to_string(row.max_residual());
          break;
        }
      }
      if (out.status != SolveStatus::Converged) {
        out.status = SolveStatus::IterationCap;
        out.message =
            "iteration cap reached; max extended residual " +
            std::to_string(trace.empty() ? 0.0
                                         : trace.back().max_residual()) +
            " is still above tol " + std::to_string(cfg.tol) +
            " (the instance may be infeasible; residuals stall above a "
            "positive floor when no consensus point satisfies all rows)";
      }
    } catch (const InnerSolveError& e) {
      out.status = SolveStatus::InnerFailure;
      out.message = std::string("inner solver failure at ") + e.what();
    }
    out.z = state.Z;
    out.objective = original.f.dot(state.Z);
    out.iterations = state.k;
    out.final_residual = trace.empty() ? 0.0 : trace.back().max_residual();
    out.cumulative_J = cumulative_J;
    out.descent_gap_warnings = gap_warnings;
    out.inner_cap_hits = inner_cap_hits;
    out.trace = trace;
    return out;
  }

  Problem original, problem;  // input and the scaled system iterated on
  ScalingRecord scaling;
  SolverConfig cfg;
  ConsensusPartition part;
  std::vector<BlockView> views;
  SlackBounds bounds;
  ProcessTopology topo;
  std::vector<double> rho;     // per-block penalty
  std::vector<double> fgamma;  // per-block curvature constant
  GlobalState state;
  ScheduleState sched;
  std::vector<IterationTrace> trace;
  std::vector<double> consensus_history;
  double cumulative_J = 0.0;
  long gap_warnings = 0;
  long inner_cap_hits = 0;

 private:
  void emit_initial_row() {
    IterationTrace row;
    row.k = 0;
    row.L = lagrangian_value(problem, views, state.X, state.Z, state.Y,
                             state.mu, rho);
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      double m = 0.0;
      for (int i = 0; i < part.N; ++i) {
        const FamilyVecs r =
            residuals(views[i], state.X[i], state.Z, state.Y[i]);
        m = std::max(m, linf(r[fam]));
      }
      row.r[fam] = m;
    }
    row.slope = std::numeric_limits<double>::quiet_NaN();
    trace.push_back(row);
  }
};

// Convenience wrapper used by the command-line driver and tests.
inline SolveResult run_solver(const Problem& p, SolverConfig cfg, int N,
                              int M,
                              Strategy strategy = Strategy::RoundRobin) {
  Engine engine(p, N, M, strategy, std::move(cfg));
  return engine.run();
}

}  // namespace cbal

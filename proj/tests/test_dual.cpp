#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "helpers.hpp"
#include "cbal/diagnostics.hpp"
#include "cbal/dual.hpp"

using namespace cbal;
using cbal_test::Instance;
using cbal_test::Rng;

TEST_CASE("bounded dual step") {
  Vec mu(3), upper(3);
  mu << 0.0, 1.0, 0.5;
  upper << 2.0, 2.0, 2.0;

  SUBCASE("zero residual leaves everything accepted and unchanged") {
    const DualStepResult res = dual_step(mu, Vec::Zero(3), 0.7, upper);
    CHECK(linf(Vec(res.mu - mu)) == 0.0);
    for (int j = 0; j < 3; ++j) CHECK(res.alpha_eff[j] == 0.7);
  }

  SUBCASE("candidates leaving the band are rejected") {
    Vec r(3);
    r << 1.0, -1.0, -4.0;  // mu0: 0 - a < 0; mu1: 1.5 ok; mu2: above upper
    const DualStepResult res = dual_step(mu, r, 0.5, upper);
    CHECK(res.mu[0] == 0.0);
    CHECK(res.alpha_eff[0] == 0.0);
    CHECK(res.mu[1] == doctest::Approx(1.5));
    CHECK(res.alpha_eff[1] == 0.5);
    CHECK(res.mu[2] == 0.5);
    CHECK(res.alpha_eff[2] == 0.0);
  }

  SUBCASE("output always stays inside the band") {
    Rng rng(51);
    for (int t = 0; t < 300; ++t) {
      const int m = cbal_test::uniform_int(rng, 1, 5);
      Vec up = cbal_test::random_vec(rng, m, 0.5, 3.0);
      Vec m0(m);
      for (int j = 0; j < m; ++j)
        m0[j] = cbal_test::uniform(rng, 0.0, up[j]);
      const Vec r = cbal_test::random_vec(rng, m, -3.0, 3.0);
      const double a = cbal_test::uniform(rng, 1e-3, 2.0);
      const DualStepResult res = dual_step(m0, r, a, up);
      for (int j = 0; j < m; ++j) {
        CHECK(res.mu[j] >= 0.0);
        CHECK(res.mu[j] <= up[j]);
      }
      // definition form of the decrease equals the alpha form
      const double def = (m0 - res.mu).dot(r);
      CHECK(def == doctest::Approx(dual_decrease_term(res, r))
                       .epsilon(1e-12));
    }
  }

  SUBCASE("alpha must be positive") {
    CHECK_THROWS_AS(dual_step(mu, Vec::Zero(3), 0.0, upper), SolverError);
  }
}

TEST_CASE("curvature certificate U") {
  Rng rng(53);

  SUBCASE("zero displacement and constraint-free blocks give zero") {
    Instance inst(rng, 4, 1, 2, 2, 0, 0);
    const BlockView& bv = inst.views[0];
    const int lo = inst.part.range_lo[0];
    const int m = inst.part.subvector_size(0);
    const Vec Fmu = cbal_test::random_vec(rng, bv.nF(), 0.0, 1.0);
    const Vec FY = cbal_test::random_vec(rng, bv.nF(), 0.0, 1.0);
    const Vec F_new = cbal_test::random_vec(rng, bv.nF(), -1.0, 1.0);
    CHECK(compute_U(bv, lo, Vec::Zero(m), Fmu, FY, 1.0, F_new) == 0.0);

    Instance bare(rng, 4, 1, 2, 0, 1, 1);
    CHECK(compute_U(bare.views[0], lo, Vec::Ones(m), Vec(), Vec(), 1.0,
                    Vec()) == 0.0);
  }

  SUBCASE("quadratic form equals the difference form") {
    for (int t = 0; t < 50; ++t) {
      const int n = cbal_test::uniform_int(rng, 2, 6);
      const int M = cbal_test::uniform_int(rng, 1, std::min(3, n));
      Instance inst(rng, n, 1, M, 2, 0, 0);
      const BlockView& bv = inst.views[0];
      const int l = cbal_test::uniform_int(rng, 0, M - 1);
      const int lo = inst.part.range_lo[l];
      const int m = inst.part.subvector_size(l);

      const Vec point_old = inst.X[0];
      Vec dx(m);
      for (int j = 0; j < m; ++j)
        dx[j] = cbal_test::uniform(rng, -1.0, 1.0) * inst.p.u[lo + j] -
                point_old[lo + j];
      Vec point_new = point_old;
      point_new.segment(lo, m) += dx;

      Vec F_new(bv.nF()), F_mid(bv.nF());
      Mat grads(bv.nF(), m);
      for (int j = 0; j < bv.nF(); ++j) {
        F_new[j] = bv.Frow(j).value(point_new);
        F_mid[j] = bv.Frow(j).value(point_old);
        grads.row(j) =
            bv.Frow(j).gradient(point_new).segment(lo, m).transpose();
      }
      const Vec Fmu = cbal_test::random_vec(rng, bv.nF(), 0.0, 1.0);
      const Vec FY = cbal_test::random_vec(rng, bv.nF(), 0.0, 2.0);
      const double rho = cbal_test::uniform(rng, 0.3, 2.0);

      const double direct = compute_U(bv, lo, dx, Fmu, FY, rho, F_new);
      const double diff =
          compute_U_difference(Fmu, FY, rho, F_new, F_mid, grads, dx);
      CHECK(direct == doctest::Approx(diff).epsilon(1e-10));
    }
  }

  SUBCASE("curvature constant bounds U for box-sized displacements") {
    for (int t = 0; t < 50; ++t) {
      const int n = cbal_test::uniform_int(rng, 2, 5);
      Instance inst(rng, n, 1, 1, 3, 0, 0);
      const BlockView& bv = inst.views[0];
      const double fgamma = block_curvature_constant(bv, inst.p.u);
      Vec dx(n);
      for (int j = 0; j < n; ++j)
        dx[j] = cbal_test::uniform(rng, -2.0, 2.0) * inst.p.u[j];
      const Vec Fmu = cbal_test::random_vec(rng, bv.nF(), 0.0, 1.0);
      const Vec FY = cbal_test::random_vec(rng, bv.nF(), 0.0, 2.0);
      const Vec F_new(Vec::Zero(bv.nF()));
      const double rho = cbal_test::uniform(rng, 0.3, 2.0);
      const double U = compute_U(bv, 0, dx, Fmu, FY, rho, F_new);
      CHECK(curvature_bound_holds(U, fgamma, Fmu, FY, F_new, rho,
                                  dx.cwiseAbs().sum()));
    }
  }
}

TEST_CASE("one-step-delayed L1 weight") {
  CHECK(sigma1_schedule(0.3, 0.5, 1.0) == 0.0);
  CHECK(sigma1_schedule(-0.2, 0.5, 1.0) == doctest::Approx(0.4));
  CHECK(sigma1_schedule(-0.2, 0.0, 1.0) == 0.0);
  CHECK(sigma1_schedule(0.0, 1.0, 3.0) == 0.0);
}

TEST_CASE("proximal parameter recurrences") {
  const double cap = 1e8;

  SUBCASE("pinned arithmetic") {
    CHECK(next_sigma2(4.0, 1.0, 2.0, cap, 0.25) == doctest::Approx(18.0));
  }

  SUBCASE("zero displacement falls to the floor") {
    CHECK(next_sigma2(7.0, 1.5, 4.0, cap, 0.0) ==
          doctest::Approx(4.0 * 4.0 * 1.5 * 1.5));
    CHECK(next_gamma(7.0, 1.5, 4.0, cap, 0.0) ==
          doctest::Approx(4.0 * 1.5 * 1.5));
    CHECK(next_tau(7.0, {1.0, 2.0}, 4.0, cap, 0.0) ==
          doctest::Approx(4.0 * 4.0 * 4.0));
  }

  SUBCASE("tau mixes the worst-block floor with the averaged pull") {
    const std::vector<double> rho = {1.0, 1.0};
    const double prev = 2.0;
    const double dz_sq = 0.5;
    const double pull = (prev + 2.0) + (prev + 2.0);
    const double want = 3.0 * std::max(4.0, pull * pull / 2.0 * dz_sq);
    CHECK(next_tau(prev, rho, 3.0, cap, dz_sq) == doctest::Approx(want));
  }

  SUBCASE("the cap clips runaway estimates") {
    CHECK(next_sigma2(1e6, 1.0, 4.0, cap, 1.0) == cap);
    CHECK(next_gamma(1e6, 1.0, 4.0, cap, 1.0) == cap);
    CHECK(next_tau(1e6, {1.0}, 4.0, cap, 1.0) == cap);
  }
}

TEST_CASE("config defaults, floors, and the step-size headroom rule") {
  SolverConfig c;
  c.finalize();
  CHECK(c.lambda[FAM_F] == doctest::Approx(0.5 * c.rho));
  CHECK(c.lambda[FAM_PX] == doctest::Approx(c.rho));
  CHECK(c.alpha[FAM_PX] ==
        doctest::Approx(kConsensusStepScale * (c.lambda[FAM_PX] + 0.5 * c.rho) /
                        c.margin));
  CHECK(c.alpha[FAM_F] ==
        doctest::Approx(kConstraintStepScale * (c.lambda[FAM_F] + 0.5 * c.rho) /
                        c.margin));
  CHECK(c.sigma2_0 == doctest::Approx(c.schedule_floor()));
  CHECK(c.schedule_floor() == doctest::Approx(c.margin * 4.0 * c.rho * c.rho));
  CHECK_NOTHROW(validate_config(c));

  SUBCASE("headroom violations are rejected") {
    SolverConfig bad;
    bad.finalize();
    bad.alpha[FAM_G] = (bad.lambda[FAM_G] + 0.5 * bad.rho) / bad.margin * 1.01;
    try {
      validate_config(bad);
      FAIL("expected a config error");
    } catch (const SolverError& e) {
      CHECK(std::string(e.what()).find("alpha_G") != std::string::npos);
    }
  }

  SUBCASE("basic range checks") {
    SolverConfig bad;
    bad.margin = 1.0;
    bad.finalize();
    CHECK_THROWS_AS(validate_config(bad), SolverError);
    SolverConfig bad2;
    bad2.lambda_z = 1.0;
    bad2.finalize();
    CHECK_THROWS_AS(validate_config(bad2), SolverError);
    SolverConfig bad3;
    bad3.rho = 0.0;
    bad3.finalize();
    CHECK_THROWS_AS(validate_config(bad3), SolverError);
  }
}

TEST_CASE("initialization recipe") {
  Rng rng(57);
  Problem p = cbal_test::random_problem(rng, 5, 1, 2, 1);
  p.f[2] = 0.0;  // exercise the sign(0) convention
  const ConsensusPartition part = build_partition(p, 2, 2,
                                                  Strategy::RoundRobin);
  const std::vector<BlockView> views = make_block_views(p, part);
  const SlackBounds bounds = slack_upper_bounds(p, part, 0.1);
  SolverConfig c;
  c.finalize();
  validate_config(c);
  auto [state, sched] = init_state(p, part, views, bounds, c);

  SUBCASE("interior start with matched duals") {
    for (int j = 0; j < p.n; ++j) {
      const double sg = p.f[j] < 0.0 ? -1.0 : 1.0;
      CHECK(state.Z[j] == doctest::Approx(0.9 * sg * p.u[j]));
    }
    CHECK(state.Z[2] == doctest::Approx(0.9 * p.u[2]));  // sign(0) is +1
    for (int i = 0; i < part.N; ++i) {
      CHECK(linf(Vec(state.X[i] - state.Z)) == 0.0);
      for (int fam = 0; fam < FAM_COUNT; ++fam)
        CHECK(linf(Vec(state.Y[i][fam] -
                       bounds.of(i, static_cast<Family>(fam)))) == 0.0);
      // consensus residual is the slack itself, so mu0 = lambda Y0
      CHECK(linf(Vec(state.mu[i][FAM_PX] -
                     c.lambda[FAM_PX] * state.Y[i][FAM_PX])) <= 1e-15);
    }
    CHECK(state.k == 0);
    check_state(p, part, bounds, state);
  }

  SUBCASE("schedules start at their configured floors") {
    CHECK(sched.tau == doctest::Approx(c.schedule_floor()));
    for (int i = 0; i < part.N; ++i)
      for (int l = 0; l < part.M; ++l) {
        CHECK(sched.sigma1[i][l] == 0.0);
        CHECK(sched.sigma2[i][l] == doctest::Approx(c.schedule_floor()));
      }
  }

  SUBCASE("closed-form initial merit equals the generic evaluator") {
    const std::vector<double> rho(part.N, c.rho);
    const double closed = initial_lagrangian(p, views, state, c);
    const double generic =
        lagrangian_value(p, views, state.X, state.Z, state.Y, state.mu, rho);
    CHECK(closed ==
          doctest::Approx(generic).epsilon(1e-12));
  }

  SUBCASE("too-small explicit dual caps are rejected with guidance") {
    SolverConfig tight;
    tight.dual_upper[FAM_F] = 1e-12;
    tight.finalize();
    validate_config(tight);
    try {
      init_state(p, part, views, bounds, tight);
      FAIL("expected an init error");
    } catch (const SolverError& e) {
      CHECK(std::string(e.what()).find("raise the bound") !=
            std::string::npos);
    }
  }
}

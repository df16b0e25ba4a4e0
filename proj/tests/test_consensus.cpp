#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

using namespace cbal;
using cbal_test::Instance;
using cbal_test::Rng;

namespace {

// Zeroed consensus slack/dual families for n variables, N blocks.
std::vector<FamilyVecs> zero_families(int N, int n) {
  std::vector<FamilyVecs> fams(N);
  for (auto& f : fams)
    for (int fam = 0; fam < FAM_COUNT; ++fam)
      f[fam] = fam <= FAM_NX ? Vec::Zero(n) : Vec();
  return fams;
}

}  // namespace

TEST_CASE("single block with vanishing tau returns the clamped X") {
  const int n = 3;
  std::vector<Vec> X = {Vec(n)};
  X[0] << 0.7, -1.4, 0.2;
  auto Y = zero_families(1, n);
  auto mu = zero_families(1, n);
  const Vec u = Vec::Constant(n, 1.0);
  const RingResult rr = update_z_ring(X, Y, mu, {1.0}, 1e-14, Vec::Zero(n), u);
  CHECK(rr.Z[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(rr.Z[1] == doctest::Approx(-1.0));  // clamped
  CHECK(rr.Z[2] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rr.hop_payload_bytes.empty());  // no hand-offs for one block
}

TEST_CASE("equal block values follow the closed-form weighted average") {
  const int n = 2;
  const int N = 3;
  Vec xstar(n);
  xstar << 0.4, -0.3;
  std::vector<Vec> X(N, xstar);
  auto Y = zero_families(N, n);
  auto mu = zero_families(N, n);
  const std::vector<double> rho = {1.0, 2.0, 0.5};
  const double tau = 0.7;
  Vec Zk(n);
  Zk << -0.2, 0.1;
  const Vec u = Vec::Constant(n, 1.0);
  const RingResult rr = update_z_ring(X, Y, mu, rho, tau, Zk, u);
  const double sum_rho = 3.5;
  const double wsum = N * tau + 2.0 * sum_rho;
  for (int j = 0; j < n; ++j) {
    const double want = (2.0 * sum_rho * xstar[j] + N * tau * Zk[j]) / wsum;
    CHECK(rr.Z[j] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(rr.weight_sum == doctest::Approx(wsum));
  REQUIRE(rr.hop_payload_bytes.size() == static_cast<size_t>(N - 1));
  CHECK(rr.hop_payload_bytes[0] == ring_hop_bytes(n));
}

TEST_CASE("ring equals the direct reference on random data") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    const int n = cbal_test::uniform_int(rng, 1, 9);
    const int N = cbal_test::uniform_int(rng, 1, 6);
    std::vector<Vec> X;
    std::vector<FamilyVecs> Y = zero_families(N, n), mu = zero_families(N, n);
    std::vector<double> rho;
    for (int i = 0; i < N; ++i) {
      X.push_back(cbal_test::random_vec(rng, n, -1.0, 1.0));
      Y[i][FAM_PX] = cbal_test::random_vec(rng, n, 0.0, 2.0);
      Y[i][FAM_NX] = cbal_test::random_vec(rng, n, 0.0, 2.0);
      mu[i][FAM_PX] = cbal_test::random_vec(rng, n, 0.0, 1.0);
      mu[i][FAM_NX] = cbal_test::random_vec(rng, n, 0.0, 1.0);
      rho.push_back(cbal_test::uniform(rng, 0.3, 3.0));
    }
    const double tau = cbal_test::uniform(rng, 0.1, 5.0);
    const Vec Zk = cbal_test::random_vec(rng, n, -1.0, 1.0);
    const Vec u = cbal_test::random_vec(rng, n, 0.5, 1.5);
    const RingResult rr = update_z_ring(X, Y, mu, rho, tau, Zk, u);
    const Vec direct = direct_z_reference(X, Y, mu, rho, tau, Zk, u);
    CHECK(linf(Vec(rr.Z - direct)) <= 1e-12);

    // visiting order only reassociates floating-point sums
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const RingResult rp = update_z_ring(X, Y, mu, rho, tau, Zk, u, order);
    for (int j = 0; j < n; ++j)
      CHECK(rp.Z[j] ==
            doctest::Approx(rr.Z[j]).epsilon(1e-10));
  }
}

TEST_CASE("ring argument errors") {
  std::vector<Vec> empty;
  std::vector<FamilyVecs> fams;
  CHECK_THROWS_AS(
      update_z_ring(empty, fams, fams, {}, 1.0, Vec::Zero(1), Vec::Ones(1)),
      SolverError);
  auto Y = zero_families(1, 1);
  std::vector<Vec> X = {Vec::Zero(1)};
  CHECK_THROWS_AS(
      update_z_ring(X, Y, Y, {1.0}, 0.0, Vec::Zero(1), Vec::Ones(1)),
      SolverError);
}

TEST_CASE("slack update closed form") {
  SUBCASE("pinned scalar case") {
    Vec y(1), r0(1), mu(1), ub(1);
    y << 1.0;
    r0 << -0.5;
    mu << 0.25;
    ub << 10.0;
    const Vec got = update_slack(y, r0, mu, 1.0, 1.0, ub);
    CHECK(got[0] == doctest::Approx(0.625));
  }

  SUBCASE("zero extended residual and zero dual leave the slack alone") {
    Vec y(2), mu(2), ub(2);
    y << 0.8, 0.3;
    mu << 0.0, 0.0;
    ub << 2.0, 2.0;
    const Vec r0 = -y;  // extended residual r0 + y = 0
    const Vec got = update_slack(y, r0, mu, 1.7, 0.9, ub);
    CHECK(linf(Vec(got - y)) <= 1e-15);
  }

  SUBCASE("huge gamma freezes the slack") {
    Vec y(1), r0(1), mu(1), ub(1);
    y << 0.4;
    r0 << 0.9;
    mu << 0.3;
    ub << 3.0;
    const Vec got = update_slack(y, r0, mu, 1e12, 1.0, ub);
    CHECK(got[0] == doctest::Approx(0.4).epsilon(1e-9));
  }

  SUBCASE("projection onto the slack box") {
    Vec y(2), r0(2), mu(2), ub(2);
    y << 0.1, 1.9;
    r0 << 5.0, -9.0;
    mu << 0.0, 0.0;
    ub << 2.0, 2.0;
    const Vec got = update_slack(y, r0, mu, 1.0, 1.0, ub);
    CHECK(got[0] == doctest::Approx(0.0));  // candidate negative
    CHECK(got[1] == doctest::Approx(2.0));  // candidate above the bound
  }
}

TEST_CASE("slack update is the argmin of its objective") {
  Rng rng(43);
  for (int t = 0; t < 200; ++t) {
    const int m = cbal_test::uniform_int(rng, 1, 4);
    const Vec ub = cbal_test::random_vec(rng, m, 0.5, 3.0);
    Vec y(m);
    for (int j = 0; j < m; ++j) y[j] = cbal_test::uniform(rng, 0.0, ub[j]);
    const Vec r0 = cbal_test::random_vec(rng, m, -2.0, 2.0);
    const Vec mu = cbal_test::random_vec(rng, m, 0.0, 1.5);
    const double gamma = cbal_test::uniform(rng, 0.2, 5.0);
    const double rho = cbal_test::uniform(rng, 0.2, 5.0);
    const Vec got = update_slack(y, r0, mu, gamma, rho, ub);
    for (int j = 0; j < m; ++j) {
      CHECK(got[j] >= 0.0);
      CHECK(got[j] <= ub[j]);
    }
    const double new_val = slack_objective(got, y, r0, mu, gamma, rho);
    CHECK(new_val <= slack_objective(y, y, r0, mu, gamma, rho) + 1e-12);
    // grid probe around the returned point confirms a local (hence
    // global, the objective is a separable convex quadratic) argmin
    for (int j = 0; j < m; ++j) {
      for (double d : {-1e-4, 1e-4}) {
        Vec probe = got;
        probe[j] = std::clamp(probe[j] + d, 0.0, ub[j]);
        CHECK(slack_objective(probe, y, r0, mu, gamma, rho) >=
              new_val - 1e-12);
      }
    }
  }
}

TEST_CASE("slack-free residuals per family") {
  Rng rng(47);
  Instance inst(rng, 4, 2, 2, 1, 1, 1);
  const BlockView& bv = inst.views[0];
  const Vec& x = inst.X[0];
  const Vec& z = inst.Z;

  const Vec rpx = slack_free_residual(bv, FAM_PX, x, z);
  const Vec rnx = slack_free_residual(bv, FAM_NX, x, z);
  CHECK(linf(Vec(rpx - (x - z))) <= 1e-15);
  CHECK(linf(Vec(rnx - (z - x))) <= 1e-15);

  const Vec rf = slack_free_residual(bv, FAM_F, x, z);
  for (int j = 0; j < bv.nF(); ++j)
    CHECK(rf[j] == doctest::Approx(bv.Frow(j).value(x)));
  const Vec rph = slack_free_residual(bv, FAM_PH, x, z);
  const Vec rnh = slack_free_residual(bv, FAM_NH, x, z);
  for (int j = 0; j < bv.nH(); ++j) {
    CHECK(rph[j] == doctest::Approx(bv.Hrow(j).value(x)));
    CHECK(rnh[j] == doctest::Approx(-bv.Hrow(j).value(x)));
  }

  // extended residuals are the slack-free ones plus the slack
  const FamilyVecs r = residuals(bv, x, z, inst.Y[0]);
  CHECK(linf(Vec(r[FAM_PX] - (rpx + inst.Y[0][FAM_PX]))) <= 1e-15);
  CHECK(linf(Vec(r[FAM_F] - (rf + inst.Y[0][FAM_F]))) <= 1e-15);
}

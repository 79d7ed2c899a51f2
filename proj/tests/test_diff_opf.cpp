#include <random>

#include "doctest.h"
#include "otsforge/diff_opf.hpp"
#include "otsforge/error.hpp"
#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

namespace {

SwitchVector zr(std::initializer_list<double> v) {
  Vec z(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) z[i++] = x;
  return SwitchVector::relaxed(z);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("case2 forward at partial closure") {
  const Network net = testing::fixture_network("case2.m");
  const DispatchSolution s = forward(net, net.nominal_demand, zr({0.9}));
  CHECK(s.p_g[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.theta[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.theta[1] == doctest::Approx(-1.0 / 9.0).epsilon(1e-9));
  CHECK(s.objective == doctest::Approx(1000.0).epsilon(1e-9));

  const DispatchSolution closed = forward(net, net.nominal_demand, zr({1.0}));
  const DispatchSolution plain = solve_dcopf(net, net.nominal_demand, SwitchVector::all_closed(1));
  CHECK(closed.p_g == plain.p_g);
  CHECK(closed.theta == plain.theta);

  CHECK(code_of([&] { forward(net, net.nominal_demand, zr({0.5})); }) == ErrorCode::InfeasibleForward);
}

TEST_CASE("case2 gradient is zero: the single generator is pinned") {
  const Network net = testing::fixture_network("case2.m");
  const SwitchVector z = zr({0.9});
  const DispatchSolution s = forward(net, net.nominal_demand, z);
  const GradResult g = backward(net, net.nominal_demand, z, s, net.cost.gradient(s.p_g));
  CHECK(std::abs(g.dcost_dz[0]) < 1e-6);
  CHECK(g.solve_residual <= 1e-6);
  const GradCheck chk = gradient_check(net, net.nominal_demand, z);
  CHECK(std::abs(chk.numeric[0]) < 1e-4);
  CHECK(chk.max_rel_error < 1e-4);
}

TEST_CASE("case3b: gradient on the direct line matches finite differences") {
  const Network net = testing::fixture_network("case3b.m");
  const SwitchVector z = zr({1.0, 1.0, 1.0 - 1e-3});
  const GradCheck chk = gradient_check(net, net.nominal_demand, z);
  CHECK(chk.max_rel_error < 1e-4);
  // Scaling the direct line's susceptance and rating together keeps the
  // cross-triangle angle limit fixed, so a larger z_AC admits more cheap
  // import: the relaxed cost falls as z_AC grows (3800 - 2400 z_AC here).
  CHECK(chk.analytic[2] == doctest::Approx(-2400.0).epsilon(1e-6));
  CHECK(chk.numeric[2] == doctest::Approx(-2400.0).epsilon(1e-6));
}

TEST_CASE("zero upstream gives zero gradient; backward is linear in upstream") {
  const Network net = testing::random_feasible_network(7, {});
  const Vec d = 1.05 * net.nominal_demand;
  const SwitchVector z = SwitchVector::relaxed(Vec::Constant(net.n_line, 0.9));
  const DispatchSolution s = forward(net, d, z);
  CHECK(backward(net, d, z, s, Vec::Zero(net.n_gen)).dcost_dz.isZero());

  std::mt19937_64 rng(3);
  Vec u1(net.n_gen), u2(net.n_gen);
  for (int g = 0; g < net.n_gen; ++g) {
    u1[g] = testing::uniform(rng, -1, 1);
    u2[g] = testing::uniform(rng, -1, 1);
  }
  const Vec g1 = backward(net, d, z, s, u1).dcost_dz;
  const Vec g2 = backward(net, d, z, s, u2).dcost_dz;
  const Vec g12 = backward(net, d, z, s, 2.0 * u1 - 3.0 * u2).dcost_dz;
  CHECK((g12 - (2.0 * g1 - 3.0 * g2)).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + g12.cwiseAbs().maxCoeff()));
}

TEST_CASE("stale or mismatched solutions are rejected") {
  const Network net = testing::fixture_network("case3b.m");
  const SwitchVector z = zr({1.0, 1.0, 0.7});
  const DispatchSolution s = forward(net, net.nominal_demand, z);
  const Vec up = net.cost.gradient(s.p_g);
  CHECK(code_of([&] { backward(net, net.nominal_demand, zr({1.0, 1.0, 0.4}), s, up); }) == ErrorCode::StaleSolution);
  CHECK(code_of([&] { backward(net, 0.9 * net.nominal_demand, z, s, up); }) == ErrorCode::StaleSolution);
  DispatchSolution bad = s;
  bad.status = QpStatus::Infeasible;
  CHECK(code_of([&] { backward(net, net.nominal_demand, z, bad, up); }) == ErrorCode::StaleSolution);
  CHECK(code_of([&] { backward(net, net.nominal_demand, z, s, Vec::Ones(5)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("gradient fidelity on random networks") {
  testing::RandomNetworkSpec spec;
  spec.min_buses = 5;
  spec.max_buses = 10;
  spec.max_lines = 14;
  std::mt19937_64 rng(11);
  int checked = 0;
  for (std::uint64_t seed = 200; seed < 260 && checked < 20; ++seed) {
    const Network net = testing::random_feasible_network(seed, spec);
    Vec d = net.nominal_demand;
    for (int b = 0; b < net.n_bus; ++b) d[b] *= testing::uniform(rng, 1.0, 1.1);
    Vec z(net.n_line);
    for (int l = 0; l < net.n_line; ++l) z[l] = testing::uniform(rng, 0.6, 0.99);
    GradCheck chk;
    try {
      chk = gradient_check(net, d, SwitchVector::relaxed(z));
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::InfeasibleForward);
      continue;
    }
    if (chk.complementarity_margin <= 1e-5) continue;
    CAPTURE(seed);
    CHECK(chk.max_rel_error <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("angle bounds binding on buses joined by idle lines") {
  // Four angle limits are active together with the balance rows, more
  // constraints than variables.
  testing::RandomNetworkSpec spec;
  spec.min_buses = 5;
  spec.max_buses = 14;
  spec.max_lines = 20;
  const Network net = testing::random_feasible_network(715, spec);
  const GradcheckReport rep = run_gradcheck(net, 3, 715);
  REQUIRE(rep.trials.size() == 3);
  REQUIRE(rep.trials[1].scored);
  CHECK(rep.trials[1].check.max_rel_error <= 1e-5);
  CHECK(rep.pass());
}

TEST_CASE("adjoint equals the contracted forward-sensitivity Jacobian") {
  for (std::uint64_t seed : {300u, 301u, 302u, 303u}) {
    const Network net = testing::random_feasible_network(seed, {});
    const Vec d = net.nominal_demand;
    const SwitchVector z = SwitchVector::relaxed(Vec::Constant(net.n_line, 0.95));
    DispatchSolution s;
    try {
      s = forward(net, d, z);
    } catch (const Error&) {
      continue;
    }
    const Vec up = net.cost.gradient(s.p_g);
    const Mat dx = solution_jacobian(net, d, z, s);
    REQUIRE(dx.rows() == net.n_gen + net.n_bus);
    const Vec full = dx.topRows(net.n_gen).transpose() * up;
    const Vec adj = backward(net, d, z, s, up).dcost_dz;
    CAPTURE(seed);
    CHECK((full - adj).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + adj.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("kkt jacobian blocks") {
  const Network net = testing::fixture_network("case3b.m");
  const SwitchVector z = zr({1.0, 1.0, 0.7});
  const DispatchSolution s = forward(net, net.nominal_demand, z);
  const QpProblem p = build_dcopf(net, net.nominal_demand, z);
  Vec x(net.n_gen + net.n_bus);
  x << s.p_g, s.theta;
  const KktSystem k = KktSystem::assemble(p, x, s.lambda, s.mu);
  CHECK(k.size() == p.n() + p.m_eq() + p.m_ineq());
  CHECK(k.jacobian.topLeftCorner(p.n(), p.n()) == p.quad);
  CHECK(k.jacobian.block(p.n(), 0, p.m_eq(), p.n()) == p.eq_mat);
  const int i = 0;
  const int row = p.n() + p.m_eq() + i;
  CHECK(k.jacobian(row, row) == doctest::Approx((p.ineq_mat.row(i) * x)(0) - p.ineq_rhs[i]));
}

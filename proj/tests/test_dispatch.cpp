#include "doctest.h"
#include "otsforge/dispatch.hpp"
#include "otsforge/error.hpp"
#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

namespace {

Network two_gen_copper_plate() {
  Network net;
  net.n_bus = 1;
  net.n_gen = 2;
  net.n_line = 0;
  net.branch_incidence = Mat::Zero(0, 1);
  net.gen_incidence = Mat::Ones(1, 2);
  net.gen_bus = {0, 0};
  net.bus_ids = {1};
  net.susceptance = net.flow_max = net.flow_min = Vec::Zero(0);
  net.gen_max = Vec::Ones(2);
  net.gen_min = Vec::Zero(2);
  net.theta_max = Vec::Constant(1, 0.5);
  net.theta_min = Vec::Constant(1, -0.5);
  net.cost.c2 = Vec::Zero(2);
  net.cost.c1 = (Vec(2) << 10.0, 20.0).finished();
  net.cost.c0 = (Vec(2) << 3.0, 4.0).finished();
  net.nominal_demand = Vec::Constant(1, 1.5);
  return net;
}

}  // namespace

TEST_CASE("economic dispatch follows merit order") {
  const Network net = two_gen_copper_plate();
  const DispatchSolution s = solve_ed(net, Vec::Constant(1, 1.5));
  REQUIRE(s.optimal());
  CHECK(s.p_g[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.p_g[1] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(s.objective == doctest::Approx(20.0 + 7.0));  // 10 + 10 plus constant terms
}

TEST_CASE("economic dispatch at zero demand") {
  const Network net = two_gen_copper_plate();
  const DispatchSolution s = solve_ed(net, Vec::Zero(1));
  REQUIRE(s.optimal());
  CHECK(s.p_g.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(s.objective == doctest::Approx(7.0));
}

TEST_CASE("economic dispatch beyond capacity") {
  const Network net = two_gen_copper_plate();
  try {
    solve_ed(net, Vec::Constant(1, 2.5));
    FAIL("expected InfeasibleDemand");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleDemand);
  }
}

TEST_CASE("build_dcopf with all lines closed matches the plain builder") {
  const Network net = testing::fixture_network("case2.m");
  const QpProblem a = build_dcopf(net, net.nominal_demand, SwitchVector::all_closed(1));
  const QpProblem b = build_dcopf(net, net.nominal_demand, SwitchVector::relaxed(Vec::Ones(1)));
  CHECK(a.eq_mat == b.eq_mat);
  CHECK(a.ineq_mat == b.ineq_mat);
  CHECK(a.ineq_rhs == b.ineq_rhs);
  // Balance row of bus 2: -b (theta_2 - theta_1) on the angle columns.
  const DcopfLayout L = DcopfLayout::of(net);
  CHECK(a.eq_mat(L.balance_row(1), L.theta(1)) == doctest::Approx(-10.0));
  CHECK(a.eq_mat(L.balance_row(1), L.theta(0)) == doctest::Approx(10.0));
  CHECK(a.ineq_rhs[L.flow_upper_row(0)] == doctest::Approx(1.5));
}

TEST_CASE("open or derated single line cannot serve case2") {
  const Network net = testing::fixture_network("case2.m");
  const QpProblem open = build_dcopf(net, net.nominal_demand, SwitchVector::binary(Vec::Zero(1)));
  const DcopfLayout L = DcopfLayout::of(net);
  CHECK(open.ineq_mat.row(L.flow_upper_row(0)).cwiseAbs().sum() == 0.0);
  CHECK(open.ineq_rhs[L.flow_upper_row(0)] == 0.0);
  CHECK(solve_dcopf(net, net.nominal_demand, SwitchVector::binary(Vec::Zero(1))).status == QpStatus::Infeasible);
  CHECK(solve_dcopf(net, net.nominal_demand, SwitchVector::relaxed(Vec::Constant(1, 0.5))).status ==
        QpStatus::Infeasible);
}

TEST_CASE("case2 DC-OPF") {
  const Network net = testing::fixture_network("case2.m");
  const DispatchSolution s = solve_dcopf(net, net.nominal_demand, SwitchVector::all_closed(1));
  REQUIRE(s.optimal());
  CHECK(s.p_g[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.theta[0] == doctest::Approx(0.0));
  CHECK(s.theta[1] == doctest::Approx(-0.1).epsilon(1e-9));
  CHECK(s.objective == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("case3b Braess triangle") {
  const Network net = testing::fixture_network("case3b.m", 0.5);
  const DispatchSolution closed = solve_dcopf(net, net.nominal_demand, SwitchVector::all_closed(3));
  REQUIRE(closed.optimal());
  CHECK(closed.objective == doctest::Approx(1400.0).epsilon(1e-9));
  const double direct_flow = net.susceptance[2] * (closed.theta[0] - closed.theta[2]);
  CHECK(direct_flow == doctest::Approx(0.6).epsilon(1e-9));

  const DispatchSolution opened =
      solve_dcopf(net, net.nominal_demand, SwitchVector::binary((Vec(3) << 1, 1, 0).finished()));
  REQUIRE(opened.optimal());
  CHECK(opened.objective == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("dispatch solutions satisfy the independent constraint check") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Network net = testing::random_feasible_network(seed, {});
    const SwitchVector z = SwitchVector::all_closed(net.n_line);
    const DispatchSolution s = solve_dcopf(net, net.nominal_demand, z);
    REQUIRE(s.optimal());
    const FeasibilityReport r = check_feasibility(net, net.nominal_demand, z, s.p_g, s.theta);
    CHECK(r.feasible(1e-6));
    CHECK(std::abs(s.theta[net.ref_bus]) <= 1e-9);

    const DispatchSolution ed = solve_ed(net, net.nominal_demand);
    REQUIRE(ed.optimal());
    CHECK(ed.objective <= s.objective + 1e-6 * (1.0 + s.objective));
  }
}

TEST_CASE("floating island behind a congested line still solves to KKT accuracy") {
  // Only lines 1 (buses 2-3) and 2 (buses 1-4) closed: buses 2 and 3 form an
  // island with no reference angle and line 1 sits at its limit.
  const Network net = testing::random_feasible_network(524, {});
  REQUIRE(net.n_line == 6);
  Vec z = Vec::Zero(6);
  z[1] = z[2] = 1.0;
  for (double scale : {1.0, 1.08}) {
    const Vec d = scale * net.nominal_demand;
    const SwitchVector zs = SwitchVector::binary(z);
    const DispatchSolution s = solve_dcopf(net, d, zs);
    REQUIRE(s.optimal());
    CHECK(check_feasibility(net, d, zs, s.p_g, s.theta).feasible());
    Vec x(net.n_gen + net.n_bus);
    x << s.p_g, s.theta;
    const KktResiduals r = kkt_residuals(build_dcopf(net, d, zs), x, s.lambda, s.mu);
    CHECK(r.stationarity <= 1e-6 * (1.0 + s.lambda.cwiseAbs().maxCoeff()));
    CHECK(r.primal_eq <= 1e-8);
    CHECK(r.primal_ineq <= 1e-8);
    CHECK(r.dual_sign <= 1e-8);
    CHECK(r.duality_gap <= 1e-6 * (1.0 + std::abs(s.objective)));
  }
}

#include <chrono>

#include "doctest.h"
#include "otsforge/error.hpp"
#include "otsforge/ots.hpp"
#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

namespace {

OtsOptions mode(OtsMode m) {
  OtsOptions o;
  o.mode = m;
  return o;
}

}  // namespace

TEST_CASE("case3b: opening the direct line is optimal") {
  const Network net = testing::fixture_network("case3b.m", 0.5);
  for (OtsMode m : {OtsMode::Exhaustive, OtsMode::BranchAndBound}) {
    const OtsSolution s = solve_ots_exact(net, net.nominal_demand, mode(m));
    CHECK(s.proved_optimal);
    CHECK(s.objective == doctest::Approx(1000.0).epsilon(1e-9));
    CHECK(s.z.values() == (Vec(3) << 1, 1, 0).finished());
    CHECK(s.dispatch.objective == s.objective);
  }
}

TEST_CASE("case2: the only line stays closed") {
  const Network net = testing::fixture_network("case2.m", 0.5);
  for (OtsMode m : {OtsMode::Exhaustive, OtsMode::BranchAndBound}) {
    const OtsSolution s = solve_ots_exact(net, net.nominal_demand, mode(m));
    CHECK(s.proved_optimal);
    CHECK(s.z[0] == 1.0);
    CHECK(s.objective == doctest::Approx(1000.0).epsilon(1e-9));
  }
}

TEST_CASE("uncongested network: switching cannot help") {
  RawCase rc = testing::load_fixture("case3b.m");
  for (auto& br : rc.branch_rows) br.rate_a = 1000.0;
  const Network net = build_network(rc, 0.5);
  const DispatchSolution opf = solve_dcopf(net, net.nominal_demand, SwitchVector::all_closed(3));
  const OtsSolution s = solve_ots_exact(net, net.nominal_demand, mode(OtsMode::BranchAndBound));
  CHECK(s.objective == doctest::Approx(opf.objective).epsilon(1e-9));
}

TEST_CASE("infeasible all-closed start has no incumbent") {
  const Network net = testing::fixture_network("case2.m", 0.5);
  try {
    solve_ots_exact(net, 2.0 * net.nominal_demand, {});
    FAIL("expected NoIncumbent");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoIncumbent);
  }
}

TEST_CASE("zero time budget returns the all-closed incumbent unproved") {
  const Network net = testing::fixture_network("case3b.m", 0.5);
  OtsOptions o;
  o.budget.time_limit_s = 0.0;
  for (OtsMode m : {OtsMode::Exhaustive, OtsMode::BranchAndBound}) {
    o.mode = m;
    const OtsSolution s = solve_ots_exact(net, net.nominal_demand, o);
    CHECK_FALSE(s.proved_optimal);
    CHECK(s.objective == doctest::Approx(1400.0).epsilon(1e-9));
  }
}

TEST_CASE("cardinality limit of zero keeps every line closed") {
  const Network net = testing::fixture_network("case3b.m", 0.5);
  OtsOptions o;
  o.max_open_lines = 0;
  for (OtsMode m : {OtsMode::Exhaustive, OtsMode::BranchAndBound}) {
    o.mode = m;
    const OtsSolution s = solve_ots_exact(net, net.nominal_demand, o);
    CHECK(s.objective == doctest::Approx(1400.0).epsilon(1e-9));
    CHECK(s.z.open_count() == 0);
  }
}

TEST_CASE("branch and bound agrees with enumeration; bounds bracket the optimum") {
  for (std::uint64_t seed = 100; seed < 115; ++seed) {
    const Network net = testing::random_feasible_network(seed, {});
    const Vec demand = 1.05 * net.nominal_demand;
    const OtsSolution ex = solve_ots_exact(net, demand, mode(OtsMode::Exhaustive));
    const OtsSolution bb = solve_ots_exact(net, demand, mode(OtsMode::BranchAndBound));
    CAPTURE(seed);
    REQUIRE(ex.proved_optimal);
    REQUIRE(bb.proved_optimal);
    CHECK(std::abs(ex.objective - bb.objective) <= 1e-6 * std::abs(ex.objective));
    CHECK(bb.root_bound <= bb.objective + 1e-6 * std::abs(bb.objective));

    const double ed = solve_ed(net, demand).objective;
    const double opf = solve_dcopf(net, demand, SwitchVector::all_closed(net.n_line)).objective;
    CHECK(ed <= ex.objective + 1e-6 * std::abs(ed));
    CHECK(ex.objective <= opf + 1e-6 * std::abs(opf));

    const FeasibilityReport r = check_feasibility(net, demand, bb.z, bb.dispatch.p_g, bb.dispatch.theta);
    CHECK(r.feasible(1e-6));
  }
}

TEST_CASE("binary z through the relaxed builder equals the big-M model with z fixed") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const Network net = testing::random_feasible_network(seed, {});
    std::vector<int> fixed(net.n_line, 1);
    Vec z = Vec::Ones(net.n_line);
    fixed[0] = 0;
    z[0] = 0.0;
    const DispatchSolution opf = solve_dcopf(net, net.nominal_demand, SwitchVector::binary(z));
    const OtsRelaxation rel = solve_ots_relaxation(net, net.nominal_demand, fixed);
    CAPTURE(seed);
    CHECK(opf.status == rel.status);
    if (opf.optimal()) CHECK(opf.objective == doctest::Approx(rel.objective).epsilon(1e-7));
  }
}

#include <random>

#include "doctest.h"
#include "otsforge/error.hpp"
#include "otsforge/network.hpp"
#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

TEST_CASE("case2 per-unit conversion") {
  const Network net = testing::fixture_network("case2.m", 0.5);
  CHECK(net.n_bus == 2);
  CHECK(net.n_gen == 1);
  CHECK(net.n_line == 1);
  CHECK(net.susceptance[0] == doctest::Approx(10.0));
  CHECK(net.flow_max[0] == doctest::Approx(1.5));
  CHECK(net.flow_min[0] == doctest::Approx(-1.5));
  CHECK(net.nominal_demand[0] == 0.0);
  CHECK(net.nominal_demand[1] == doctest::Approx(1.0));
  CHECK(net.theta_max[1] == 0.5);
  CHECK(net.theta_min[0] == -0.5);
  CHECK(net.ref_bus == 0);
  CHECK(net.gen_max[0] == doctest::Approx(2.0));
}

TEST_CASE("linear cost rescaled to per unit") {
  const Network net = testing::fixture_network("case2.m", 0.5);
  CHECK(net.cost.c1[0] == doctest::Approx(1000.0));
  CHECK(net.cost.c0[0] == 0.0);
  CHECK(net.cost.c2[0] == 0.0);
  CHECK(net.cost.evaluate(Vec::Constant(1, 1.0)) == doctest::Approx(1000.0));
}

TEST_CASE("reference bus errors") {
  RawCase rc = testing::load_fixture("case3b.m");
  rc.bus_rows[2].bus_type = 3;
  try {
    build_network(rc, 0.5);
    FAIL("expected DuplicateRefBus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateRefBus);
  }
  rc.bus_rows[0].bus_type = 2;
  rc.bus_rows[2].bus_type = 2;
  try {
    build_network(rc, 0.5);
    FAIL("expected NoRefBus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoRefBus);
  }
  try {
    build_network(testing::load_fixture("case2.m"), 0.0);
    FAIL("expected NonpositiveThetaBound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonpositiveThetaBound);
  }
}

TEST_CASE("unlimited ratings map to a multiple of total demand") {
  RawCase rc = testing::load_fixture("case3b.m");
  rc.branch_rows[0].rate_a = 0.0;
  NetworkOptions opts;
  opts.theta_bound = 0.5;
  opts.unlimited_rate_factor = 10.0;
  const Network net = build_network(rc, opts);
  CHECK(net.flow_max[0] == doctest::Approx(10.0));  // 10 x 100 MW on a 100 MVA base
}

TEST_CASE("incidence structure and lossless flows on random networks") {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    testing::RandomNetworkSpec spec;
    spec.min_buses = 3;
    spec.max_buses = 14;
    spec.max_lines = 20;
    const Network net = build_network(testing::random_case(seed, spec), 0.5);
    for (int l = 0; l < net.n_line; ++l) {
      CHECK(net.branch_incidence.row(l).sum() == 0.0);
      CHECK((net.branch_incidence.row(l).array() == 1.0).count() == 1);
      CHECK((net.branch_incidence.row(l).array() == -1.0).count() == 1);
    }
    for (int g = 0; g < net.n_gen; ++g) CHECK(net.gen_incidence.col(g).sum() == 1.0);
    CHECK((net.gen_min.array() <= net.gen_max.array()).all());
    CHECK((net.flow_min.array() < 0.0).all());
    CHECK((net.flow_max.array() > 0.0).all());

    Vec theta(net.n_bus);
    for (int b = 0; b < net.n_bus; ++b) theta[b] = testing::uniform(rng, -0.5, 0.5);
    const Vec injections =
        net.branch_incidence.transpose() * (net.susceptance.asDiagonal() * (net.branch_incidence * theta));
    CHECK(std::abs(injections.sum()) <= 1e-12 * (1.0 + injections.cwiseAbs().sum()));
  }
}

TEST_CASE("per-unit cost equals the MW polynomial") {
  std::mt19937_64 rng(9);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const RawCase rc = testing::random_case(seed, {});
    const Network net = build_network(rc, 0.5);
    Vec p(net.n_gen);
    double mw_cost = 0.0;
    for (int g = 0; g < net.n_gen; ++g) {
      const double mw = testing::uniform(rng, 0.0, rc.gen_rows[g].pmax);
      p[g] = mw / rc.base_mva;
      const auto& c = rc.gencost_rows[g].coeffs;
      double v = 0.0;
      for (double coeff : c) v = v * mw + coeff;  // Horner, highest degree first
      mw_cost += v;
    }
    CHECK(std::abs(net.cost.evaluate(p) - mw_cost) <= 1e-12 * std::abs(mw_cost));
  }
}

TEST_CASE("fingerprint tracks content") {
  const Network a = testing::fixture_network("case3b.m", 0.5);
  const Network b = testing::fixture_network("case3b.m", 0.5);
  const Network c = testing::fixture_network("case3b.m", 0.4);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}

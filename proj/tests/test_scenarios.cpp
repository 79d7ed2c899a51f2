#include <sstream>

#include "doctest.h"
#include "otsforge/error.hpp"
#include "otsforge/scenarios.hpp"
#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

namespace {

std::string bytes_of(const Dataset& d) {
  std::ostringstream os;
  write_dataset(os, d);
  return os.str();
}

}  // namespace

TEST_CASE("six samples split 3/1/2") {
  const Network net = testing::fixture_network("case3b.m");
  ScenarioConfig cfg;
  cfg.seed = 1;
  const Dataset d = generate(net, 6, cfg);
  CHECK(d.size() == 6);
  CHECK(d.count(Split::Train) == 3);
  CHECK(d.count(Split::Val) == 1);
  CHECK(d.count(Split::Test) == 2);
}

TEST_CASE("split sizes stay within one of 3:1:2") {
  for (int n = 1; n <= 400; ++n) {
    const SplitSizes s = split_sizes(n);
    CHECK(s.train + s.val + s.test == n);
    CHECK(std::abs(s.train - 3.0 * n / 6.0) <= 1.0);
    CHECK(std::abs(s.val - 1.0 * n / 6.0) <= 1.0);
    CHECK(std::abs(s.test - 2.0 * n / 6.0) <= 1.0);
  }
}

TEST_CASE("samples stay within the loading range and are feasible") {
  const Network net = testing::random_feasible_network(31, {});
  for (LoadMode mode : {LoadMode::PerBus, LoadMode::Global}) {
    ScenarioConfig cfg;
    cfg.seed = 9;
    cfg.mode = mode;
    const Dataset d = generate(net, 30, cfg);
    for (const Vec& s : d.samples) {
      double first = -1.0;
      for (int b = 0; b < net.n_bus; ++b) {
        if (net.nominal_demand[b] == 0.0) {
          CHECK(s[b] == 0.0);
          continue;
        }
        const double r = s[b] / net.nominal_demand[b];
        CHECK(r >= 1.0 - 1e-15);
        CHECK(r <= 1.1 + 1e-15);
        if (mode == LoadMode::Global) {
          if (first < 0) first = r;
          CHECK(r == doctest::Approx(first).epsilon(1e-14));
        }
      }
      CHECK(solve_dcopf(net, s, SwitchVector::all_closed(net.n_line)).optimal());
    }
  }
}

TEST_CASE("generation is deterministic and independent of the worker count") {
  const Network net = testing::random_feasible_network(32, {});
  ScenarioConfig cfg;
  cfg.seed = 77;
  const std::string a = bytes_of(generate(net, 40, cfg));
  const std::string b = bytes_of(generate(net, 40, cfg));
  cfg.jobs = 4;
  const std::string c = bytes_of(generate(net, 40, cfg));
  CHECK(a == b);
  CHECK(a == c);
  cfg.seed = 78;
  CHECK(bytes_of(generate(net, 40, cfg)) != a);
}

TEST_CASE("tight lines make every loaded sample infeasible") {
  RawCase rc = testing::load_fixture("case2.m");
  rc.branch_rows[0].rate_a = 99.0;  // below the 100 MW nominal load
  const Network net = build_network(rc, 0.5);
  try {
    generate(net, 5, {});
    FAIL("expected YieldTooLow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::YieldTooLow);
  }
}

TEST_CASE("dataset text round trip") {
  const Network net = testing::random_feasible_network(33, {});
  ScenarioConfig cfg;
  cfg.seed = 5;
  cfg.mode = LoadMode::Global;
  const Dataset d = generate(net, 12, cfg);
  std::istringstream in(bytes_of(d));
  const Dataset back = read_dataset(in);
  CHECK(back.samples == d.samples);
  CHECK(back.split == d.split);
  CHECK(back.mode == d.mode);
  CHECK(back.low == d.low);
  CHECK(back.high == d.high);
  CHECK(back.seed == d.seed);
  CHECK(back.draws == d.draws);
  CHECK(back.network_fingerprint == net.fingerprint());
  CHECK(bytes_of(back) == bytes_of(d));
  check_fingerprint(back, net);

  const Network other = testing::random_feasible_network(34, {});
  try {
    check_fingerprint(back, other);
    FAIL("expected FingerprintMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FingerprintMismatch);
  }
}

TEST_CASE("malformed dataset files are rejected") {
  const std::string good =
      "# otsforge dataset v1\nfingerprint 00000000000000ff\nmode perbus\nlow 1\nhigh 1.1\nseed 1\ndraws 2\n"
      "n_bus 2\nsamples 1 train 1 val 0 test 0\ntrain 0 1.05\n";
  std::istringstream ok(good);
  CHECK(read_dataset(ok).size() == 1);
  for (const std::string& broken : {good.substr(0, good.size() - 5) + "\n", good + "val 1 2\n",
                                    std::string(good).replace(good.find("train 0"), 5, "maybe")}) {
    std::istringstream in(broken);
    CHECK_THROWS_AS(read_dataset(in), Error);
  }
}

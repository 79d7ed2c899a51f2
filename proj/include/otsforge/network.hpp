#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "otsforge/matpower_case.hpp"

namespace otsforge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Per-unit convex generation cost C(p) = sum_g c2 p^2 + c1 p + c0, in $/h.
struct CostFunction {
  Vec c2;
  Vec c1;
  Vec c0;

  double evaluate(const Vec& p_g) const;
  Vec gradient(const Vec& p_g) const;
  bool is_linear() const { return c2.size() == 0 || c2.cwiseAbs().maxCoeff() == 0.0; }
};

struct NetworkOptions {
  double theta_bound = 0.5;  // rad, applied symmetrically at every bus
  // Ratings of 0 ("unlimited") become this multiple of total nominal demand.
  double unlimited_rate_factor = 10.0;
};

// Immutable per-unit DC network. Lines index the in-service branches; bus,
// generator, and line orderings follow the source case.
struct Network {
  int n_bus = 0;
  int n_gen = 0;
  int n_line = 0;
  double base_mva = 100.0;

  Mat branch_incidence;  // n_line x n_bus, +1 at from bus, -1 at to bus
  Mat gen_incidence;     // n_bus x n_gen
  std::vector<int> line_from;
  std::vector<int> line_to;
  std::vector<int> gen_bus;
  std::vector<int> bus_ids;  // external ids, for reporting

  Vec susceptance;  // 1/x
  Vec flow_max;
  Vec flow_min;
  Vec gen_max;
  Vec gen_min;
  Vec theta_max;
  Vec theta_min;
  int ref_bus = 0;
  CostFunction cost;
  Vec nominal_demand;

  // Largest angle difference the boxes allow across line l.
  double angle_spread(int line) const;

  // 64-bit FNV-1a digest over every numeric field.
  std::uint64_t fingerprint() const;
};

Network build_network(const RawCase& rc, const NetworkOptions& opts);
Network build_network(const RawCase& rc, double theta_bound);

}  // namespace otsforge

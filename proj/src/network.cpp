#include "otsforge/network.hpp"

#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <unordered_map>

#include "otsforge/error.hpp"
#include "hash.hpp"

namespace otsforge {

double CostFunction::evaluate(const Vec& p_g) const {
  return (c2.array() * p_g.array().square() + c1.array() * p_g.array() + c0.array()).sum();
}

Vec CostFunction::gradient(const Vec& p_g) const {
  return (2.0 * c2.array() * p_g.array() + c1.array()).matrix();
}

double Network::angle_spread(int line) const {
  const int i = line_from[line];
  const int j = line_to[line];
  return std::max(theta_max[i] - theta_min[j], theta_max[j] - theta_min[i]);
}

using detail::Fnv1a;

std::uint64_t Network::fingerprint() const {
  Fnv1a f;
  f.value(n_bus);
  f.value(n_gen);
  f.value(n_line);
  f.value(base_mva);
  for (int l = 0; l < n_line; ++l) {
    f.value(line_from[l]);
    f.value(line_to[l]);
  }
  for (int g = 0; g < n_gen; ++g) f.value(gen_bus[g]);
  f.vec(susceptance);
  f.vec(flow_max);
  f.vec(flow_min);
  f.vec(gen_max);
  f.vec(gen_min);
  f.vec(theta_max);
  f.vec(theta_min);
  f.value(ref_bus);
  f.vec(cost.c2);
  f.vec(cost.c1);
  f.vec(cost.c0);
  f.vec(nominal_demand);
  return f.h;
}

Network build_network(const RawCase& rc, double theta_bound) {
  NetworkOptions opts;
  opts.theta_bound = theta_bound;
  return build_network(rc, opts);
}

Network build_network(const RawCase& rc, const NetworkOptions& opts) {
  if (!(opts.theta_bound > 0.0)) {
    fail(ErrorCode::NonpositiveThetaBound, fmt::format("theta bound {}", opts.theta_bound));
  }
  if (!(rc.base_mva > 0.0)) fail(ErrorCode::InvalidCase, "baseMVA must be positive");
  if (rc.gencost_rows.size() != rc.gen_rows.size()) {
    fail(ErrorCode::InvalidCase, "gencost rows are not aligned with generators");
  }

  Network net;
  net.base_mva = rc.base_mva;
  net.n_bus = static_cast<int>(rc.bus_rows.size());
  net.n_gen = static_cast<int>(rc.gen_rows.size());
  net.n_line = static_cast<int>(rc.branch_rows.size());
  const double base = rc.base_mva;

  std::unordered_map<int, int> index;
  int ref = -1;
  net.nominal_demand = Vec::Zero(net.n_bus);
  for (int i = 0; i < net.n_bus; ++i) {
    const BusRow& b = rc.bus_rows[i];
    index[b.bus_id] = i;
    net.bus_ids.push_back(b.bus_id);
    net.nominal_demand[i] = b.pd / base;
    if (b.bus_type == 3) {
      if (ref >= 0) fail(ErrorCode::DuplicateRefBus, fmt::format("buses {} and {}", rc.bus_rows[ref].bus_id, b.bus_id));
      ref = i;
    }
  }
  if (ref < 0) fail(ErrorCode::NoRefBus, "no bus of type 3");
  net.ref_bus = ref;

  const auto lookup = [&](int id) {
    const auto it = index.find(id);
    if (it == index.end()) fail(ErrorCode::InvalidCase, fmt::format("unknown bus id {}", id));
    return it->second;
  };

  const double total_demand_mw = std::abs(net.nominal_demand.sum()) * base;
  const double unlimited_cap = opts.unlimited_rate_factor * std::max(total_demand_mw, base);

  net.branch_incidence = Mat::Zero(net.n_line, net.n_bus);
  net.susceptance.resize(net.n_line);
  net.flow_max.resize(net.n_line);
  for (int l = 0; l < net.n_line; ++l) {
    const BranchRow& br = rc.branch_rows[l];
    if (br.x == 0.0) fail(ErrorCode::InvalidCase, fmt::format("branch {} has zero reactance", l));
    const int f = lookup(br.from_bus);
    const int t = lookup(br.to_bus);
    net.line_from.push_back(f);
    net.line_to.push_back(t);
    net.branch_incidence(l, f) = 1.0;
    net.branch_incidence(l, t) = -1.0;
    net.susceptance[l] = 1.0 / br.x;
    const double rate = br.rate_a > 0.0 ? br.rate_a : unlimited_cap;
    net.flow_max[l] = rate / base;
  }
  net.flow_min = -net.flow_max;

  net.gen_incidence = Mat::Zero(net.n_bus, net.n_gen);
  net.gen_max.resize(net.n_gen);
  net.gen_min.resize(net.n_gen);
  net.cost.c2 = Vec::Zero(net.n_gen);
  net.cost.c1 = Vec::Zero(net.n_gen);
  net.cost.c0 = Vec::Zero(net.n_gen);
  for (int g = 0; g < net.n_gen; ++g) {
    const GenRow& gr = rc.gen_rows[g];
    const int b = lookup(gr.bus_id);
    net.gen_bus.push_back(b);
    net.gen_incidence(b, g) = 1.0;
    net.gen_max[g] = gr.pmax / base;
    net.gen_min[g] = gr.pmin / base;
    if (net.gen_min[g] > net.gen_max[g]) fail(ErrorCode::InvalidCase, fmt::format("gen {} has pmin > pmax", g));

    // C(P_MW) with P_MW = base * p rescales the coefficients by powers of base.
    const GencostRow& c = rc.gencost_rows[g];
    if (c.model != 2) fail(ErrorCode::UnsupportedCostModel, fmt::format("gen {} cost model {}", g, c.model));
    if (c.n_coeff == 3) {
      net.cost.c2[g] = c.coeffs[0] * base * base;
      net.cost.c1[g] = c.coeffs[1] * base;
      net.cost.c0[g] = c.coeffs[2];
    } else if (c.n_coeff == 2) {
      net.cost.c1[g] = c.coeffs[0] * base;
      net.cost.c0[g] = c.coeffs[1];
    } else {
      fail(ErrorCode::UnsupportedCostModel, fmt::format("gen {} has {} cost coefficients", g, c.n_coeff));
    }
    if (net.cost.c2[g] < 0.0) fail(ErrorCode::InvalidCase, fmt::format("gen {} has a concave cost", g));
  }

  net.theta_max = Vec::Constant(net.n_bus, opts.theta_bound);
  net.theta_min = Vec::Constant(net.n_bus, -opts.theta_bound);
  return net;
}

}  // namespace otsforge

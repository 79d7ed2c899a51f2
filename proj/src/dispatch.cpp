#include "otsforge/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "otsforge/error.hpp"

namespace otsforge {

SwitchVector::SwitchVector(Vec values, SwitchKind kind) : values_(std::move(values)), kind_(kind) {
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorCode::InvalidArgument, fmt::format("line status {} = {} outside [0, 1]", i, v));
    }
    if (kind == SwitchKind::Binary && v != 0.0 && v != 1.0) {
      fail(ErrorCode::InvalidArgument, fmt::format("binary line status {} = {}", i, v));
    }
  }
}

int SwitchVector::open_count() const {
  return static_cast<int>((values_.array() < 0.5).count());
}

namespace {

void check_demand(const Network& net, const Vec& demand) {
  if (demand.size() != net.n_bus) {
    fail(ErrorCode::DimensionMismatch, fmt::format("demand has {} entries, network has {} buses", demand.size(), net.n_bus));
  }
}

DispatchSolution unpack(const Network& net, const QpSolution& qp, int theta_offset) {
  DispatchSolution out;
  out.status = qp.status;
  out.iterations = qp.iterations;
  out.lambda = qp.lambda;
  out.mu = qp.mu;
  out.p_g = qp.x.head(net.n_gen);
  out.theta = theta_offset >= 0 ? Vec(qp.x.segment(theta_offset, net.n_bus)) : Vec::Zero(net.n_bus);
  out.objective = qp.status == QpStatus::Optimal ? net.cost.evaluate(out.p_g)
                                                 : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace

DispatchSolution solve_ed(const Network& net, const Vec& demand, const DispatchOptions& opts) {
  check_demand(net, demand);
  const double total = demand.sum();
  const double lo = net.gen_min.sum();
  const double hi = net.gen_max.sum();
  const double slack = 1e-9 * (1.0 + std::abs(total));
  if (total < lo - slack || total > hi + slack) {
    fail(ErrorCode::InfeasibleDemand, fmt::format("total demand {:.9g} p.u. outside [{:.9g}, {:.9g}]", total, lo, hi));
  }
  const int ng = net.n_gen;
  QpProblem p;
  p.quad = Mat::Zero(ng, ng);
  p.quad.diagonal() = 2.0 * (net.cost.c2.array() + opts.quad_regularizer).matrix();
  p.lin = net.cost.c1;
  p.eq_mat = Mat::Ones(1, ng);
  p.eq_rhs = Vec::Constant(1, total);
  p.ineq_mat = Mat::Zero(2 * ng, ng);
  p.ineq_rhs.resize(2 * ng);
  for (int g = 0; g < ng; ++g) {
    p.ineq_mat(g, g) = 1.0;
    p.ineq_rhs[g] = net.gen_max[g];
    p.ineq_mat(ng + g, g) = -1.0;
    p.ineq_rhs[ng + g] = -net.gen_min[g];
  }
  const QpSolution qp = solve_qp(p, opts.qp);
  return unpack(net, qp, -1);
}

QpProblem build_dcopf(const Network& net, const Vec& demand, const SwitchVector& z, double quad_regularizer) {
  check_demand(net, demand);
  if (z.size() != net.n_line) {
    fail(ErrorCode::DimensionMismatch, fmt::format("z has {} entries, network has {} lines", z.size(), net.n_line));
  }
  const DcopfLayout L = DcopfLayout::of(net);
  QpProblem p;
  p.quad = Mat::Zero(L.n_var(), L.n_var());
  p.lin = Vec::Zero(L.n_var());
  for (int g = 0; g < net.n_gen; ++g) {
    p.quad(L.pg(g), L.pg(g)) = 2.0 * (net.cost.c2[g] + quad_regularizer);
    p.lin[L.pg(g)] = net.cost.c1[g];
  }

  // M p_g - C' diag(z b) C theta = p_d, theta_ref = 0
  p.eq_mat = Mat::Zero(L.n_eq(), L.n_var());
  p.eq_rhs = Vec::Zero(L.n_eq());
  for (int g = 0; g < net.n_gen; ++g) p.eq_mat(L.balance_row(net.gen_bus[g]), L.pg(g)) = 1.0;
  for (int l = 0; l < net.n_line; ++l) {
    const double w = z[l] * net.susceptance[l];
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    p.eq_mat(L.balance_row(i), L.theta(i)) -= w;
    p.eq_mat(L.balance_row(i), L.theta(j)) += w;
    p.eq_mat(L.balance_row(j), L.theta(j)) -= w;
    p.eq_mat(L.balance_row(j), L.theta(i)) += w;
  }
  p.eq_rhs.head(net.n_bus) = demand;
  p.eq_mat(L.ref_row(), L.theta(net.ref_bus)) = 1.0;

  p.ineq_mat = Mat::Zero(L.n_ineq(), L.n_var());
  p.ineq_rhs = Vec::Zero(L.n_ineq());
  for (int l = 0; l < net.n_line; ++l) {
    const double w = z[l] * net.susceptance[l];
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    p.ineq_mat(L.flow_upper_row(l), L.theta(i)) = w;
    p.ineq_mat(L.flow_upper_row(l), L.theta(j)) = -w;
    p.ineq_rhs[L.flow_upper_row(l)] = z[l] * net.flow_max[l];
    p.ineq_mat(L.flow_lower_row(l), L.theta(i)) = -w;
    p.ineq_mat(L.flow_lower_row(l), L.theta(j)) = w;
    p.ineq_rhs[L.flow_lower_row(l)] = -z[l] * net.flow_min[l];
  }
  for (int g = 0; g < net.n_gen; ++g) {
    p.ineq_mat(L.gen_upper_row(g), L.pg(g)) = 1.0;
    p.ineq_rhs[L.gen_upper_row(g)] = net.gen_max[g];
    p.ineq_mat(L.gen_lower_row(g), L.pg(g)) = -1.0;
    p.ineq_rhs[L.gen_lower_row(g)] = -net.gen_min[g];
  }
  for (int b = 0; b < net.n_bus; ++b) {
    p.ineq_mat(L.theta_upper_row(b), L.theta(b)) = 1.0;
    p.ineq_rhs[L.theta_upper_row(b)] = net.theta_max[b];
    p.ineq_mat(L.theta_lower_row(b), L.theta(b)) = -1.0;
    p.ineq_rhs[L.theta_lower_row(b)] = -net.theta_min[b];
  }
  return p;
}

DispatchSolution solve_dcopf(const Network& net, const Vec& demand, const SwitchVector& z,
                             const DispatchOptions& opts) {
  const QpProblem p = build_dcopf(net, demand, z, opts.quad_regularizer);
  const QpSolution qp = solve_qp(p, opts.qp);
  return unpack(net, qp, DcopfLayout::of(net).theta(0));
}

double FeasibilityReport::worst() const {
  return std::max({balance, flow, gen, angle, ref_angle, binary});
}

FeasibilityReport check_feasibility(const Network& net, const Vec& demand, const SwitchVector& z, const Vec& p_g,
                                    const Vec& theta) {
  FeasibilityReport r;
  std::vector<double> injection(net.n_bus, 0.0);
  for (int b = 0; b < net.n_bus; ++b) injection[b] = -demand[b];
  for (int g = 0; g < net.n_gen; ++g) {
    injection[net.gen_bus[g]] += p_g[g];
    r.gen = std::max({r.gen, p_g[g] - net.gen_max[g], net.gen_min[g] - p_g[g]});
  }
  for (int l = 0; l < net.n_line; ++l) {
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    const double flow = z[l] * net.susceptance[l] * (theta[i] - theta[j]);
    injection[i] -= flow;
    injection[j] += flow;
    r.flow = std::max({r.flow, flow - z[l] * net.flow_max[l], z[l] * net.flow_min[l] - flow});
    r.binary = std::max(r.binary, std::min(std::abs(z[l]), std::abs(1.0 - z[l])));
  }
  for (int b = 0; b < net.n_bus; ++b) {
    r.balance = std::max(r.balance, std::abs(injection[b]));
    r.angle = std::max({r.angle, theta[b] - net.theta_max[b], net.theta_min[b] - theta[b]});
  }
  r.ref_angle = std::abs(theta[net.ref_bus]);
  return r;
}

}  // namespace otsforge

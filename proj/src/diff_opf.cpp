#include "otsforge/diff_opf.hpp"

#include <cmath>
#include <fmt/format.h>

#include "otsforge/error.hpp"
#include "otsforge/random.hpp"

namespace otsforge {

namespace {

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vec stack_x(const DispatchSolution& sol) {
  Vec x(sol.p_g.size() + sol.theta.size());
  x << sol.p_g, sol.theta;
  return x;
}

QpProblem rebuild_checked(const Network& net, const Vec& demand, const SwitchVector& z, const DispatchSolution& sol,
                          const DiffOpfOptions& opts) {
  if (!sol.optimal()) {
    fail(ErrorCode::StaleSolution, fmt::format("solution status is {}", to_string(sol.status)));
  }
  const QpProblem p = build_dcopf(net, demand, z, opts.dispatch.quad_regularizer);
  if (sol.p_g.size() != net.n_gen || sol.theta.size() != net.n_bus || sol.lambda.size() != p.m_eq() ||
      sol.mu.size() != p.m_ineq()) {
    fail(ErrorCode::StaleSolution, "solution dimensions do not match the network");
  }
  const Vec x = stack_x(sol);
  const KktResiduals r = kkt_residuals(p, x, sol.lambda, sol.mu);
  const double dual_scale = 1.0 + std::max({inf_norm(p.lin), inf_norm(sol.lambda), inf_norm(sol.mu)});
  const double primal_scale = 1.0 + std::max(inf_norm(p.eq_rhs), inf_norm(p.ineq_rhs));
  const double tol = opts.stale_tolerance;
  if (r.stationarity > tol * dual_scale || r.primal_eq > tol * primal_scale || r.primal_ineq > tol * primal_scale) {
    fail(ErrorCode::StaleSolution,
         fmt::format("solution does not satisfy the KKT conditions at these arguments (stationarity {:.3g}, "
                     "balance {:.3g}, limits {:.3g})",
                     r.stationarity, r.primal_eq, r.primal_ineq));
  }
  return p;
}

Mat scaled_jacobian(const KktSystem& k) {
  Mat js = k.jacobian;
  for (int i = 0; i < k.m_ineq; ++i) js.row(k.n + k.m_eq + i) *= k.row_scale[i];
  return js;
}

// Solves op(J) y = rhs, op = transpose when `transpose`. Falls back to the
// Tikhonov-regularized least-squares solution when J is singular.
struct LinearSolve {
  Mat y;
  double residual = 0.0;
  bool regularized = false;
};

LinearSolve solve_kkt(const Mat& js, const Mat& rhs, bool transpose, double tikhonov, bool force_regularize) {
  const Mat op = transpose ? Mat(js.transpose()) : js;
  const double scale = 1.0 + (rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0);
  auto resid = [&](const Mat& y) { return (op * y - rhs).cwiseAbs().maxCoeff() / scale; };

  LinearSolve out;
  Eigen::PartialPivLU<Mat> lu;
  if (!force_regularize) {
    lu.compute(op);
    out.y = lu.solve(rhs);
    if (out.y.allFinite()) {
      out.residual = resid(out.y);
      if (out.residual <= 1e-10) return out;
    }
  }
  // min |op y - rhs|^2 + tik |y|^2
  const Mat normal = op.transpose() * op + tikhonov * Mat::Identity(op.cols(), op.cols());
  Eigen::LDLT<Mat> ldlt(normal);
  Mat y = ldlt.solve(op.transpose() * rhs);
  for (int it = 0; it < 3 && y.allFinite(); ++it) y += ldlt.solve(op.transpose() * (rhs - op * y));
  const double r = y.allFinite() ? resid(y) : std::numeric_limits<double>::infinity();
  if (force_regularize || !(out.residual <= r)) {
    out.y = std::move(y);
    out.residual = r;
    out.regularized = true;
  }
  if (!(out.residual <= 1e-6)) {
    if (!force_regularize) lu.compute(op);
    fail(ErrorCode::SingularKkt, fmt::format("adjoint solve residual {:.3g} after regularization, rcond ~ {:.3g}",
                                             out.residual, lu.rcond()));
  }
  return out;
}

}  // namespace

KktSystem KktSystem::assemble(const QpProblem& p, const Vec& x, const Vec& /*lambda*/, const Vec& mu) {
  KktSystem k;
  k.n = p.n();
  k.m_eq = p.m_eq();
  k.m_ineq = p.m_ineq();
  const int n = k.n, me = k.m_eq, mi = k.m_ineq;
  k.jacobian = Mat::Zero(k.size(), k.size());
  k.jacobian.topLeftCorner(n, n) = p.quad;
  k.jacobian.block(0, n, n, me) = p.eq_mat.transpose();
  k.jacobian.block(0, n + me, n, mi) = p.ineq_mat.transpose();
  k.jacobian.block(n, 0, me, n) = p.eq_mat;
  k.row_scale = Vec::Ones(mi);
  const Vec gap = p.ineq_mat * x - p.ineq_rhs;
  for (int i = 0; i < mi; ++i) {
    k.jacobian.block(n + me + i, 0, 1, n) = mu[i] * p.ineq_mat.row(i);
    k.jacobian(n + me + i, n + me + i) = gap[i];
    const double size = std::abs(mu[i]) + std::abs(gap[i]);
    if (std::abs(mu[i]) <= k.active_tolerance && std::abs(gap[i]) <= k.active_tolerance) ++k.weak_;
    k.row_scale[i] = 1.0 / std::max(size, k.active_tolerance);
  }
  return k;
}

DispatchSolution forward(const Network& net, const Vec& demand, const SwitchVector& z, const DiffOpfOptions& opts) {
  DispatchSolution sol = solve_dcopf(net, demand, z, opts.dispatch);
  if (!sol.optimal()) {
    fail(ErrorCode::InfeasibleForward, fmt::format("relaxed DC-OPF returned {}", to_string(sol.status)));
  }
  return sol;
}

Mat kkt_parameter_jacobian(const Network& net, const DispatchSolution& sol, const Vec& row_scale) {
  const DcopfLayout L = DcopfLayout::of(net);
  const int n = L.n_var(), me = L.n_eq(), mi = L.n_ineq();
  Mat fz = Mat::Zero(n + me + mi, net.n_line);
  for (int k = 0; k < net.n_line; ++k) {
    const int i = net.line_from[k];
    const int j = net.line_to[k];
    const double b = net.susceptance[k];
    const double li = sol.lambda[L.balance_row(i)];
    const double lj = sol.lambda[L.balance_row(j)];
    const int ru = L.flow_upper_row(k);
    const int rl = L.flow_lower_row(k);
    const double mu_u = sol.mu[ru];
    const double mu_l = sol.mu[rl];
    const double dth = sol.theta[i] - sol.theta[j];

    // stationarity: (dA)' lambda + (dG)' mu
    fz(L.theta(i), k) += -b * li + b * lj + b * mu_u - b * mu_l;
    fz(L.theta(j), k) += b * li - b * lj - b * mu_u + b * mu_l;
    // balance: (dA) x
    fz(n + L.balance_row(i), k) += -b * dth;
    fz(n + L.balance_row(j), k) += b * dth;
    // complementarity: diag(mu) (dG x - dh)
    fz(n + me + ru, k) = row_scale[ru] * mu_u * (b * dth - net.flow_max[k]);
    fz(n + me + rl, k) = row_scale[rl] * mu_l * (-b * dth + net.flow_min[k]);
  }
  return fz;
}

GradResult backward(const Network& net, const Vec& demand, const SwitchVector& z, const DispatchSolution& sol,
                    const Vec& upstream, const DiffOpfOptions& opts) {
  if (upstream.size() != net.n_gen) {
    fail(ErrorCode::DimensionMismatch,
         fmt::format("upstream gradient has {} entries, network has {} generators", upstream.size(), net.n_gen));
  }
  const QpProblem p = rebuild_checked(net, demand, z, sol, opts);
  GradResult out;
  if (upstream.cwiseAbs().maxCoeff() == 0.0) {
    out.dcost_dz = Vec::Zero(net.n_line);
    return out;
  }
  const KktSystem kkt = KktSystem::assemble(p, stack_x(sol), sol.lambda, sol.mu);
  const Mat js = scaled_jacobian(kkt);
  Vec g = Vec::Zero(kkt.size());
  g.head(net.n_gen) = upstream;  // p_g occupies the first variables
  const LinearSolve s = solve_kkt(js, g, true, opts.tikhonov, kkt.weakly_active() > 0);
  const Mat fz = kkt_parameter_jacobian(net, sol, kkt.row_scale);
  out.dcost_dz = -(fz.transpose() * s.y.col(0));
  out.solve_residual = s.residual;
  out.regularized = s.regularized;
  return out;
}

Mat solution_jacobian(const Network& net, const Vec& demand, const SwitchVector& z, const DispatchSolution& sol,
                      const DiffOpfOptions& opts) {
  const QpProblem p = rebuild_checked(net, demand, z, sol, opts);
  const KktSystem kkt = KktSystem::assemble(p, stack_x(sol), sol.lambda, sol.mu);
  const Mat js = scaled_jacobian(kkt);
  const Mat fz = kkt_parameter_jacobian(net, sol, kkt.row_scale);
  const LinearSolve s = solve_kkt(js, -fz, false, opts.tikhonov, kkt.weakly_active() > 0);
  return s.y.topRows(kkt.n);
}

GradCheck gradient_check(const Network& net, const Vec& demand, const SwitchVector& z, double step,
                         const DiffOpfOptions& opts) {
  GradCheck out;
  const DispatchSolution base = forward(net, demand, z, opts);
  const QpProblem p = build_dcopf(net, demand, z, opts.dispatch.quad_regularizer);
  const Vec slack = p.ineq_rhs - p.ineq_mat * stack_x(base);
  out.complementarity_margin = (base.mu.cwiseAbs() + slack.cwiseAbs()).minCoeff();
  const GradResult g = backward(net, demand, z, base, net.cost.gradient(base.p_g), opts);
  out.analytic = g.dcost_dz;
  out.solve_residual = g.solve_residual;
  out.numeric.resize(net.n_line);
  for (int k = 0; k < net.n_line; ++k) {
    auto cost_at = [&](double dz) {
      Vec zz = z.values();
      zz[k] += dz;
      return net.cost.evaluate(forward(net, demand, SwitchVector::relaxed(zz), opts).p_g);
    };
    const double zk = z[k];
    if (zk + step > 1.0) {
      // second-order one-sided stencils at the box edges
      out.numeric[k] = (3.0 * cost_at(0.0) - 4.0 * cost_at(-step) + cost_at(-2.0 * step)) / (2.0 * step);
    } else if (zk - step < 0.0) {
      out.numeric[k] = (-3.0 * cost_at(0.0) + 4.0 * cost_at(step) - cost_at(2.0 * step)) / (2.0 * step);
    } else {
      out.numeric[k] = (cost_at(step) - cost_at(-step)) / (2.0 * step);
    }
  }
  out.max_rel_error =
      ((out.analytic - out.numeric).cwiseAbs().array() / (1.0 + out.analytic.cwiseAbs().array())).maxCoeff();
  return out;
}

GradcheckReport run_gradcheck(const Network& net, int trials, std::uint64_t seed, double step, double min_margin,
                              const DiffOpfOptions& opts) {
  if (trials < 0) fail(ErrorCode::InvalidArgument, "trials must be non-negative");
  GradcheckReport rep;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    GradcheckTrial tr;
    tr.demand = net.nominal_demand;
    for (int b = 0; b < net.n_bus; ++b) tr.demand[b] *= uniform(rng, 1.0, 1.1);
    tr.z.resize(net.n_line);
    for (int l = 0; l < net.n_line; ++l) tr.z[l] = uniform(rng, 0.6, 0.99);
    try {
      tr.check = gradient_check(net, tr.demand, SwitchVector::relaxed(tr.z), step, opts);
      tr.feasible = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InfeasibleForward) throw;
    }
    if (tr.feasible && tr.check.complementarity_margin > min_margin) {
      tr.scored = true;
      ++rep.scored;
      rep.max_rel_error = std::max(rep.max_rel_error, tr.check.max_rel_error);
    }
    rep.trials.push_back(std::move(tr));
  }
  return rep;
}

}  // namespace otsforge

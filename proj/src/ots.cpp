#include "otsforge/ots.hpp"

#include <chrono>
#include <cmath>
#include <fmt/format.h>

#include "otsforge/error.hpp"

namespace otsforge {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double prune_slack(double incumbent) { return 1e-7 * (1.0 + std::abs(incumbent)); }

struct Node {
  std::vector<int> fixed;
  double bound;
};

}  // namespace

OtsRelaxation solve_ots_relaxation(const Network& net, const Vec& demand, const std::vector<int>& fixed,
                                   const OtsOptions& opts) {
  if (demand.size() != net.n_bus) fail(ErrorCode::DimensionMismatch, "demand length");
  if (static_cast<int>(fixed.size()) != net.n_line) fail(ErrorCode::DimensionMismatch, "fixed length");

  const int ng = net.n_gen;
  const int nb = net.n_bus;
  std::vector<int> free_lines;
  std::vector<int> closed_lines;
  int opened = 0;
  for (int l = 0; l < net.n_line; ++l) {
    if (fixed[l] < 0) free_lines.push_back(l);
    if (fixed[l] == 1) closed_lines.push_back(l);
    if (fixed[l] == 0) ++opened;
  }
  OtsRelaxation out;
  out.z = Vec::Zero(net.n_line);
  for (int l = 0; l < net.n_line; ++l) out.z[l] = fixed[l] == 1 ? 1.0 : 0.0;
  const bool cardinality = opts.max_open_lines >= 0;
  if (cardinality && opened > opts.max_open_lines) {
    out.status = QpStatus::Infeasible;
    return out;
  }

  const int nf = static_cast<int>(free_lines.size());
  const int nc = static_cast<int>(closed_lines.size());
  const int th0 = ng;
  const int f0 = ng + nb;
  const int z0 = ng + nb + nf;
  const int nvar = ng + nb + 2 * nf;
  const int n_ineq = 2 * nc + 6 * nf + 2 * ng + 2 * nb + (cardinality ? 1 : 0);

  QpProblem p;
  p.quad = Mat::Zero(nvar, nvar);
  p.lin = Vec::Zero(nvar);
  for (int g = 0; g < ng; ++g) {
    p.quad(g, g) = 2.0 * (net.cost.c2[g] + opts.dispatch.quad_regularizer);
    p.lin[g] = net.cost.c1[g];
  }
  p.eq_mat = Mat::Zero(nb + 1, nvar);
  p.eq_rhs = Vec::Zero(nb + 1);
  p.eq_rhs.head(nb) = demand;
  for (int g = 0; g < ng; ++g) p.eq_mat(net.gen_bus[g], g) = 1.0;
  for (int l : closed_lines) {
    const double b = net.susceptance[l];
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    p.eq_mat(i, th0 + i) -= b;
    p.eq_mat(i, th0 + j) += b;
    p.eq_mat(j, th0 + j) -= b;
    p.eq_mat(j, th0 + i) += b;
  }
  for (int k = 0; k < nf; ++k) {
    const int l = free_lines[k];
    p.eq_mat(net.line_from[l], f0 + k) -= 1.0;
    p.eq_mat(net.line_to[l], f0 + k) += 1.0;
  }
  p.eq_mat(nb, th0 + net.ref_bus) = 1.0;

  p.ineq_mat = Mat::Zero(n_ineq, nvar);
  p.ineq_rhs = Vec::Zero(n_ineq);
  int row = 0;
  for (int l : closed_lines) {
    const double b = net.susceptance[l];
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    p.ineq_mat(row, th0 + i) = b;
    p.ineq_mat(row, th0 + j) = -b;
    p.ineq_rhs[row++] = net.flow_max[l];
    p.ineq_mat(row, th0 + i) = -b;
    p.ineq_mat(row, th0 + j) = b;
    p.ineq_rhs[row++] = -net.flow_min[l];
  }
  for (int k = 0; k < nf; ++k) {
    const int l = free_lines[k];
    const double b = net.susceptance[l];
    const double big_m = std::abs(b) * net.angle_spread(l);
    const int i = net.line_from[l];
    const int j = net.line_to[l];
    // f - b (theta_i - theta_j) + M z <= M
    p.ineq_mat(row, f0 + k) = 1.0;
    p.ineq_mat(row, th0 + i) = -b;
    p.ineq_mat(row, th0 + j) = b;
    p.ineq_mat(row, z0 + k) = big_m;
    p.ineq_rhs[row++] = big_m;
    // -f + b (theta_i - theta_j) + M z <= M
    p.ineq_mat(row, f0 + k) = -1.0;
    p.ineq_mat(row, th0 + i) = b;
    p.ineq_mat(row, th0 + j) = -b;
    p.ineq_mat(row, z0 + k) = big_m;
    p.ineq_rhs[row++] = big_m;
    // f <= z p_max, z p_min <= f
    p.ineq_mat(row, f0 + k) = 1.0;
    p.ineq_mat(row++, z0 + k) = -net.flow_max[l];
    p.ineq_mat(row, f0 + k) = -1.0;
    p.ineq_mat(row++, z0 + k) = net.flow_min[l];
    // 0 <= z <= 1
    p.ineq_mat(row, z0 + k) = 1.0;
    p.ineq_rhs[row++] = 1.0;
    p.ineq_mat(row++, z0 + k) = -1.0;
  }
  for (int g = 0; g < ng; ++g) {
    p.ineq_mat(row, g) = 1.0;
    p.ineq_rhs[row++] = net.gen_max[g];
    p.ineq_mat(row, g) = -1.0;
    p.ineq_rhs[row++] = -net.gen_min[g];
  }
  for (int b = 0; b < nb; ++b) {
    p.ineq_mat(row, th0 + b) = 1.0;
    p.ineq_rhs[row++] = net.theta_max[b];
    p.ineq_mat(row, th0 + b) = -1.0;
    p.ineq_rhs[row++] = -net.theta_min[b];
  }
  if (cardinality) {
    // opened + sum_free (1 - z) <= K
    for (int k = 0; k < nf; ++k) p.ineq_mat(row, z0 + k) = -1.0;
    p.ineq_rhs[row++] = opts.max_open_lines - opened - nf;
  }

  const QpSolution qp = solve_qp(p, opts.dispatch.qp);
  out.status = qp.status;
  if (qp.status == QpStatus::Optimal) {
    out.objective = net.cost.evaluate(qp.x.head(ng)) + opts.dispatch.quad_regularizer * qp.x.head(ng).squaredNorm();
    for (int k = 0; k < nf; ++k) out.z[free_lines[k]] = std::clamp(qp.x[z0 + k], 0.0, 1.0);
  }
  return out;
}

namespace {

OtsSolution exhaustive(const Network& net, const Vec& demand, const OtsOptions& opts, OtsSolution best,
                       Clock::time_point t0) {
  if (net.n_line > opts.exhaustive_line_cap) {
    fail(ErrorCode::InvalidArgument,
         fmt::format("exhaustive search over {} lines exceeds the cap of {}", net.n_line, opts.exhaustive_line_cap));
  }
  const std::uint64_t count = std::uint64_t{1} << net.n_line;
  best.proved_optimal = true;
  // mask 0 is the all-closed incumbent; bit l set means line l open.
  for (std::uint64_t mask = 1; mask < count; ++mask) {
    if (elapsed(t0) > opts.budget.time_limit_s || best.nodes_explored >= opts.budget.node_limit) {
      best.proved_optimal = false;
      break;
    }
    Vec z = Vec::Ones(net.n_line);
    int opened = 0;
    for (int l = 0; l < net.n_line; ++l) {
      if (mask >> l & 1U) {
        z[l] = 0.0;
        ++opened;
      }
    }
    if (opts.max_open_lines >= 0 && opened > opts.max_open_lines) continue;
    ++best.nodes_explored;
    SwitchVector sz = SwitchVector::binary(z);
    DispatchSolution sol = solve_dcopf(net, demand, sz, opts.dispatch);
    if (!sol.optimal()) continue;
    if (sol.objective < best.objective - 1e-9 * (1.0 + std::abs(best.objective))) {
      best.objective = sol.objective;
      best.dispatch = std::move(sol);
      best.z = std::move(sz);
    }
  }
  return best;
}

OtsSolution branch_and_bound(const Network& net, const Vec& demand, const OtsOptions& opts, OtsSolution best,
                             Clock::time_point t0) {
  std::vector<Node> open;        // backtrack pool, best-bound selection
  std::vector<Node> dive;        // current depth-first path
  dive.push_back({std::vector<int>(net.n_line, -1), -std::numeric_limits<double>::infinity()});
  bool root = true;
  bool exhausted = false;
  // Economic dispatch ignores the network, so no topology beats it.
  DispatchOptions ed_opts = opts.dispatch;
  ed_opts.quad_regularizer = 0.0;
  const DispatchSolution ed = solve_ed(net, demand, ed_opts);
  const double floor = ed.optimal() ? ed.objective : -std::numeric_limits<double>::infinity();

  auto try_leaf = [&](const std::vector<int>& fixed) {
    Vec z(net.n_line);
    for (int l = 0; l < net.n_line; ++l) z[l] = fixed[l] == 1 ? 1.0 : 0.0;
    SwitchVector sz = SwitchVector::binary(z);
    DispatchSolution sol = solve_dcopf(net, demand, sz, opts.dispatch);
    const double value = sol.objective;
    if (sol.optimal() && value < best.objective - 1e-9 * (1.0 + std::abs(best.objective))) {
      best.objective = value;
      best.dispatch = std::move(sol);
      best.z = std::move(sz);
    }
    return value;
  };

  while (!dive.empty() || !open.empty()) {
    if (best.objective <= floor + prune_slack(best.objective)) break;
    Node node;
    if (!dive.empty()) {
      node = std::move(dive.back());
      dive.pop_back();
    } else {
      auto it = std::min_element(open.begin(), open.end(),
                                 [](const Node& a, const Node& b) { return a.bound < b.bound; });
      node = std::move(*it);
      open.erase(it);
    }
    if (node.bound >= best.objective - prune_slack(best.objective)) continue;
    if (elapsed(t0) > opts.budget.time_limit_s || best.nodes_explored >= opts.budget.node_limit) {
      exhausted = true;
      break;
    }
    ++best.nodes_explored;

    const OtsRelaxation rel = solve_ots_relaxation(net, demand, node.fixed, opts);
    if (root) {
      best.root_bound = rel.status == QpStatus::Optimal ? rel.objective : best.root_bound;
      root = false;
    }
    if (rel.status == QpStatus::Infeasible) continue;

    int free_count = 0;
    for (int v : node.fixed) free_count += v < 0 ? 1 : 0;
    double bound = node.bound;
    int branch_line = -1;
    if (rel.status == QpStatus::Optimal) {
      if (rel.objective >= best.objective - prune_slack(best.objective)) continue;
      bound = rel.objective;
      double closest = 2.0;
      for (int l = 0; l < net.n_line; ++l) {
        if (node.fixed[l] >= 0) continue;
        const double zl = rel.z[l];
        if (std::min(zl, 1.0 - zl) <= 1e-6) continue;
        const double dist = std::abs(zl - 0.5);
        if (dist < closest) {
          closest = dist;
          branch_line = l;
        }
      }
      if (branch_line >= 0) {
        // rounding heuristic for an early incumbent
        std::vector<int> rounded = node.fixed;
        for (int l = 0; l < net.n_line; ++l) {
          if (rounded[l] < 0) rounded[l] = rel.z[l] >= 0.5 ? 1 : 0;
        }
        try_leaf(rounded);
        if (best.objective <= floor + prune_slack(best.objective) ||
            rel.objective >= best.objective - prune_slack(best.objective)) {
          continue;
        }
      }
      if (branch_line < 0) {
        std::vector<int> leaf = node.fixed;
        for (int l = 0; l < net.n_line; ++l) {
          if (leaf[l] < 0) leaf[l] = rel.z[l] >= 0.5 ? 1 : 0;
        }
        // When the rounded point attains the relaxation optimum nothing
        // below this node can do better.
        if (try_leaf(leaf) <= rel.objective + prune_slack(rel.objective) || free_count == 0) continue;
        for (int l = 0; l < net.n_line; ++l) {
          if (node.fixed[l] >= 0) continue;
          const double dist = std::abs(rel.z[l] - 0.5);
          if (dist < closest) {
            closest = dist;
            branch_line = l;
          }
        }
      }
    } else {
      // Relaxation did not converge: keep searching without a bound.
      if (free_count == 0) {
        try_leaf(node.fixed);
        continue;
      }
      for (int l = 0; l < net.n_line; ++l) {
        if (node.fixed[l] < 0) {
          branch_line = l;
          break;
        }
      }
    }

    const int first = rel.status == QpStatus::Optimal && rel.z[branch_line] < 0.5 ? 0 : 1;
    Node preferred{node.fixed, bound};
    preferred.fixed[branch_line] = first;
    Node other{node.fixed, bound};
    other.fixed[branch_line] = 1 - first;
    open.push_back(std::move(other));
    dive.push_back(std::move(preferred));
  }
  best.proved_optimal = !exhausted;
  return best;
}

}  // namespace

OtsSolution solve_ots_exact(const Network& net, const Vec& demand, const OtsOptions& opts) {
  const auto t0 = Clock::now();
  OtsSolution best;
  best.z = SwitchVector::all_closed(net.n_line);
  best.dispatch = solve_dcopf(net, demand, best.z, opts.dispatch);
  if (!best.dispatch.optimal()) {
    fail(ErrorCode::NoIncumbent, fmt::format("all-closed DC-OPF is {}", to_string(best.dispatch.status)));
  }
  best.objective = best.dispatch.objective;
  best.nodes_explored = 0;
  OtsSolution out = opts.mode == OtsMode::Exhaustive ? exhaustive(net, demand, opts, std::move(best), t0)
                                                     : branch_and_bound(net, demand, opts, std::move(best), t0);
  out.seconds = elapsed(t0);
  return out;
}

}  // namespace otsforge

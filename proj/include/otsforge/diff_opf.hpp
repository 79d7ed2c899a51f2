#pragma once

#include "otsforge/dispatch.hpp"

namespace otsforge {

// Jacobian of the KKT residual
//   F(x, lambda, mu) = [Qx + c + A'lambda + G'mu;  Ax - b;  diag(mu)(Gx - h)]
// with respect to w = (x, lambda, mu), at a solved point.
struct KktSystem {
  Mat jacobian;
  // Complementarity rows are divided by mu_i + |slack_i| before solving so
  // active and inactive rows have comparable scale.
  Vec row_scale;
  int n = 0, m_eq = 0, m_ineq = 0;
  double active_tolerance = 1e-7;

  static KktSystem assemble(const QpProblem& p, const Vec& x, const Vec& lambda, const Vec& mu);
  int size() const { return n + m_eq + m_ineq; }
  // Count of rows with both mu_i and slack_i under active_tolerance.
  int weakly_active() const { return weak_; }

 private:
  int weak_ = 0;
};

struct GradResult {
  Vec dcost_dz;  // $/h per unit of z
  double solve_residual = 0.0;
  bool regularized = false;
};

struct DiffOpfOptions {
  DispatchOptions dispatch;
  // Tikhonov weight for the adjoint solve when the Jacobian is singular.
  double tikhonov = 1e-10;
  // Relative KKT residual above which a solution is rejected as not
  // belonging to the given arguments.
  double stale_tolerance = 1e-5;
};

// Relaxed DC-OPF. Throws InfeasibleForward unless the solve is Optimal.
DispatchSolution forward(const Network& net, const Vec& demand, const SwitchVector& z,
                         const DiffOpfOptions& opts = {});

// d(upstream' p_g*)/dz by one adjoint solve. With upstream = dC/dp_g this is
// the gradient of the dispatched generation cost.
GradResult backward(const Network& net, const Vec& demand, const SwitchVector& z, const DispatchSolution& sol,
                    const Vec& upstream, const DiffOpfOptions& opts = {});

// Partial derivatives of F with respect to z_k, one column per line.
Mat kkt_parameter_jacobian(const Network& net, const DispatchSolution& sol, const Vec& row_scale);

// Full dx/dz (n_var x n_line) by forward sensitivity, one solve per line.
// Slow; used to cross-check backward.
Mat solution_jacobian(const Network& net, const Vec& demand, const SwitchVector& z, const DispatchSolution& sol,
                      const DiffOpfOptions& opts = {});

// Analytic cost gradient against central differences of the forward cost.
struct GradCheck {
  Vec analytic;
  Vec numeric;
  double max_rel_error = 0.0;  // componentwise |a - n| / (1 + |a|)
  // min_i |mu_i| + |slack_i| at the base point; small values mean a
  // degenerate active set where the derivative may not exist.
  double complementarity_margin = 0.0;
  double solve_residual = 0.0;
};

GradCheck gradient_check(const Network& net, const Vec& demand, const SwitchVector& z, double step = 1e-5,
                         const DiffOpfOptions& opts = {});

// Randomized fidelity check: each trial scales every bus demand by
// U[1, 1.1] and draws z_l ~ U[0.6, 0.99]. Draws with an infeasible relaxed
// OPF or a margin at or below min_margin are reported but not scored.
struct GradcheckTrial {
  Vec demand;
  Vec z;
  bool feasible = false;
  bool scored = false;
  GradCheck check;
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  int scored = 0;
  double max_rel_error = 0.0;  // over scored trials
  double tolerance = 1e-4;

  bool pass() const { return max_rel_error <= tolerance; }
};

GradcheckReport run_gradcheck(const Network& net, int trials, std::uint64_t seed, double step = 1e-5,
                              double min_margin = 1e-5, const DiffOpfOptions& opts = {});

}  // namespace otsforge

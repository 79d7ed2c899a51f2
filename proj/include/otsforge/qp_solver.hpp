#pragma once

#include <string_view>

#include "otsforge/network.hpp"

namespace otsforge {

// min 1/2 x'Qx + c'x  s.t.  A x = b,  G x <= h
struct QpProblem {
  Mat quad;
  Vec lin;
  Mat eq_mat;
  Vec eq_rhs;
  Mat ineq_mat;
  Vec ineq_rhs;

  int n() const { return static_cast<int>(lin.size()); }
  int m_eq() const { return static_cast<int>(eq_rhs.size()); }
  int m_ineq() const { return static_cast<int>(ineq_rhs.size()); }

  double objective(const Vec& x) const { return 0.5 * x.dot(quad * x) + lin.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string_view to_string(QpStatus s);

struct QpSolution {
  Vec x;
  Vec lambda;  // equality duals
  Vec mu;      // inequality duals, >= 0
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;
  bool polished = false;
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 200;
  double regularization = 1e-8;
  // Re-solve the equality-constrained KKT system on the detected active set
  // once the interior point iterates have converged.
  bool polish = true;
};

// Worst-case violations of the optimality conditions at (x, lambda, mu),
// evaluated directly from the problem data.
struct KktResiduals {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_ineq = 0.0;  // max(0, Gx - h)
  double dual_sign = 0.0;    // max(0, -mu)
  double complementarity = 0.0;
  double duality_gap = 0.0;  // |primal objective - dual objective|
};

KktResiduals kkt_residuals(const QpProblem& p, const Vec& x, const Vec& lambda, const Vec& mu);

// Mehrotra predictor-corrector primal-dual interior point method.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});
QpSolution solve_qp(const QpProblem& problem, double tol, int max_iter);

}  // namespace otsforge

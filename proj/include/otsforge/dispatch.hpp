#pragma once

#include "otsforge/network.hpp"
#include "otsforge/qp_solver.hpp"

namespace otsforge {

enum class SwitchKind { Relaxed, Binary };

// Line statuses: 1 closed, 0 open, anything between is a relaxation.
class SwitchVector {
 public:
  SwitchVector() = default;
  SwitchVector(Vec values, SwitchKind kind);

  static SwitchVector all_closed(int n_line) { return {Vec::Ones(n_line), SwitchKind::Binary}; }
  static SwitchVector relaxed(Vec values) { return {std::move(values), SwitchKind::Relaxed}; }
  static SwitchVector binary(Vec values) { return {std::move(values), SwitchKind::Binary}; }

  const Vec& values() const { return values_; }
  SwitchKind kind() const { return kind_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  int open_count() const;

 private:
  Vec values_;
  SwitchKind kind_ = SwitchKind::Binary;
};

struct DispatchSolution {
  Vec p_g;
  Vec theta;
  double objective = 0.0;  // $/h, including constant cost terms
  Vec lambda;
  Vec mu;
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

// Variable and row offsets of the problem produced by build_dcopf.
// Variables are x = (p_g, theta).
struct DcopfLayout {
  int n_gen, n_bus, n_line;

  int pg(int g) const { return g; }
  int theta(int b) const { return n_gen + b; }
  int n_var() const { return n_gen + n_bus; }

  int balance_row(int b) const { return b; }
  int ref_row() const { return n_bus; }
  int n_eq() const { return n_bus + 1; }

  int flow_upper_row(int l) const { return l; }
  int flow_lower_row(int l) const { return n_line + l; }
  int gen_upper_row(int g) const { return 2 * n_line + g; }
  int gen_lower_row(int g) const { return 2 * n_line + n_gen + g; }
  int theta_upper_row(int b) const { return 2 * n_line + 2 * n_gen + b; }
  int theta_lower_row(int b) const { return 2 * n_line + 2 * n_gen + n_bus + b; }
  int n_ineq() const { return 2 * n_line + 2 * n_gen + 2 * n_bus; }

  static DcopfLayout of(const Network& net) { return {net.n_gen, net.n_bus, net.n_line}; }
};

struct DispatchOptions {
  QpSettings qp;
  // Extra eps * ||p_g||^2 added to the objective (training-time guard for
  // piecewise-constant LP solutions). Reported objectives exclude it.
  double quad_regularizer = 0.0;
};

// Aggregate balance only: min C(p) s.t. sum p = sum demand, generator limits.
DispatchSolution solve_ed(const Network& net, const Vec& demand, const DispatchOptions& opts = {});

// DC-OPF with line statuses z scaling both susceptances and flow limits.
QpProblem build_dcopf(const Network& net, const Vec& demand, const SwitchVector& z, double quad_regularizer = 0.0);

DispatchSolution solve_dcopf(const Network& net, const Vec& demand, const SwitchVector& z,
                             const DispatchOptions& opts = {});

// Residuals of the switching model's constraints for a candidate
// (z, p_g, theta), computed line by line without the QP builder.
struct FeasibilityReport {
  double balance = 0.0;
  double flow = 0.0;
  double gen = 0.0;
  double angle = 0.0;
  double ref_angle = 0.0;
  double binary = 0.0;  // distance of z from {0,1}

  double worst() const;
  bool feasible(double tol = 1e-6) const { return worst() <= tol; }
};

FeasibilityReport check_feasibility(const Network& net, const Vec& demand, const SwitchVector& z, const Vec& p_g,
                                    const Vec& theta);

}  // namespace otsforge

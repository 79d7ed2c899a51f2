#include "otsforge/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <optional>

#include "otsforge/error.hpp"

namespace otsforge {

std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::Unbounded: return "Unbounded";
    case QpStatus::MaxIter: return "MaxIter";
  }
  return "Unknown";
}

KktResiduals kkt_residuals(const QpProblem& p, const Vec& x, const Vec& lambda, const Vec& mu) {
  KktResiduals r;
  Vec stat = p.quad * x + p.lin;
  if (p.m_eq() > 0) stat += p.eq_mat.transpose() * lambda;
  if (p.m_ineq() > 0) stat += p.ineq_mat.transpose() * mu;
  r.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
  if (p.m_eq() > 0) r.primal_eq = (p.eq_mat * x - p.eq_rhs).cwiseAbs().maxCoeff();
  if (p.m_ineq() > 0) {
    const Vec slack = p.ineq_mat * x - p.ineq_rhs;
    r.primal_ineq = std::max(0.0, slack.maxCoeff());
    r.dual_sign = std::max(0.0, -mu.minCoeff());
    r.complementarity = (mu.array() * slack.array()).abs().maxCoeff();
  }
  const double primal = p.objective(x);
  double dual = -0.5 * x.dot(p.quad * x);
  if (p.m_eq() > 0) dual -= p.eq_rhs.dot(lambda);
  if (p.m_ineq() > 0) dual -= p.ineq_rhs.dot(mu);
  r.duality_gap = std::abs(primal - dual);
  return r;
}

namespace {

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
double inf_norm(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// Solves the regularized quasi-definite system K [dx; dy] = rhs and refines
// against the unregularized operator.
class KktSolver {
 public:
  // prefer_exact: try an LU of the unregularized matrix first and keep it
  // when it is well enough conditioned.
  KktSolver(const Mat& h_block, const Mat& a, double reg, bool prefer_exact = false)
      : n_(h_block.rows()), m_(a.rows()) {
    const Eigen::Index dim = n_ + m_;
    exact_.setZero(dim, dim);
    exact_.topLeftCorner(n_, n_) = h_block;
    if (m_ > 0) {
      exact_.topRightCorner(n_, m_) = a.transpose();
      exact_.bottomLeftCorner(m_, n_) = a;
    }
    if (prefer_exact) {
      lu_.compute(exact_);
      if (lu_.rcond() > 1e-13 && lu_.solve(Vec::Ones(dim)).allFinite()) {
        use_lu_ = true;
        return;
      }
    }
    Mat regularized = exact_;
    regularized.diagonal().head(n_).array() += reg;
    regularized.diagonal().tail(m_).array() -= reg;
    ldlt_.compute(regularized);
    use_lu_ = ldlt_.info() != Eigen::Success;
    if (!use_lu_) {
      const Vec probe = ldlt_.solve(Vec::Ones(dim));
      use_lu_ = !probe.allFinite();
    }
    if (use_lu_) {
      lu_.compute(regularized);
      if (!lu_.solve(Vec::Ones(dim)).allFinite()) {
        fail(ErrorCode::NumericalBreakdown, "KKT factorization failed after regularization");
      }
    }
  }

  Vec solve(const Vec& rhs, int refinements = 3) const {
    Vec sol = base_solve(rhs);
    for (int k = 0; k < refinements; ++k) {
      const Vec res = rhs - exact_ * sol;
      if (inf_norm(res) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
      const Vec corr = base_solve(res);
      if (!corr.allFinite()) break;
      sol += corr;
    }
    return sol;
  }

  const Mat& matrix() const { return exact_; }

 private:
  Vec base_solve(const Vec& rhs) const { return use_lu_ ? Vec(lu_.solve(rhs)) : Vec(ldlt_.solve(rhs)); }

  Eigen::Index n_;
  Eigen::Index m_;
  Mat exact_;
  Eigen::LDLT<Mat> ldlt_;
  Eigen::PartialPivLU<Mat> lu_;
  bool use_lu_ = false;
};

// Newton system with the inequality block kept:
//   [Q A' G'; A -reg 0; G 0 -W] with W = S/M.
// Slower than the condensed form; used when that one breaks down.
class AugmentedSolver {
 public:
  AugmentedSolver(const QpProblem& p, const Vec& w, double reg) {
    const Eigen::Index n = p.n(), me = p.m_eq(), mi = p.m_ineq();
    exact_.setZero(n + me + mi, n + me + mi);
    exact_.topLeftCorner(n, n) = p.quad;
    if (me > 0) {
      exact_.block(0, n, n, me) = p.eq_mat.transpose();
      exact_.block(n, 0, me, n) = p.eq_mat;
    }
    exact_.block(0, n + me, n, mi) = p.ineq_mat.transpose();
    exact_.block(n + me, 0, mi, n) = p.ineq_mat;
    exact_.bottomRightCorner(mi, mi).diagonal() = -w;
    Mat shifted = exact_;
    shifted.diagonal().head(n).array() += reg;
    shifted.diagonal().segment(n, me).array() -= reg;
    lu_.compute(shifted);
    if (!lu_.solve(Vec::Ones(exact_.rows())).allFinite()) {
      fail(ErrorCode::NumericalBreakdown, "KKT factorization failed after regularization");
    }
  }

  Vec solve(const Vec& rhs) const {
    Vec sol = lu_.solve(rhs);
    for (int k = 0; k < 3; ++k) {
      const Vec res = rhs - exact_ * sol;
      if (inf_norm(res) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
      const Vec corr = lu_.solve(res);
      if (!corr.allFinite()) break;
      sol += corr;
    }
    return sol;
  }

 private:
  Mat exact_;
  Eigen::PartialPivLU<Mat> lu_;
};

double max_step(const Vec& v, const Vec& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

struct Reduced {
  QpProblem problem;
  std::vector<int> eq_rows;    // original index of each kept row
  std::vector<int> ineq_rows;
  bool trivially_infeasible = false;
};

// Rows whose coefficients are all exactly zero carry no information beyond
// the sign of their right-hand side.
Reduced drop_empty_rows(const QpProblem& p, double tol) {
  Reduced r;
  for (int i = 0; i < p.m_eq(); ++i) {
    if (p.eq_mat.row(i).cwiseAbs().maxCoeff() > 0.0) {
      r.eq_rows.push_back(i);
    } else if (std::abs(p.eq_rhs[i]) > tol) {
      r.trivially_infeasible = true;
    }
  }
  for (int i = 0; i < p.m_ineq(); ++i) {
    if (p.ineq_mat.row(i).cwiseAbs().maxCoeff() > 0.0) {
      r.ineq_rows.push_back(i);
    } else if (p.ineq_rhs[i] < -tol) {
      r.trivially_infeasible = true;
    }
  }
  const int n = p.n();
  r.problem.quad = p.quad;
  r.problem.lin = p.lin;
  r.problem.eq_mat.resize(static_cast<Eigen::Index>(r.eq_rows.size()), n);
  r.problem.eq_rhs.resize(static_cast<Eigen::Index>(r.eq_rows.size()));
  for (std::size_t k = 0; k < r.eq_rows.size(); ++k) {
    r.problem.eq_mat.row(k) = p.eq_mat.row(r.eq_rows[k]);
    r.problem.eq_rhs[k] = p.eq_rhs[r.eq_rows[k]];
  }
  r.problem.ineq_mat.resize(static_cast<Eigen::Index>(r.ineq_rows.size()), n);
  r.problem.ineq_rhs.resize(static_cast<Eigen::Index>(r.ineq_rows.size()));
  for (std::size_t k = 0; k < r.ineq_rows.size(); ++k) {
    r.problem.ineq_mat.row(k) = p.ineq_mat.row(r.ineq_rows[k]);
    r.problem.ineq_rhs[k] = p.ineq_rhs[r.ineq_rows[k]];
  }
  return r;
}

struct Scales {
  double primal_eq;
  double primal_ineq;
  double dual;
};

bool kkt_ok(const QpProblem& p, const Scales& sc, const Vec& x, const Vec& lambda, const Vec& mu, double tol) {
  const KktResiduals r = kkt_residuals(p, x, lambda, mu);
  const double obj_scale = 1.0 + std::abs(p.objective(x));
  return r.stationarity <= tol * sc.dual && r.primal_eq <= tol * sc.primal_eq &&
         r.primal_ineq <= tol * sc.primal_ineq && r.dual_sign <= tol * sc.dual &&
         r.complementarity <= tol * obj_scale && std::isfinite(r.duality_gap);
}

// Equality-constrained re-solve on the active set; accepted only when the
// result satisfies every optimality condition at least as tightly as the
// interior iterate did.
std::optional<QpSolution> polish(const QpProblem& p, const Scales& sc, const QpSolution& ipm, const Vec& slack,
                                 double reg, double tol) {
  const int n = p.n();
  const int me = p.m_eq();
  std::vector<int> active;
  for (int i = 0; i < p.m_ineq(); ++i) {
    if (ipm.mu[i] > slack[i]) active.push_back(i);
  }
  const int ma = static_cast<int>(active.size());
  Mat cons(me + ma, n);
  Vec rhs_cons(me + ma);
  if (me > 0) {
    cons.topRows(me) = p.eq_mat;
    rhs_cons.head(me) = p.eq_rhs;
  }
  for (int k = 0; k < ma; ++k) {
    cons.row(me + k) = p.ineq_mat.row(active[k]);
    rhs_cons[me + k] = p.ineq_rhs[active[k]];
  }
  Vec rhs(n + me + ma);
  rhs.head(n) = -p.lin;
  rhs.tail(me + ma) = rhs_cons;

  const KktResiduals before = kkt_residuals(p, ipm.x, ipm.lambda, ipm.mu);
  const auto accept = [&](const Vec& sol) -> std::optional<QpSolution> {
    if (!sol.allFinite()) return std::nullopt;
    QpSolution out = ipm;
    out.x = sol.head(n);
    out.lambda = sol.segment(n, me);
    out.mu = Vec::Zero(p.m_ineq());
    for (int k = 0; k < ma; ++k) out.mu[active[k]] = sol[n + me + k];
    out.objective = p.objective(out.x);
    out.polished = true;
    const KktResiduals after = kkt_residuals(p, out.x, out.lambda, out.mu);
    const auto worst = [&](const KktResiduals& r) {
      return std::max({r.stationarity / sc.dual, r.primal_eq / sc.primal_eq, r.primal_ineq / sc.primal_ineq,
                       r.dual_sign / sc.dual, r.complementarity / (1.0 + std::abs(p.objective(out.x)))});
    };
    if (!kkt_ok(p, sc, out.x, out.lambda, out.mu, tol) || worst(after) > worst(before)) return std::nullopt;
    return out;
  };

  try {
    KktSolver kkt(p.quad, cons, reg, true);
    if (auto out = accept(kkt.solve(rhs, 10))) return out;
  } catch (const Error&) {
  }
  // Active rows that depend on the equalities (several angle bounds meeting
  // on buses joined by idle lines) make the system singular. x is still
  // pinned; the multipliers are not, so keep the interior ones and apply the
  // smallest correction that restores stationarity.
  Mat full = Mat::Zero(n + me + ma, n + me + ma);
  full.topLeftCorner(n, n) = p.quad;
  full.topRightCorner(n, me + ma) = cons.transpose();
  full.bottomLeftCorner(me + ma, n) = cons;
  const Eigen::CompleteOrthogonalDecomposition<Mat> cod(full);
  Vec sol = cod.solve(rhs);
  sol += cod.solve(rhs - full * sol);
  Vec y(me + ma);
  y.head(me) = ipm.lambda;
  for (int k = 0; k < ma; ++k) y[me + k] = ipm.mu[active[k]];
  const Mat ct = cons.transpose();
  const Eigen::CompleteOrthogonalDecomposition<Mat> dual(ct);
  const Vec x = sol.head(n);
  for (int k = 0; k < 2; ++k) y += dual.solve(Vec(-p.quad * x - p.lin - ct * y));
  sol.tail(me + ma) = y;
  return accept(sol);
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem, double tol, int max_iter) {
  QpSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve_qp(problem, s);
}

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
  const int n_full = problem.n();
  if (problem.quad.rows() != n_full || problem.quad.cols() != n_full ||
      (problem.m_eq() > 0 && problem.eq_mat.cols() != n_full) || problem.eq_mat.rows() != problem.m_eq() ||
      (problem.m_ineq() > 0 && problem.ineq_mat.cols() != n_full) || problem.ineq_mat.rows() != problem.m_ineq()) {
    fail(ErrorCode::DimensionMismatch,
         fmt::format("n={} Q={}x{} A={}x{} b={} G={}x{} h={}", n_full, problem.quad.rows(), problem.quad.cols(),
                     problem.eq_mat.rows(), problem.eq_mat.cols(), problem.m_eq(), problem.ineq_mat.rows(),
                     problem.ineq_mat.cols(), problem.m_ineq()));
  }
  if (!(settings.tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be positive");
  if (n_full > 0 && inf_norm(Mat(problem.quad - problem.quad.transpose())) > 1e-12 * (1.0 + inf_norm(problem.quad))) {
    fail(ErrorCode::InvalidArgument, "quadratic term is not symmetric");
  }

  QpSolution out;
  out.x = Vec::Zero(n_full);
  out.lambda = Vec::Zero(problem.m_eq());
  out.mu = Vec::Zero(problem.m_ineq());

  const Reduced red = drop_empty_rows(problem, settings.tol);
  if (red.trivially_infeasible) {
    out.status = QpStatus::Infeasible;
    return out;
  }
  const QpProblem& p = red.problem;
  const int n = p.n();
  const int me = p.m_eq();
  const int mi = p.m_ineq();
  const double tol = settings.tol;
  const double reg = settings.regularization;

  const Scales sc{1.0 + inf_norm(p.eq_rhs), 1.0 + inf_norm(p.ineq_rhs), 1.0 + inf_norm(p.lin)};

  auto scatter = [&](QpSolution sol) {
    sol.lambda = Vec::Zero(problem.m_eq());
    sol.mu = Vec::Zero(problem.m_ineq());
    return sol;
  };

  Vec x = Vec::Zero(n);
  Vec lambda = Vec::Zero(me);
  Vec mu = Vec::Ones(mi);
  Vec s = Vec::Ones(mi);
  const Mat gt = p.ineq_mat.transpose();

  // Initial point: least-squares fit with unit slack scaling, then shift
  // slacks and duals into the positive orthant.
  {
    Mat h0 = p.quad;
    if (mi > 0) h0 += gt * p.ineq_mat;
    KktSolver kkt(h0, p.eq_mat, reg);
    Vec rhs(n + me);
    rhs.head(n) = -p.lin;
    if (mi > 0) rhs.head(n) += gt * p.ineq_rhs;
    rhs.tail(me) = p.eq_rhs;
    const Vec sol = kkt.solve(rhs);
    x = sol.head(n);
    lambda = sol.tail(me);
    if (mi > 0) {
      s = p.ineq_rhs - p.ineq_mat * x;
      mu = -s;
      const double shift_s = std::max(0.0, -s.minCoeff()) + 1.0;
      const double shift_mu = std::max(0.0, -mu.minCoeff()) + 1.0;
      s.array() += shift_s;
      mu.array() += shift_mu;
      const double sm = s.dot(mu);
      s.array() += 0.5 * sm / mu.sum();
      mu.array() += 0.5 * sm / s.sum();
      // Match the dual scale to the cost data.
      const double dual_floor = inf_norm(p.lin) / std::max(1, mi);
      mu = mu.cwiseMax(dual_floor);
    }
  }

  double best_primal = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    out.iterations = iter;
    const Vec qx = p.quad * x;
    Vec r_d = qx + p.lin;
    if (me > 0) r_d += p.eq_mat.transpose() * lambda;
    if (mi > 0) r_d += gt * mu;
    const Vec r_p = me > 0 ? Vec(p.eq_mat * x - p.eq_rhs) : Vec();
    const Vec r_i = mi > 0 ? Vec(p.ineq_mat * x + s - p.ineq_rhs) : Vec();
    const double gap = mi > 0 ? s.dot(mu) : 0.0;
    const double pobj = 0.5 * x.dot(qx) + p.lin.dot(x);
    const double primal_res = std::max(inf_norm(r_p) / sc.primal_eq, inf_norm(r_i) / sc.primal_ineq);
    const double dual_res = inf_norm(r_d) / sc.dual;

    if (!x.allFinite() || !mu.allFinite() || !lambda.allFinite()) {
      fail(ErrorCode::NumericalBreakdown, "non-finite iterate");
    }

    if (primal_res <= tol && dual_res <= tol && gap <= tol * (1.0 + std::abs(pobj))) {
      QpSolution sol;
      sol.x = x;
      sol.lambda = lambda;
      sol.mu = mu;
      sol.objective = pobj;
      sol.status = QpStatus::Optimal;
      sol.iterations = iter;
      if (settings.polish) {
        if (auto pol = polish(p, sc, sol, s, reg, tol)) sol = *pol;
      }
      out = scatter(sol);
      out.x = sol.x;
      for (std::size_t k = 0; k < red.eq_rows.size(); ++k) out.lambda[red.eq_rows[k]] = sol.lambda[k];
      for (std::size_t k = 0; k < red.ineq_rows.size(); ++k) out.mu[red.ineq_rows[k]] = sol.mu[k];
      return out;
    }
    if (iter == settings.max_iter) break;

    // Farkas certificate: A'lambda + G'mu -> 0 while b'lambda + h'mu < 0.
    {
      double t = 0.0;
      Vec ray = Vec::Zero(n);
      if (me > 0) {
        t -= p.eq_rhs.dot(lambda);
        ray += p.eq_mat.transpose() * lambda;
      }
      if (mi > 0) {
        t -= p.ineq_rhs.dot(mu);
        ray += gt * mu;
      }
      const double dual_mag = std::max(inf_norm(lambda), inf_norm(mu));
      // At any feasible optimum t = x'(Qx + c) <= |A'lambda + G'mu|_inf |x|_1,
      // so a ratio far below 1 certifies an empty feasible set.
      if (t > 0.0 && primal_res > tol && inf_norm(ray) * (1.0 + x.lpNorm<1>()) < 1e-3 * t &&
          dual_mag > 1e3 * sc.dual) {
        out.status = QpStatus::Infeasible;
        return out;
      }
    }
    // Unboundedness: the iterate runs away along a recession direction d
    // with Qd = 0, Ad = 0, Gd <= 0 and c'd < 0.
    if (inf_norm(x) > 1e8 * (sc.primal_eq + sc.primal_ineq)) {
      const Vec dir = x / inf_norm(x);
      const double eps = 1e-6;
      const bool recedes = inf_norm(Vec(p.quad * dir)) <= eps * (1.0 + inf_norm(p.quad)) &&
                           (me == 0 || inf_norm(Vec(p.eq_mat * dir)) <= eps) &&
                           (mi == 0 || (p.ineq_mat * dir).maxCoeff() <= eps) &&
                           p.lin.dot(dir) < -eps * sc.dual;
      if (recedes) {
        out.status = QpStatus::Unbounded;
        out.x = x;
        return out;
      }
    }
    // Stalled primal infeasibility with vanishing complementarity.
    if (primal_res < 0.5 * best_primal) {
      best_primal = primal_res;
      stall = 0;
    } else if (++stall >= 30 && primal_res > 1e-6 && gap / std::max(1, mi) < 1e-6 * (1.0 + std::abs(pobj))) {
      out.status = QpStatus::Infeasible;
      return out;
    }

    const Vec d = mi > 0 ? Vec(mu.cwiseQuotient(s).cwiseMin(1e30)) : Vec();
    Mat h_block = p.quad;
    if (mi > 0) h_block += gt * d.asDiagonal() * p.ineq_mat;
    std::optional<KktSolver> factored;
    std::optional<AugmentedSolver> augmented;
    try {
      factored.emplace(h_block, p.eq_mat, reg);
    } catch (const Error&) {
      // Iterates of an infeasible problem drift until the scaling overflows.
      if (primal_res > 1e-6) {
        out.status = QpStatus::Infeasible;
        return out;
      }
      // Otherwise G'DG has swamped a direction only the regularization
      // pinned down; keep the inequality block explicit instead.
      augmented.emplace(p, s.cwiseQuotient(mu), reg);
    }

    auto direction = [&](const Vec& r_c, Vec& dx, Vec& dl, Vec& ds, Vec& dmu) {
      Vec tmp;
      if (mi > 0) tmp = (-r_c + mu.cwiseProduct(r_i)).cwiseQuotient(s);
      if (augmented) {
        Vec rhs(n + me + mi);
        rhs.head(n) = -r_d;
        if (me > 0) rhs.segment(n, me) = -r_p;
        rhs.tail(mi) = -(-r_c + mu.cwiseProduct(r_i)).cwiseQuotient(mu);
        const Vec sol = augmented->solve(rhs);
        dx = sol.head(n);
        dl = sol.segment(n, me);
        dmu = sol.tail(mi);
        ds = -r_i - p.ineq_mat * dx;
        return;
      }
      Vec rhs(n + me);
      rhs.head(n) = -r_d;
      if (mi > 0) rhs.head(n) -= gt * tmp;
      if (me > 0) rhs.tail(me) = -r_p;
      const Vec sol = factored->solve(rhs);
      dx = sol.head(n);
      dl = sol.tail(me);
      if (mi > 0) {
        const Vec gdx = p.ineq_mat * dx;
        ds = -r_i - gdx;
        dmu = tmp + d.cwiseProduct(gdx);
      }
    };

    Vec dx, dl, ds, dmu;
    if (mi == 0) {
      direction(Vec(), dx, dl, ds, dmu);
      x += dx;
      lambda += dl;
      continue;
    }

    const double mu_avg = gap / mi;
    const Vec rc_aff = s.cwiseProduct(mu);
    direction(rc_aff, dx, dl, ds, dmu);
    const double a_aff = std::min(max_step(s, ds), max_step(mu, dmu));
    const double mu_aff = (s + a_aff * ds).dot(mu + a_aff * dmu) / mi;
    const double sigma = std::pow(std::clamp(mu_aff / mu_avg, 0.0, 1.0), 3);

    const Vec rc = rc_aff + ds.cwiseProduct(dmu) - Vec::Constant(mi, sigma * mu_avg);
    direction(rc, dx, dl, ds, dmu);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(mu, dmu)));

    x += alpha * dx;
    lambda += alpha * dl;
    s += alpha * ds;
    mu += alpha * dmu;
    s = s.cwiseMax(1e-200);
    mu = mu.cwiseMax(1e-200);
  }

  out.status = QpStatus::MaxIter;
  out.x = x;
  return out;
}

}  // namespace otsforge

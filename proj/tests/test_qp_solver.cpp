#include <cmath>
#include <random>

#include "doctest.h"
#include "otsforge/error.hpp"
#include "otsforge/qp_solver.hpp"
#include "support/random_network.hpp"

using namespace otsforge;

namespace {

QpProblem empty_problem(int n) {
  QpProblem p;
  p.quad = Mat::Zero(n, n);
  p.lin = Vec::Zero(n);
  p.eq_mat = Mat::Zero(0, n);
  p.eq_rhs = Vec::Zero(0);
  p.ineq_mat = Mat::Zero(0, n);
  p.ineq_rhs = Vec::Zero(0);
  return p;
}

// Scaled optimality check used throughout: every residual relative to the
// size of the data it involves.
void check_kkt(const QpProblem& p, const QpSolution& s, double tol) {
  REQUIRE(s.status == QpStatus::Optimal);
  const KktResiduals r = kkt_residuals(p, s.x, s.lambda, s.mu);
  const double data = 1.0 + (p.lin.size() ? p.lin.cwiseAbs().maxCoeff() : 0.0);
  const double rhs_scale =
      1.0 + std::max(p.eq_rhs.size() ? p.eq_rhs.cwiseAbs().maxCoeff() : 0.0,
                     p.ineq_rhs.size() ? p.ineq_rhs.cwiseAbs().maxCoeff() : 0.0);
  CHECK(r.stationarity <= tol * data);
  CHECK(r.primal_eq <= tol * rhs_scale);
  CHECK(r.primal_ineq <= tol * rhs_scale);
  CHECK(r.dual_sign <= tol * data);
  CHECK(r.complementarity <= tol * (1.0 + std::abs(s.objective)));
  CHECK(r.duality_gap <= 10 * tol * (1.0 + std::abs(s.objective)));
}

}  // namespace

TEST_CASE("single lower bound: min x^2 s.t. x >= 1") {
  QpProblem p = empty_problem(1);
  p.quad(0, 0) = 2.0;
  p.ineq_mat = Mat::Constant(1, 1, -1.0);
  p.ineq_rhs = Vec::Constant(1, -1.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.mu[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-9));
  check_kkt(p, s, 1e-8);
}

TEST_CASE("dependent active set is still polished to an exact vertex") {
  // x0 <= 1, x1 <= 1 and x0 + x1 <= 2 all bind at (1, 1).
  QpProblem p = empty_problem(2);
  p.quad = 2.0 * Mat::Identity(2, 2);
  p.lin = Vec::Constant(2, -4.0);
  p.ineq_mat = (Mat(3, 2) << 1, 0, 0, 1, 1, 1).finished();
  p.ineq_rhs = (Vec(3) << 1, 1, 2).finished();
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.polished);
  CHECK(std::abs(s.x[0] - 1.0) <= 1e-13);
  CHECK(std::abs(s.x[1] - 1.0) <= 1e-13);
  CHECK(s.mu.minCoeff() >= 0.0);
  check_kkt(p, s, 1e-12);
}

TEST_CASE("unconstrained vertex: min (x-2)^2") {
  QpProblem p = empty_problem(1);
  p.quad(0, 0) = 2.0;
  p.lin[0] = -4.0;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(2.0).epsilon(1e-12));
  // objective excludes the constant +4
  CHECK(s.objective + 4.0 == doctest::Approx(0.0));
}

TEST_CASE("contradictory bounds are infeasible") {
  QpProblem p = empty_problem(1);
  p.quad(0, 0) = 2.0;
  p.ineq_mat = (Mat(2, 1) << 1.0, -1.0).finished();
  p.ineq_rhs = (Vec(2) << 0.0, -1.0).finished();
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("inconsistent equalities are infeasible") {
  QpProblem p = empty_problem(2);
  p.lin << 1.0, 1.0;
  p.eq_mat = (Mat(2, 2) << 1, 1, 1, 1).finished();
  p.eq_rhs = (Vec(2) << 1.0, 2.0).finished();
  p.ineq_mat = Mat::Identity(2, 2) * -1.0;
  p.ineq_rhs = Vec::Zero(2);
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("unbounded linear objective") {
  QpProblem p = empty_problem(1);
  p.lin[0] = -1.0;
  p.ineq_mat = Mat::Constant(1, 1, -1.0);
  p.ineq_rhs = Vec::Zero(1);
  CHECK(solve_qp(p).status == QpStatus::Unbounded);
}

TEST_CASE("zero rows: 0 <= 0 is dropped, 0 <= -1 is infeasible") {
  QpProblem p = empty_problem(1);
  p.quad(0, 0) = 2.0;
  p.ineq_mat = Mat::Zero(2, 1);
  p.ineq_mat(1, 0) = -1.0;
  p.ineq_rhs = (Vec(2) << 0.0, -1.0).finished();
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0));
  CHECK(s.mu[0] == 0.0);
  p.ineq_rhs[0] = -1.0;
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("dimension mismatch is reported") {
  QpProblem p = empty_problem(2);
  p.eq_mat = Mat::Zero(1, 3);
  p.eq_rhs = Vec::Zero(1);
  CHECK_THROWS_AS(solve_qp(p), Error);
  try {
    solve_qp(p);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("random SPD with inactive boxes equals -Q^-1 c") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 7;
    Mat r(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r(i, j) = testing::uniform(rng, -1, 1);
    QpProblem p = empty_problem(n);
    p.quad = r * r.transpose() + Mat::Identity(n, n);
    for (int i = 0; i < n; ++i) p.lin[i] = testing::uniform(rng, -5, 5);
    const Vec expected = -p.quad.ldlt().solve(p.lin);
    const double box = 10.0 * (1.0 + expected.cwiseAbs().maxCoeff());
    p.ineq_mat.resize(2 * n, n);
    p.ineq_mat << Mat::Identity(n, n), -Mat::Identity(n, n);
    p.ineq_rhs = Vec::Constant(2 * n, box);
    const QpSolution s = solve_qp(p);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK((s.x - expected).cwiseAbs().maxCoeff() <= 1e-6);
    check_kkt(p, s, 1e-8);
  }
}

TEST_CASE("random feasible QPs and LPs satisfy KKT and duality invariants") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 6;
    const int me = trial % 3;
    const int mi = 2 * n + trial % 4;
    const bool lp = trial % 2 == 1;
    Vec x0(n);
    for (int i = 0; i < n; ++i) x0[i] = testing::uniform(rng, -1, 1);
    QpProblem p = empty_problem(n);
    if (!lp) {
      Mat r(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r(i, j) = testing::uniform(rng, -1, 1);
      p.quad = r * r.transpose();
    }
    for (int i = 0; i < n; ++i) p.lin[i] = testing::uniform(rng, -3, 3);
    p.eq_mat.resize(me, n);
    for (int i = 0; i < me; ++i)
      for (int j = 0; j < n; ++j) p.eq_mat(i, j) = testing::uniform(rng, -1, 1);
    p.eq_rhs = p.eq_mat * x0;
    // Boxes keep LPs bounded; random cuts are satisfied at x0.
    p.ineq_mat.resize(mi, n);
    p.ineq_rhs.resize(mi);
    p.ineq_mat.topRows(2 * n) << Mat::Identity(n, n), -Mat::Identity(n, n);
    p.ineq_rhs.head(2 * n).setConstant(2.0);
    for (int i = 2 * n; i < mi; ++i) {
      for (int j = 0; j < n; ++j) p.ineq_mat(i, j) = testing::uniform(rng, -1, 1);
      p.ineq_rhs[i] = p.ineq_mat.row(i).dot(x0) + testing::uniform(rng, 0.0, 0.5);
    }
    const QpSolution s = solve_qp(p);
    CAPTURE(trial);
    check_kkt(p, s, 1e-8);
  }
}

TEST_CASE("identical inputs give bit-identical results") {
  std::mt19937_64 rng(3);
  const int n = 6;
  QpProblem p = empty_problem(n);
  Mat r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = testing::uniform(rng, -1, 1);
  p.quad = r * r.transpose();
  for (int i = 0; i < n; ++i) p.lin[i] = testing::uniform(rng, -3, 3);
  p.ineq_mat.resize(2 * n, n);
  p.ineq_mat << Mat::Identity(n, n), -Mat::Identity(n, n);
  p.ineq_rhs = Vec::Constant(2 * n, 0.5);
  const QpSolution a = solve_qp(p);
  const QpSolution b = solve_qp(p);
  CHECK(a.iterations == b.iterations);
  CHECK(a.x == b.x);
  CHECK(a.mu == b.mu);
}

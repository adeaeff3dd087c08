#pragma once

#include <Eigen/Dense>

namespace qcr {

/// Dense convex quadratic program
///
///   min 1/2 x'Hx + g'x   s.t.  A x = b,  G x <= h,  lb <= x <= ub,
///
/// with H positive semidefinite and bound entries allowed to be +-inf.
/// Variables with lb == ub are converted to equality rows internally.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
};

enum class QpStatus { optimal, infeasible, max_iter, numerical_failure };

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 80;
};

struct QpSolution {
  QpStatus status = QpStatus::numerical_failure;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // inequality multipliers, >= 0
  double obj = 0.0;
  int iterations = 0;
};

/// Primal-dual predictor-corrector method. Infeasibility is reported only
/// with a verified Farkas certificate; numerical trouble is surfaced as
/// numerical_failure so callers can fall back safely.
QpSolution solve_qp(const QpProblem& prob, const QpSettings& settings = {});

}  // namespace qcr

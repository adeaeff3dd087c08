#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace qcr {

/// One equality row of a conic program: <A, Z> + a's = b with A symmetric.
/// Inequalities of the source model arrive already slack-converted.
struct ConicConstraint {
  Eigen::MatrixXd A;
  Eigen::VectorXd a;
  double b = 0.0;
};

/// Linear conic program over one dense PSD block Z (order psd_order) and a
/// nonnegative-orthant block s (length nn_count):
///
///   max <C, Z> + c_nn's   s.t.  <A_k, Z> + a_k's = b_k,  Z psd,  s >= 0.
struct ConicProgram {
  int psd_order = 0;
  int nn_count = 0;
  Eigen::MatrixXd C;
  Eigen::VectorXd c_nn;
  std::vector<ConicConstraint> rows;
  /// Columns known to lie in the kernel of every feasible Z (directions v
  /// with v'Zv = 0 forced by the rows, e.g. by squared equalities). The
  /// solver restricts Z to the orthogonal face, which restores a strictly
  /// feasible interior; dual feasibility is certified on that face.
  Eigen::MatrixXd psd_kernel{0, 0};
};

enum class ConicStatus { optimal, max_iter, numerical_failure };

struct ConicIterate {
  int iter = 0;
  double mu = 0.0;
  double obj_primal = 0.0;
  double obj_dual = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double step_primal = 0.0;
  double step_dual = 0.0;
};

struct ConicSolution {
  Eigen::MatrixXd Z;
  Eigen::VectorXd s;
  Eigen::VectorXd dual;  // one multiplier per input row (0 for presolved-out rows)
  double obj_primal = 0.0;
  double obj_dual = 0.0;
  ConicStatus status = ConicStatus::numerical_failure;
  int iterations = 0;
  std::vector<ConicIterate> log;
  std::vector<int> dropped_rows;  // linearly dependent rows removed by presolve
};

struct ConicSettings {
  double tol_gap = 1e-8;
  double tol_psd = 1e-9;
  double tol_nn = 1e-9;
  int max_iter = 200;
  double step_fraction = 0.98;
  double init_scale = 1.0;  // scale of the identity/ones starting point
};

/// Dense primal-dual path-following solve (predictor-corrector with the
/// Z S^-1 scaling). Deterministic: identical inputs produce identical
/// iterate sequences. The dual sign convention makes multipliers of
/// slack-converted inequality rows nonnegative.
ConicSolution solve_conic(const ConicProgram& prog, const ConicSettings& settings = {});

struct KktReport {
  double primal_res = 0.0;  // max |<A_k,Z> + a_k's - b_k| / (1 + max|b|)
  double dual_res = 0.0;    // cone infeasibility of the dual slacks, relative;
                            // measured on the reduced face when a forced kernel is declared
  double comp_gap = 0.0;    // |obj_primal - obj_dual| / (1 + |obj_primal|)
  double z_min_eig = 0.0;
  double s_min = 0.0;
};

/// Recomputes all residuals of a solution from scratch; pure diagnostic.
KktReport check_kkt(const ConicProgram& prog, const ConicSolution& sol);

void write_iterate_log_csv(const ConicSolution& sol, const std::string& path);

}  // namespace qcr

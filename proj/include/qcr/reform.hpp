#pragma once

#include "qcr/bundle.hpp"
#include "qcr/instance.hpp"

#include <map>
#include <string>
#include <vector>

namespace qcr {

struct VarRef {
  enum class Kind { x, y, t, z } kind = Kind::x;
  int i = 0;
  int j = -1;  // y: partner index (j == i on the diagonal); z: multiplied variable
  int k = -1;  // t, z: bit position
};

/// Equivalent concave quadratic program over (x, y, z, t):
/// maximize 1/2 x'Hx + linear'v + constant subject to the original
/// equalities, the binary-decomposition system, and the product envelopes,
/// with x integer and t binary. The quadratic part touches only the x block.
struct ReformulatedMiqp {
  QpInstance source;  // max-normalized instance the reformulation was built from
  bool negated = false;

  double alpha = 0.0;
  Eigen::VectorXd lambda;                      // effective (post-threshold) values
  std::map<std::pair<int, int>, double> beta;  // effective values per pair i < j

  std::vector<VarRef> layout;  // x block first, then y, t, z
  Eigen::MatrixXd hess;        // n x n, on the x block
  Eigen::VectorXd linear;
  double constant = 0.0;

  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  std::vector<std::string> eq_tags;
  Eigen::MatrixXd a_in;  // a_in v <= b_in
  Eigen::VectorXd b_in;
  std::vector<std::string> in_tags;
  Eigen::VectorXd lb, ub;
  std::vector<int> integer_cols;

  int cols() const { return static_cast<int>(layout.size()); }
  double objective_value(const Eigen::VectorXd& v) const;
};

/// Builds the equivalent problem from a dual solution of the max-normalized
/// instance. Multipliers below zero_tol are treated as exactly zero; y, z and
/// t blocks are instantiated only where a surviving multiplier needs them.
/// When u_i = 1 the bit t_i0 is identified with x_i and y_ii is replaced by
/// x_i, so binary instances get no decomposition machinery.
ReformulatedMiqp build_reformulation(const QpInstance& inst, const DualSolution& dual, double zero_tol = 1e-6);

/// Eigenvalue repair: if the x-block Hessian has lambda_max > 1e-8, shifts
/// every lambda_i up by lambda_max (plus margin) and rebuilds, which makes
/// the objective concave.
ReformulatedMiqp ensure_concavity(const ReformulatedMiqp& miqp);

/// The (y, z, t) assignment induced by an integer point: binary digits,
/// bit-products and pair products.
Eigen::VectorXd induced_point(const ReformulatedMiqp& miqp, const IntegerPoint& pt);

struct EquivalenceReport {
  bool constraints_ok = true;
  std::string failed_constraint;  // tag of the first violated family
  bool exact_equal = false;       // structural evaluation, exact integer slacks
  double float_diff = 0.0;        // assembled-objective evaluation
  double float_scale = 1.0;
  bool ok() const { return constraints_ok && exact_equal && float_diff <= 1e-9 * float_scale; }
};

/// Verifies that the reformulated objective agrees with f at a feasible
/// integer point under the induced lift. Throws if the point violates the
/// original equalities or the box.
EquivalenceReport check_equivalence(const QpInstance& inst, const ReformulatedMiqp& miqp, const IntegerPoint& pt);

std::string reformulation_to_json(const ReformulatedMiqp& miqp);

}  // namespace qcr

#pragma once

#include "qcr/conic.hpp"
#include "qcr/instance.hpp"

#include <map>
#include <utility>
#include <vector>

namespace qcr {

/// One dualizable linearization constraint h(X, x) <= 0 on a pair i < j:
///   h = coef_xij X_ij + coef_xi x_i + coef_xj x_j + constant.
/// Family t = 1: X_ij - u_j x_i; t = 2: X_ij - u_i x_j;
/// t = 3: -X_ij + u_j x_i + u_i x_j - u_i u_j; t = 4: -X_ij.
struct LinearizationDescriptor {
  int i = 0;
  int j = 0;
  int t = 0;
  double coef_xij = 0.0;
  double coef_xi = 0.0;
  double coef_xj = 0.0;
  double constant = 0.0;
};

/// Triple key (i, j, t), i < j 0-based, t in {1,..,4}; ordered lexicographically.
struct DescriptorKey {
  int i = 0;
  int j = 0;
  int t = 0;
  friend auto operator<=>(const DescriptorKey&, const DescriptorKey&) = default;
};

using BetaMap = std::map<DescriptorKey, double>;

/// Row indices of the base conic program that carry the named multipliers.
/// For binary variables the two opposing diagonal rows collapse into one
/// equality X_ii = x_i (diag_eq_rows[i]); lam1/lam3 are -1 there, and the
/// equality's free multiplier carries their difference.
struct RowLabels {
  int z00_row = -1;
  std::vector<int> eq_rows;  // original equality rows, one per r
  int sum_sq_row = -1;       // aggregated squared-equality row; -1 when m = 0
  std::vector<int> lam1_rows;
  std::vector<int> lam2_rows;
  std::vector<int> lam3_rows;
  std::vector<int> diag_eq_rows;
};

struct SdpRelaxation {
  ConicProgram base;  // feasible set S with the lifted objective
  std::vector<LinearizationDescriptor> catalog;
  RowLabels rows;
  int n = 0;
  Eigen::VectorXi u;
};

LinearizationDescriptor descriptor(int i, int j, int t, const Eigen::VectorXi& u);

double violation(const LinearizationDescriptor& desc, const Eigen::MatrixXd& X, const Eigen::VectorXd& x);

/// Builds the conic program for the lifted feasible set: top-left pin
/// Z_00 = 1, the original equalities on x, one aggregated squared-equality
/// row, and the three diagonal inequality families, slack-converted. The
/// catalog lists all 4*C(n,2) off-diagonal constraints; none is in the base.
SdpRelaxation build_base_relaxation(const QpInstance& inst);

/// Objective of the base program with every active multiplier dualized in:
/// C <- C - sum beta_t h_t. Returns the program and the constant term that
/// the dualization adds to objective values.
std::pair<ConicProgram, double> dualized_program(const SdpRelaxation& relax, const BetaMap& beta);

/// Splits a solved PSD block into the matrix part X and the vector part x.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> extract_point(const ConicSolution& sol, int n);

}  // namespace qcr

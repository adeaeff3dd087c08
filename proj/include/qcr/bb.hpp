#pragma once

#include "qcr/qp.hpp"
#include "qcr/reform.hpp"

#include <string>

namespace qcr {

struct RelaxationResult {
  QpStatus status = QpStatus::numerical_failure;
  double value = 0.0;  // in the reformulation's max convention
  Eigen::VectorXd point;
};

/// Continuous relaxation of the reformulated problem under node bounds
/// (integrality dropped, fixings applied through lb/ub overrides).
RelaxationResult solve_continuous_relaxation(const ReformulatedMiqp& miqp, const Eigen::VectorXd& lb,
                                             const Eigen::VectorXd& ub, const QpSettings& settings = {});

enum class BbStatus { optimal, time_limit, infeasible };

struct BbReport {
  BbStatus status = BbStatus::infeasible;
  bool has_incumbent = false;
  double best_value = 0.0;  // max convention of the reformulation
  IntegerPoint best_point;
  long long nodes = 0;
  double root_bound = 0.0;
  double root_gap = 0.0;   // 100 |root_bound - best| / |best|
  double final_gap = 0.0;  // 100 |(best - remaining bound) / best| at a limit
};

struct BbSettings {
  double time_limit = 1e15;  // seconds
  long long node_limit = 1'000'000'000;
  QpSettings qp;
  std::string node_log_path;  // CSV when nonempty
};

/// Best-bound branch-and-bound on the integer columns, branching on the
/// variable with fractional part closest to 1/2 (ties toward the lowest
/// column). Requires a concave objective (run ensure_concavity first).
BbReport branch_and_bound(const ReformulatedMiqp& miqp, const BbSettings& settings = {});

}  // namespace qcr

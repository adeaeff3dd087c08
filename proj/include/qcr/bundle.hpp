#pragma once

#include "qcr/conic.hpp"
#include "qcr/relaxation.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace qcr {

/// Affine under-estimator of the dual function, exact at its anchor: both
/// value and subgradient come from one oracle solve at anchor.
struct Minorant {
  Eigen::VectorXd anchor;   // multipliers over the active set at creation
  double value = 0.0;       // dual-function value at the anchor
  Eigen::VectorXd subgrad;  // over the active set
  bool aggregate = false;
};

struct BundleState {
  std::vector<DescriptorKey> active;  // sorted; |active| <= p
  Eigen::VectorXd center;             // current stability center, >= 0
  double center_value = 0.0;
  std::vector<Minorant> bundle;
  double weight = 1.0;  // proximal parameter tau
  int iteration = 0;
};

enum class BundleStatus { converged, max_iter, oracle_failure };

struct HistoryRow {
  int iteration = 0;
  double g_value = 0.0;
  int active_size = 0;
  char step = 'I';  // I initial, D descent, N null, R center re-evaluation
  double predicted_decrease = 0.0;
  ConicStatus oracle_status = ConicStatus::optimal;
};

/// Final multipliers of the partial dual: the scalar for the aggregated
/// squared-equality row, the combined diagonal vector, and the aggregated
/// off-diagonal map completed by zeros outside the final active set.
struct DualSolution {
  double alpha = 0.0;
  Eigen::VectorXd lambda;                      // lambda_i = -l1_i - l2_i + l3_i
  std::map<std::pair<int, int>, double> beta;  // b1 + b2 - b3 - b4 per pair, nonzeros only
  double dual_value = 0.0;
  std::vector<HistoryRow> history;
  int oracle_calls = 0;
  int iterations = 0;
  BundleStatus status = BundleStatus::converged;
};

struct BundleSettings {
  double tol = 1e-4;          // relative stop on the predicted decrease
  int max_iter = 300;
  double descent_ratio = 0.1;
  double weight_min = 1e-6;
  int bundle_cap = 50;
  double drop_tol = 1e-8;  // multiplier threshold for dropping constraints
  ConicSettings oracle;
};

struct DualEval {
  double value = 0.0;
  Eigen::MatrixXd X;
  Eigen::VectorXd x;
  double alpha = 0.0;
  Eigen::VectorXd lam1, lam2, lam3;  // inner multipliers of the diagonal rows
  ConicStatus status = ConicStatus::optimal;
};

/// One oracle call: dualizes the active multipliers into the objective and
/// maximizes over the base feasible set. The reported value is the inner
/// solve's dual objective, a certified upper bound on the exact maximum.
DualEval evaluate_dual_function(const SdpRelaxation& relax, const BetaMap& beta,
                                const ConicSettings& oracle = {});

struct MasterResult {
  Eigen::VectorXd candidate;
  double predicted_decrease = 0.0;
  Eigen::VectorXd weights;  // convexity weights of the bundle rows
  bool ok = true;
};

/// Proximal master step: minimizes the cutting-plane model plus
/// (tau/2)||beta - center||^2 over beta >= 0 restricted to the active set.
/// predicted_decrease is measured against the model value including the
/// proximal term.
MasterResult master_step(const BundleState& state, double tol);

/// Drops members with multiplier below the threshold that are no longer
/// violated at (X, x); fills with the most violated non-members, by
/// descending violation then lexicographic key, up to capacity p.
std::vector<DescriptorKey> update_active_set(const BundleState& state, const SdpRelaxation& relax,
                                             const Eigen::MatrixXd& X, const Eigen::VectorXd& x, int p,
                                             double drop_tol = 1e-8);

/// Full dual heuristic with cardinality cap p. p = 0 performs the single
/// oracle evaluation at beta = 0 and returns immediately.
DualSolution compute_beta(const SdpRelaxation& relax, int p, const BundleSettings& settings = {});

void write_bundle_log_csv(const DualSolution& dual, const std::string& path);

}  // namespace qcr

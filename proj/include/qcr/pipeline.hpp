#pragma once

#include "qcr/bb.hpp"
#include "qcr/bundle.hpp"
#include "qcr/instance.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qcr {

enum class Mode { automatic, binary, integer_wide };

/// One end-to-end run: relaxation, dual heuristic with cap p = round(delta *
/// 4 C(n,2)), concave reformulation, branch-and-bound. Tolerances default to
/// the mode presets (binary: 1e-4 throughout; integer: 1e-8 phase 1 and
/// 1e-6 zero threshold) and can be pinned individually.
struct RunConfig {
  QpInstance instance;
  double delta = 1.0;
  Mode mode = Mode::automatic;
  std::optional<double> phase1_tol;
  std::optional<double> zero_tol;
  std::optional<double> oracle_tol;
  int bundle_max_iter = 300;
  double time_limit = 1e15;
  long long node_limit = 1'000'000'000;
  std::string log_dir;
  std::string label;  // batch grouping key; defaults to the family part of the name
};

struct RunReport {
  std::string instance_name;
  int n = 0;
  double delta = 1.0;
  int p = 0;
  std::string status;  // optimal | time-limit | infeasible | failed:<phase>
  std::string phase1_status;
  double dual_value = 0.0;  // reported in the instance's own sense
  double root_bound = 0.0;
  double optimum = 0.0;
  bool has_incumbent = false;
  double gap_percent = 0.0;
  bool gap_absolute = false;  // set when the final value is 0
  double final_gap = 0.0;
  double p1_seconds = 0.0;
  double p2_seconds = 0.0;
  double tt_seconds = 0.0;
  long long nodes = 0;
  int bundle_iterations = 0;
  int oracle_calls = 0;
  int beta_support = 0;
};

RunReport run_pipeline(const RunConfig& config);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

struct BatchRow {
  std::string label;
  int total = 0;
  int solved = 0;
  double mean_gap = 0.0;
  double mean_p1 = 0.0;
  double mean_p2 = 0.0;
  double mean_tt = 0.0;
  double mean_nodes = 0.0;
  double min_tt = 0.0;
  double max_tt = 0.0;
};

struct BatchResult {
  std::vector<BatchRow> rows;
  std::vector<RunReport> reports;
};

/// Runs every config and aggregates per label: means of gap, phase times and
/// node counts over the solved runs only, with min/max total time. Rows with
/// unsolved members carry the solved count, mirroring the usual "(i)" table
/// annotation.
BatchResult run_batch(const std::vector<RunConfig>& configs);

std::string batch_to_json(const BatchResult& batch);
std::string batch_to_text(const BatchResult& batch);

std::string dual_solution_to_json(const DualSolution& dual, bool negated);

/// Effective settings after mode resolution (exposed for tests).
struct ResolvedSettings {
  bool binary = false;
  double phase1_tol = 1e-4;
  double zero_tol = 1e-4;
  double oracle_tol = 1e-4;
};
ResolvedSettings resolve_settings(const RunConfig& config);

}  // namespace qcr

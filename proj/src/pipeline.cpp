#include "qcr/pipeline.hpp"

#include "qcr/relaxation.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace qcr {

namespace {

using ordered_json = nlohmann::ordered_json;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string default_label(const std::string& name) {
  const auto pos = name.rfind("-s");
  return pos == std::string::npos ? name : name.substr(0, pos);
}

}  // namespace

ResolvedSettings resolve_settings(const RunConfig& config) {
  ResolvedSettings out;
  out.binary = config.mode == Mode::binary;
  if (config.mode == Mode::automatic)
    out.binary = (config.instance.u.array() == 1).all();
  if (!out.binary) {
    out.phase1_tol = 1e-8;
    out.zero_tol = 1e-6;
    out.oracle_tol = 1e-8;
  }
  if (config.phase1_tol) out.phase1_tol = *config.phase1_tol;
  if (config.zero_tol) out.zero_tol = *config.zero_tol;
  if (config.oracle_tol) out.oracle_tol = *config.oracle_tol;
  return out;
}

RunReport run_pipeline(const RunConfig& config) {
  const ResolvedSettings rs = resolve_settings(config);
  const bool negated = config.instance.sense == Sense::min;
  const double sign = negated ? -1.0 : 1.0;

  RunReport report;
  report.instance_name = config.instance.name;
  report.n = config.instance.n;
  report.delta = config.delta;

  const auto t0 = std::chrono::steady_clock::now();
  const QpInstance work = normalized_max(config.instance);
  SdpRelaxation relax;
  try {
    relax = build_base_relaxation(work);
  } catch (const std::exception& e) {
    report.status = std::string("failed:relaxation: ") + e.what();
    return report;
  }
  report.p = static_cast<int>(std::lround(config.delta * static_cast<double>(relax.catalog.size())));

  BundleSettings bs;
  bs.tol = rs.phase1_tol;
  bs.max_iter = config.bundle_max_iter;
  bs.oracle.tol_gap = rs.oracle_tol;

  DualSolution dual;
  try {
    dual = compute_beta(relax, report.p, bs);
  } catch (const std::exception& e) {
    report.status = std::string("failed:phase1: ") + e.what();
    return report;
  }
  report.p1_seconds = seconds_since(t0);
  report.phase1_status = dual.status == BundleStatus::converged    ? "converged"
                         : dual.status == BundleStatus::max_iter   ? "max-iter"
                                                                   : "oracle-failure";
  report.dual_value = sign * dual.dual_value;
  report.bundle_iterations = dual.iterations;
  report.oracle_calls = dual.oracle_calls;
  report.beta_support = static_cast<int>(dual.beta.size());

  if (!config.log_dir.empty()) {
    write_bundle_log_csv(dual, config.log_dir + "/bundle.csv");
    const ConicSettings oracle_settings{.tol_gap = rs.oracle_tol};
    write_iterate_log_csv(solve_conic(relax.base, oracle_settings), config.log_dir + "/conic.csv");
  }

  const auto t1 = std::chrono::steady_clock::now();
  BbReport bb;
  try {
    const ReformulatedMiqp miqp = ensure_concavity(build_reformulation(config.instance, dual, rs.zero_tol));
    BbSettings bbs;
    bbs.time_limit = config.time_limit;
    bbs.node_limit = config.node_limit;
    if (!config.log_dir.empty()) bbs.node_log_path = config.log_dir + "/nodes.csv";
    bb = branch_and_bound(miqp, bbs);
  } catch (const std::exception& e) {
    report.status = std::string("failed:phase2: ") + e.what();
    report.tt_seconds = seconds_since(t0);
    return report;
  }
  report.p2_seconds = seconds_since(t1);
  report.tt_seconds = report.p1_seconds + report.p2_seconds;

  report.status = bb.status == BbStatus::optimal     ? "optimal"
                  : bb.status == BbStatus::time_limit ? "time-limit"
                                                      : "infeasible";
  report.has_incumbent = bb.has_incumbent;
  report.nodes = bb.nodes;
  report.root_bound = sign * bb.root_bound;
  if (bb.has_incumbent) report.optimum = sign * bb.best_value;
  report.final_gap = bb.final_gap;
  if (bb.has_incumbent) {
    if (bb.best_value != 0.0) {
      report.gap_percent = std::abs(bb.root_bound - bb.best_value) / std::abs(bb.best_value) * 100.0;
    } else {
      report.gap_percent = std::abs(bb.root_bound - bb.best_value);
      report.gap_absolute = true;
    }
  }
  return report;
}

std::string report_to_json(const RunReport& report) {
  ordered_json j;
  j["instance"] = report.instance_name;
  j["n"] = report.n;
  j["delta"] = report.delta;
  j["p"] = report.p;
  j["status"] = report.status;
  j["phase1_status"] = report.phase1_status;
  j["dual_value"] = report.dual_value;
  j["root_bound"] = report.root_bound;
  j["optimum"] = report.optimum;
  j["has_incumbent"] = report.has_incumbent;
  j["gap_percent"] = report.gap_percent;
  j["gap_absolute"] = report.gap_absolute;
  j["final_gap"] = report.final_gap;
  j["nodes"] = report.nodes;
  j["bundle_iterations"] = report.bundle_iterations;
  j["oracle_calls"] = report.oracle_calls;
  j["beta_support"] = report.beta_support;
  j["p1_seconds"] = report.p1_seconds;
  j["p2_seconds"] = report.p2_seconds;
  j["tt_seconds"] = report.tt_seconds;
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  RunReport report;
  report.instance_name = j.at("instance").get<std::string>();
  report.n = j.at("n").get<int>();
  report.delta = j.at("delta").get<double>();
  report.p = j.at("p").get<int>();
  report.status = j.at("status").get<std::string>();
  report.phase1_status = j.at("phase1_status").get<std::string>();
  report.dual_value = j.at("dual_value").get<double>();
  report.root_bound = j.at("root_bound").get<double>();
  report.optimum = j.at("optimum").get<double>();
  report.has_incumbent = j.at("has_incumbent").get<bool>();
  report.gap_percent = j.at("gap_percent").get<double>();
  report.gap_absolute = j.at("gap_absolute").get<bool>();
  report.final_gap = j.at("final_gap").get<double>();
  report.nodes = j.at("nodes").get<long long>();
  report.bundle_iterations = j.at("bundle_iterations").get<int>();
  report.oracle_calls = j.at("oracle_calls").get<int>();
  report.beta_support = j.at("beta_support").get<int>();
  report.p1_seconds = j.at("p1_seconds").get<double>();
  report.p2_seconds = j.at("p2_seconds").get<double>();
  report.tt_seconds = j.at("tt_seconds").get<double>();
  return report;
}

BatchResult run_batch(const std::vector<RunConfig>& configs) {
  BatchResult batch;
  for (const auto& config : configs) batch.reports.push_back(run_pipeline(config));

  std::map<std::string, std::vector<const RunReport*>> groups;
  std::vector<std::string> order;
  for (std::size_t idx = 0; idx < configs.size(); ++idx) {
    const std::string label =
        configs[idx].label.empty() ? default_label(configs[idx].instance.name) : configs[idx].label;
    if (!groups.count(label)) order.push_back(label);
    groups[label].push_back(&batch.reports[idx]);
  }
  for (const std::string& label : order) {
    BatchRow row;
    row.label = label;
    double min_tt = std::numeric_limits<double>::infinity();
    double max_tt = -std::numeric_limits<double>::infinity();
    for (const RunReport* report : groups[label]) {
      ++row.total;
      if (report->status != "optimal") continue;
      ++row.solved;
      row.mean_gap += report->gap_percent;
      row.mean_p1 += report->p1_seconds;
      row.mean_p2 += report->p2_seconds;
      row.mean_tt += report->tt_seconds;
      row.mean_nodes += static_cast<double>(report->nodes);
      min_tt = std::min(min_tt, report->tt_seconds);
      max_tt = std::max(max_tt, report->tt_seconds);
    }
    if (row.solved > 0) {
      row.mean_gap /= row.solved;
      row.mean_p1 /= row.solved;
      row.mean_p2 /= row.solved;
      row.mean_tt /= row.solved;
      row.mean_nodes /= row.solved;
      row.min_tt = min_tt;
      row.max_tt = max_tt;
    }
    batch.rows.push_back(std::move(row));
  }
  return batch;
}

std::string batch_to_json(const BatchResult& batch) {
  ordered_json j;
  j["rows"] = ordered_json::array();
  for (const auto& row : batch.rows) {
    ordered_json r;
    r["label"] = row.label;
    r["total"] = row.total;
    r["solved"] = row.solved;
    r["mean_gap"] = row.mean_gap;
    r["mean_p1"] = row.mean_p1;
    r["mean_p2"] = row.mean_p2;
    r["mean_tt"] = row.mean_tt;
    r["mean_nodes"] = row.mean_nodes;
    r["min_tt"] = row.min_tt;
    r["max_tt"] = row.max_tt;
    j["rows"].push_back(std::move(r));
  }
  j["reports"] = ordered_json::array();
  for (const auto& report : batch.reports) j["reports"].push_back(ordered_json::parse(report_to_json(report)));
  return j.dump(2) + "\n";
}

std::string batch_to_text(const BatchResult& batch) {
  std::string out = "label                          solved  Gap%      P1        P2        Tt        Min       Max       Nodes\n";
  char buf[256];
  for (const auto& row : batch.rows) {
    std::string solved = std::to_string(row.solved);
    if (row.solved != row.total) solved += " (" + std::to_string(row.solved) + "/" + std::to_string(row.total) + ")";
    std::snprintf(buf, sizeof buf, "%-30s %-7s %-9.4f %-9.3f %-9.3f %-9.3f %-9.3f %-9.3f %.1f\n", row.label.c_str(),
                  solved.c_str(), row.mean_gap, row.mean_p1, row.mean_p2, row.mean_tt, row.min_tt, row.max_tt,
                  row.mean_nodes);
    out += buf;
  }
  return out;
}

std::string dual_solution_to_json(const DualSolution& dual, bool negated) {
  ordered_json j;
  j["alpha"] = dual.alpha;
  j["lambda"] = std::vector<double>(dual.lambda.begin(), dual.lambda.end());
  j["beta"] = ordered_json::array();
  for (const auto& [key, value] : dual.beta) j["beta"].push_back({key.first + 1, key.second + 1, value});
  j["dual_value"] = negated ? -dual.dual_value : dual.dual_value;
  j["normalized_for_max"] = true;
  j["status"] = dual.status == BundleStatus::converged  ? "converged"
                : dual.status == BundleStatus::max_iter ? "max-iter"
                                                        : "oracle-failure";
  j["oracle_calls"] = dual.oracle_calls;
  j["iterations"] = dual.iterations;
  j["history"] = ordered_json::array();
  for (const auto& row : dual.history) {
    ordered_json h;
    h["iteration"] = row.iteration;
    h["g_value"] = row.g_value;
    h["active_size"] = row.active_size;
    h["step"] = std::string(1, row.step);
    h["predicted_decrease"] = row.predicted_decrease;
    j["history"].push_back(std::move(h));
  }
  return j.dump(2) + "\n";
}

}  // namespace qcr

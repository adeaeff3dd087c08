#include "qcr/bb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace qcr {

namespace {

QpProblem node_problem(const ReformulatedMiqp& miqp) {
  const int cols = miqp.cols();
  QpProblem prob;
  prob.H = Eigen::MatrixXd::Zero(cols, cols);
  prob.H.topLeftCorner(miqp.source.n, miqp.source.n) = -miqp.hess;
  prob.g = -miqp.linear;
  prob.A = miqp.a_eq;
  prob.b = miqp.b_eq;
  prob.G = miqp.a_in;
  prob.h = miqp.b_in;
  return prob;
}

bool integral_data(const QpInstance& inst) {
  for (const auto& [key, value] : inst.q)
    if (value != std::floor(value)) return false;
  for (int i = 0; i < inst.n; ++i)
    if (inst.c[i] != std::floor(inst.c[i])) return false;
  return true;
}

bool feasible_integer_point(const QpInstance& inst, const Eigen::VectorXi& x) {
  for (int i = 0; i < inst.n; ++i)
    if (x[i] < 0 || x[i] > inst.u[i]) return false;
  for (int r = 0; r < inst.m(); ++r) {
    std::int64_t lhs = 0;
    for (int i = 0; i < inst.n; ++i)
      lhs += static_cast<std::int64_t>(inst.a(r, i)) * static_cast<std::int64_t>(x[i]);
    if (lhs != static_cast<std::int64_t>(inst.b[r])) return false;
  }
  return true;
}

// Rounds the fractional x block and, if the equalities break, looks for a
// repair touching at most two coordinates by +-1.
bool round_and_repair(const QpInstance& inst, const Eigen::VectorXd& x_frac, Eigen::VectorXi& out) {
  Eigen::VectorXi x(inst.n);
  for (int i = 0; i < inst.n; ++i)
    x[i] = std::clamp(static_cast<int>(std::lround(x_frac[i])), 0, inst.u[i]);
  if (feasible_integer_point(inst, x)) {
    out = x;
    return true;
  }
  const int deltas[2] = {-1, 1};
  for (int i = 0; i < inst.n; ++i)
    for (int di : deltas) {
      Eigen::VectorXi trial = x;
      trial[i] += di;
      if (feasible_integer_point(inst, trial)) {
        out = trial;
        return true;
      }
    }
  for (int i = 0; i < inst.n; ++i)
    for (int j = i + 1; j < inst.n; ++j)
      for (int di : deltas)
        for (int dj : deltas) {
          Eigen::VectorXi trial = x;
          trial[i] += di;
          trial[j] += dj;
          if (feasible_integer_point(inst, trial)) {
            out = trial;
            return true;
          }
        }
  return false;
}

struct Node {
  long long id = 0;
  int depth = 0;
  double bound = 0.0;
  Eigen::VectorXd lb, ub;
  bool has_solution = false;  // root carries its init-time solve
  RelaxationResult solution;
};

struct NodeOrder {
  bool operator()(const Node& lhs, const Node& rhs) const {
    if (lhs.bound != rhs.bound) return lhs.bound < rhs.bound;  // max-heap on bound
    return lhs.id > rhs.id;                                    // then oldest first
  }
};

}  // namespace

RelaxationResult solve_continuous_relaxation(const ReformulatedMiqp& miqp, const Eigen::VectorXd& lb,
                                             const Eigen::VectorXd& ub, const QpSettings& settings) {
  QpProblem prob = node_problem(miqp);
  prob.lb = lb;
  prob.ub = ub;
  const QpSolution sol = solve_qp(prob, settings);
  RelaxationResult result;
  result.status = sol.status;
  result.point = sol.x;
  result.value = -sol.obj + miqp.constant;
  return result;
}

BbReport branch_and_bound(const ReformulatedMiqp& miqp, const BbSettings& settings) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };
  const int cols = miqp.cols();
  const int n = miqp.source.n;
  const bool integral = integral_data(miqp.source);

  std::ofstream log;
  if (!settings.node_log_path.empty()) {
    log.open(settings.node_log_path);
    log << "node,depth,bound,branch_col,action\n";
  }
  const auto log_node = [&](long long id, int depth, double bound, int col, const char* action) {
    if (log.is_open()) log << id << ',' << depth << ',' << bound << ',' << col << ',' << action << '\n';
  };

  BbReport report;
  const RelaxationResult root = solve_continuous_relaxation(miqp, miqp.lb, miqp.ub, settings.qp);
  if (root.status == QpStatus::infeasible) {
    report.status = BbStatus::infeasible;
    return report;
  }
  if (root.status != QpStatus::optimal)
    throw std::runtime_error("branch_and_bound: root relaxation did not solve");
  report.root_bound = root.value;

  Eigen::VectorXi seed;
  if (round_and_repair(miqp.source, root.point.head(n), seed)) {
    report.has_incumbent = true;
    report.best_value = evaluate_objective(miqp.source, IntegerPoint{seed});
    report.best_point.x = seed;
  }

  const auto prune_threshold = [&] {
    if (!report.has_incumbent) return -std::numeric_limits<double>::infinity();
    return integral ? report.best_value + 0.99 : report.best_value + 1e-6 * (1.0 + std::abs(report.best_value));
  };
  // Bounds are trusted up to 1e-6; the margin is folded into the prune test.
  const auto prunable = [&](double bound) { return bound - 1e-6 <= prune_threshold(); };

  const auto fractional_col = [&](const Eigen::VectorXd& point, double& frac_out) {
    int best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (int col : miqp.integer_cols) {
      const double value = point[col];
      const double frac = value - std::floor(value);
      if (frac <= 1e-6 || frac >= 1.0 - 1e-6) continue;
      const double score = std::abs(frac - 0.5);
      if (score < best_score - 1e-12) {
        best_score = score;
        best = col;
        frac_out = value;
      }
    }
    return best;
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
  long long next_id = 0;
  Node root_node{next_id++, 0, root.value, miqp.lb, miqp.ub, true, root};
  queue.push(std::move(root_node));

  const auto remaining_bound = [&] {
    return queue.empty() ? -std::numeric_limits<double>::infinity() : queue.top().bound;
  };
  const auto finish = [&](BbStatus status, double open_bound) {
    report.status = status;
    if (status == BbStatus::time_limit && report.has_incumbent && report.best_value != 0.0)
      report.final_gap = std::abs((report.best_value - open_bound) / report.best_value) * 100.0;
    else if (status == BbStatus::time_limit)
      report.final_gap = std::numeric_limits<double>::quiet_NaN();
    if (report.has_incumbent)
      report.root_gap = report.best_value != 0.0
                            ? std::abs(report.root_bound - report.best_value) / std::abs(report.best_value) * 100.0
                            : std::abs(report.root_bound - report.best_value);
    return report;
  };

  while (!queue.empty()) {
    if (prunable(queue.top().bound)) break;  // best-bound order: everything left prunes
    if (report.nodes >= settings.node_limit || elapsed() > settings.time_limit)
      return finish(BbStatus::time_limit, remaining_bound());

    Node node = queue.top();
    queue.pop();
    ++report.nodes;

    RelaxationResult rel;
    bool trusted = true;
    if (node.has_solution) {
      rel = std::move(node.solution);
    } else {
      rel = solve_continuous_relaxation(miqp, node.lb, node.ub, settings.qp);
    }
    if (rel.status == QpStatus::infeasible) {
      log_node(node.id, node.depth, node.bound, -1, "infeasible");
      continue;
    }
    if (rel.status != QpStatus::optimal) {
      trusted = false;  // keep the parent bound, branch blindly
      rel.value = node.bound;
    } else {
      rel.value = std::min(rel.value, node.bound);
    }
    if (prunable(rel.value)) {
      log_node(node.id, node.depth, rel.value, -1, "pruned");
      continue;
    }

    int branch_col = -1;
    double branch_value = 0.0;
    if (trusted) {
      branch_col = fractional_col(rel.point, branch_value);
      if (branch_col < 0) {
        Eigen::VectorXi x(n);
        for (int i = 0; i < n; ++i) x[i] = static_cast<int>(std::lround(rel.point[i]));
        if (feasible_integer_point(miqp.source, x)) {
          const double value = evaluate_objective(miqp.source, IntegerPoint{x});
          if (!report.has_incumbent || value > report.best_value) {
            report.has_incumbent = true;
            report.best_value = value;
            report.best_point.x = x;
          }
          log_node(node.id, node.depth, rel.value, -1, "integral");
          continue;
        }
        trusted = false;  // integral relaxation point that fails exact feasibility
      }
    }
    if (!trusted && branch_col < 0) {
      for (int col : miqp.integer_cols)
        if (node.ub[col] - node.lb[col] > 0.5) {
          branch_col = col;
          branch_value = (node.lb[col] + node.ub[col]) / 2.0;
          break;
        }
      if (branch_col < 0) {
        log_node(node.id, node.depth, rel.value, -1, "exhausted");
        continue;
      }
    }

    log_node(node.id, node.depth, rel.value, branch_col, "branched");
    Node down{next_id++, node.depth + 1, rel.value, node.lb, node.ub, false, {}};
    down.ub[branch_col] = std::floor(branch_value);
    Node up{next_id++, node.depth + 1, rel.value, std::move(node.lb), std::move(node.ub), false, {}};
    up.lb[branch_col] = std::floor(branch_value) + 1.0;
    if (down.ub[branch_col] >= down.lb[branch_col]) queue.push(std::move(down));
    if (up.ub[branch_col] >= up.lb[branch_col]) queue.push(std::move(up));
  }

  if (!report.has_incumbent) {
    report.status = BbStatus::infeasible;
    return report;
  }
  return finish(BbStatus::optimal, remaining_bound());
}

}  // namespace qcr

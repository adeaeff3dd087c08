#include "qcr/reform.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace qcr {

namespace {

int bit_count(int u) {
  int bits = 1;
  while ((1 << bits) <= u) ++bits;  // floor(log2 u) + 1
  return bits;
}

struct Assembly {
  const QpInstance& inst;
  double alpha;
  Eigen::VectorXd lambda;
  std::map<std::pair<int, int>, double> beta;
};

ReformulatedMiqp assemble(const Assembly& in, bool negated) {
  const QpInstance& inst = in.inst;
  const int n = inst.n;
  ReformulatedMiqp miqp;
  miqp.source = inst;
  miqp.negated = negated;
  miqp.alpha = in.alpha;
  miqp.lambda = in.lambda;
  miqp.beta = in.beta;

  // Decide which variables exist. A pair route through side a is skipped
  // when u_a = 1: the product envelope below already plays that role.
  std::set<int> diag_y;  // y_ii variables
  for (int i = 0; i < n; ++i)
    if (in.lambda[i] != 0.0 && inst.u[i] > 1) diag_y.insert(i);
  std::vector<std::pair<int, int>> pair_y;
  for (const auto& [key, value] : in.beta)
    if (value != 0.0) pair_y.push_back(key);

  std::set<int> decomposed = diag_y;
  std::vector<std::pair<int, int>> routes;  // (decomposed side, partner)
  for (int i : diag_y) routes.emplace_back(i, i);
  for (const auto& [i, j] : pair_y) {
    if (inst.u[i] > 1) {
      decomposed.insert(i);
      routes.emplace_back(i, j);
    }
    if (inst.u[j] > 1) {
      decomposed.insert(j);
      routes.emplace_back(j, i);
    }
  }
  std::sort(routes.begin(), routes.end());

  // Column layout: x, y (diagonal then pairs), t, z.
  std::map<std::pair<int, int>, int> y_col;
  std::map<std::pair<int, int>, int> t_col;
  std::map<std::array<int, 3>, int> z_col;
  for (int i = 0; i < n; ++i) miqp.layout.push_back({VarRef::Kind::x, i, -1, -1});
  for (int i : diag_y) {
    y_col[{i, i}] = miqp.cols();
    miqp.layout.push_back({VarRef::Kind::y, i, i, -1});
  }
  for (const auto& [i, j] : pair_y) {
    y_col[{i, j}] = miqp.cols();
    miqp.layout.push_back({VarRef::Kind::y, i, j, -1});
  }
  for (int i : decomposed)
    for (int k = 0; k < bit_count(inst.u[i]); ++k) {
      t_col[{i, k}] = miqp.cols();
      miqp.layout.push_back({VarRef::Kind::t, i, -1, k});
    }
  for (const auto& [i, j] : routes)
    for (int k = 0; k < bit_count(inst.u[i]); ++k) {
      z_col[{i, k, j}] = miqp.cols();
      miqp.layout.push_back({VarRef::Kind::z, i, j, k});
    }

  const int cols = miqp.cols();
  miqp.linear = Eigen::VectorXd::Zero(cols);
  miqp.lb = Eigen::VectorXd::Zero(cols);
  miqp.ub = Eigen::VectorXd::Zero(cols);
  for (int col = 0; col < cols; ++col) {
    const VarRef ref = miqp.layout[col];
    switch (ref.kind) {
      case VarRef::Kind::x:
        miqp.ub[col] = static_cast<double>(inst.u[ref.i]);
        break;
      case VarRef::Kind::y:
        miqp.ub[col] = static_cast<double>(inst.u[ref.i]) * static_cast<double>(inst.u[ref.j]);
        break;
      case VarRef::Kind::t:
        miqp.ub[col] = 1.0;
        break;
      case VarRef::Kind::z:
        miqp.ub[col] = static_cast<double>(inst.u[ref.j]);
        break;
    }
  }
  for (int i = 0; i < n; ++i) miqp.integer_cols.push_back(i);
  for (const auto& [key, col] : t_col) miqp.integer_cols.push_back(col);
  std::sort(miqp.integer_cols.begin(), miqp.integer_cols.end());

  // Objective. The x-block quadratic form collects f, the squared
  // equalities, and the lifted multiplier terms; y variables enter linearly.
  const Eigen::MatrixXd ata = inst.m() > 0 ? (inst.a.transpose() * inst.a).eval() : Eigen::MatrixXd::Zero(n, n);
  miqp.hess = 2.0 * (objective_matrix(inst) + in.alpha * ata);
  for (int i = 0; i < n; ++i) miqp.hess(i, i) -= 2.0 * in.lambda[i];
  for (const auto& [key, value] : in.beta) {
    miqp.hess(key.first, key.second) -= value;
    miqp.hess(key.second, key.first) -= value;
  }
  miqp.linear.head(n) = inst.c;
  if (inst.m() > 0) {
    miqp.linear.head(n) -= 2.0 * in.alpha * (inst.a.transpose() * inst.b);
    miqp.constant = in.alpha * inst.b.squaredNorm();
  }
  for (int i = 0; i < n; ++i) {
    if (in.lambda[i] == 0.0) continue;
    if (inst.u[i] > 1)
      miqp.linear[y_col.at({i, i})] += in.lambda[i];
    else
      miqp.linear[i] += in.lambda[i];  // y_ii = x_i for binary variables
  }
  for (const auto& [key, value] : in.beta) miqp.linear[y_col.at(key)] += value;

  // Constraint rows.
  std::vector<Eigen::VectorXd> eq_rows, in_rows;
  std::vector<double> eq_rhs, in_rhs;
  const auto add_eq = [&](const Eigen::VectorXd& row, double rhs, const std::string& tag) {
    eq_rows.push_back(row);
    eq_rhs.push_back(rhs);
    miqp.eq_tags.push_back(tag);
  };
  const auto add_in = [&](const Eigen::VectorXd& row, double rhs, const std::string& tag) {
    in_rows.push_back(row);
    in_rhs.push_back(rhs);
    miqp.in_tags.push_back(tag);
  };

  for (int r = 0; r < inst.m(); ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row.head(n) = inst.a.row(r).transpose();
    add_eq(row, inst.b[r], "equality");
  }
  for (int i : decomposed) {  // x_i = sum 2^k t_ik
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row[i] = 1.0;
    for (int k = 0; k < bit_count(inst.u[i]); ++k) row[t_col.at({i, k})] = -std::pow(2.0, k);
    add_eq(row, 0.0, "bit-decomposition");
  }
  for (const auto& [i, j] : routes) {  // y = sum 2^k z_ikj
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row[y_col.at({std::min(i, j), std::max(i, j)})] = 1.0;
    for (int k = 0; k < bit_count(inst.u[i]); ++k) row[z_col.at({i, k, j})] = -std::pow(2.0, k);
    add_eq(row, 0.0, "bit-coupling");
  }
  for (const auto& [key, col] : z_col) {  // z = t * x_j envelope
    const auto [i, k, j] = key;
    const double uj = static_cast<double>(inst.u[j]);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row[col] = 1.0;
    row[t_col.at({i, k})] = -uj;
    add_in(row, 0.0, "z-cap-bit");  // z <= u_j t
    row.setZero();
    row[col] = 1.0;
    row[j] = -1.0;
    add_in(row, 0.0, "z-cap-partner");  // z <= x_j
    row.setZero();
    row[col] = -1.0;
    row[j] = 1.0;
    row[t_col.at({i, k})] = uj;
    add_in(row, uj, "z-floor");  // z >= x_j - u_j (1 - t)
  }
  for (int i : diag_y) {  // square envelope for y_ii
    const double ui = static_cast<double>(inst.u[i]);
    const int col = y_col.at({i, i});
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row[i] = 1.0;
    row[col] = -1.0;
    add_in(row, 0.0, "square-floor");  // y_ii >= x_i
    row.setZero();
    row[i] = 2.0 * ui;
    row[col] = -1.0;
    add_in(row, ui * ui, "square-tangent");  // y_ii >= 2 u_i x_i - u_i^2
    row.setZero();
    row[col] = 1.0;
    row[i] = -ui;
    add_in(row, 0.0, "square-cap");  // y_ii <= u_i x_i
  }
  for (const auto& [i, j] : pair_y) {  // product envelope for y_ij
    const double ui = static_cast<double>(inst.u[i]);
    const double uj = static_cast<double>(inst.u[j]);
    const int col = y_col.at({i, j});
    Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
    row[col] = 1.0;
    row[i] = -uj;
    add_in(row, 0.0, "product-cap-i");  // y <= u_j x_i
    row.setZero();
    row[col] = 1.0;
    row[j] = -ui;
    add_in(row, 0.0, "product-cap-j");  // y <= u_i x_j
    row.setZero();
    row[col] = -1.0;
    row[i] = uj;
    row[j] = ui;
    add_in(row, ui * uj, "product-floor");  // y >= u_j x_i + u_i x_j - u_i u_j
  }

  miqp.a_eq.resize(static_cast<Eigen::Index>(eq_rows.size()), cols);
  miqp.b_eq.resize(static_cast<Eigen::Index>(eq_rhs.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    miqp.a_eq.row(static_cast<Eigen::Index>(r)) = eq_rows[r].transpose();
    miqp.b_eq[static_cast<Eigen::Index>(r)] = eq_rhs[r];
  }
  miqp.a_in.resize(static_cast<Eigen::Index>(in_rows.size()), cols);
  miqp.b_in.resize(static_cast<Eigen::Index>(in_rhs.size()));
  for (std::size_t r = 0; r < in_rows.size(); ++r) {
    miqp.a_in.row(static_cast<Eigen::Index>(r)) = in_rows[r].transpose();
    miqp.b_in[static_cast<Eigen::Index>(r)] = in_rhs[r];
  }
  return miqp;
}

}  // namespace

double ReformulatedMiqp::objective_value(const Eigen::VectorXd& v) const {
  const int n = source.n;
  return 0.5 * v.head(n).dot(hess * v.head(n)) + linear.dot(v) + constant;
}

ReformulatedMiqp build_reformulation(const QpInstance& inst, const DualSolution& dual, double zero_tol) {
  const QpInstance work = normalized_max(inst);
  validate(work);
  if (dual.lambda.size() != work.n) throw std::invalid_argument("build_reformulation: dual dimension mismatch");

  Assembly in{work, dual.alpha, dual.lambda, dual.beta};
  for (int i = 0; i < work.n; ++i)
    if (std::abs(in.lambda[i]) < zero_tol) in.lambda[i] = 0.0;
  std::erase_if(in.beta, [&](const auto& entry) { return std::abs(entry.second) < zero_tol; });
  return assemble(in, inst.sense == Sense::min);
}

ReformulatedMiqp ensure_concavity(const ReformulatedMiqp& miqp) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(miqp.hess, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("ensure_concavity: eigensolver failed");
  const double lam_max = es.eigenvalues().maxCoeff();
  if (lam_max <= 1e-8) return miqp;
  const double shift = lam_max + 1e-8;
  Assembly in{miqp.source, miqp.alpha, (miqp.lambda.array() + shift).matrix(), miqp.beta};
  return assemble(in, miqp.negated);
}

Eigen::VectorXd induced_point(const ReformulatedMiqp& miqp, const IntegerPoint& pt) {
  if (pt.x.size() != miqp.source.n) throw std::invalid_argument("induced_point: dimension mismatch");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(miqp.cols());
  for (int col = 0; col < miqp.cols(); ++col) {
    const VarRef ref = miqp.layout[col];
    switch (ref.kind) {
      case VarRef::Kind::x:
        v[col] = static_cast<double>(pt.x[ref.i]);
        break;
      case VarRef::Kind::y:
        v[col] = static_cast<double>(pt.x[ref.i]) * static_cast<double>(pt.x[ref.j]);
        break;
      case VarRef::Kind::t:
        v[col] = static_cast<double>((pt.x[ref.i] >> ref.k) & 1);
        break;
      case VarRef::Kind::z:
        v[col] = static_cast<double>((pt.x[ref.i] >> ref.k) & 1) * static_cast<double>(pt.x[ref.j]);
        break;
    }
  }
  return v;
}

EquivalenceReport check_equivalence(const QpInstance& inst, const ReformulatedMiqp& miqp, const IntegerPoint& pt) {
  const QpInstance& work = miqp.source;
  if (pt.x.size() != work.n) throw std::invalid_argument("check_equivalence: dimension mismatch");
  for (int i = 0; i < work.n; ++i)
    if (pt.x[i] < 0 || pt.x[i] > work.u[i])
      throw std::invalid_argument("check_equivalence: point violates the box bounds");
  for (int r = 0; r < work.m(); ++r) {
    std::int64_t lhs = 0;
    for (int i = 0; i < work.n; ++i)
      lhs += static_cast<std::int64_t>(work.a(r, i)) * static_cast<std::int64_t>(pt.x[i]);
    if (lhs != static_cast<std::int64_t>(work.b[r]))
      throw std::invalid_argument("check_equivalence: point violates equality row " + std::to_string(r + 1));
  }

  EquivalenceReport report;
  const Eigen::VectorXd v = induced_point(miqp, pt);
  for (Eigen::Index r = 0; r < miqp.a_eq.rows(); ++r) {
    if (miqp.a_eq.row(r).dot(v) != miqp.b_eq[r]) {
      report.constraints_ok = false;
      report.failed_constraint = miqp.eq_tags[static_cast<std::size_t>(r)];
      break;
    }
  }
  if (report.constraints_ok)
    for (Eigen::Index r = 0; r < miqp.a_in.rows(); ++r) {
      if (miqp.a_in.row(r).dot(v) > miqp.b_in[r]) {
        report.constraints_ok = false;
        report.failed_constraint = miqp.in_tags[static_cast<std::size_t>(r)];
        break;
      }
    }

  // Structural evaluation: every penalty multiplies an exactly-zero integer
  // slack, so the sum collapses to f(x) with no rounding.
  const double f = evaluate_objective(work, pt);
  double structural = f;
  if (work.m() > 0) {
    double squares = 0.0;
    for (int r = 0; r < work.m(); ++r) {
      std::int64_t slack = -static_cast<std::int64_t>(work.b[r]);
      for (int i = 0; i < work.n; ++i)
        slack += static_cast<std::int64_t>(work.a(r, i)) * static_cast<std::int64_t>(pt.x[i]);
      squares += static_cast<double>(slack * slack);
    }
    structural += miqp.alpha * squares;
  }
  // The lift values are read back from v so that the slacks checked are
  // the ones the solver sees; binary diagonals use the x substitution.
  for (int col = work.n; col < miqp.cols(); ++col) {
    const VarRef ref = miqp.layout[col];
    if (ref.kind != VarRef::Kind::y) continue;
    const std::int64_t lift = static_cast<std::int64_t>(v[col]);
    const std::int64_t prod = static_cast<std::int64_t>(pt.x[ref.i]) * pt.x[ref.j];
    const double mult = ref.i == ref.j ? miqp.lambda[ref.i] : miqp.beta.at({ref.i, ref.j});
    structural += mult * static_cast<double>(lift - prod);
  }
  for (int i = 0; i < work.n; ++i) {
    if (miqp.lambda[i] == 0.0 || work.u[i] > 1) continue;
    const std::int64_t xi = pt.x[i];
    structural += miqp.lambda[i] * static_cast<double>(xi - xi * xi);  // y_ii = x_i substitution
  }
  report.exact_equal = structural == f;

  const double assembled = miqp.objective_value(v);
  report.float_diff = std::abs(assembled - f);
  report.float_scale = 1.0 + std::abs(f) + 0.5 * std::abs(v.head(work.n).dot(miqp.hess.cwiseAbs() * v.head(work.n))) +
                       miqp.linear.cwiseAbs().dot(v.cwiseAbs()) + std::abs(miqp.constant);
  return report;
}

std::string reformulation_to_json(const ReformulatedMiqp& miqp) {
  nlohmann::ordered_json j;
  j["instance"] = miqp.source.name;
  j["negated"] = miqp.negated;
  j["alpha"] = miqp.alpha;
  j["lambda"] = std::vector<double>(miqp.lambda.begin(), miqp.lambda.end());
  j["beta"] = nlohmann::ordered_json::array();
  for (const auto& [key, value] : miqp.beta)
    j["beta"].push_back({key.first + 1, key.second + 1, value});
  j["columns"] = nlohmann::ordered_json::array();
  for (const auto& ref : miqp.layout) {
    const char* kind = ref.kind == VarRef::Kind::x   ? "x"
                       : ref.kind == VarRef::Kind::y ? "y"
                       : ref.kind == VarRef::Kind::t ? "t"
                                                     : "z";
    j["columns"].push_back({{"kind", kind}, {"i", ref.i + 1}, {"j", ref.j + 1}, {"k", ref.k}});
  }
  j["constant"] = miqp.constant;
  j["hessian"] = nlohmann::ordered_json::array();
  for (int i = 0; i < miqp.source.n; ++i)
    for (int jj = i; jj < miqp.source.n; ++jj)
      if (miqp.hess(i, jj) != 0.0) j["hessian"].push_back({i + 1, jj + 1, miqp.hess(i, jj)});
  j["linear"] = std::vector<double>(miqp.linear.begin(), miqp.linear.end());
  const auto rows = [](const Eigen::MatrixXd& mat, const Eigen::VectorXd& rhs,
                       const std::vector<std::string>& tags) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      nlohmann::ordered_json row;
      row["tag"] = tags[static_cast<std::size_t>(r)];
      row["coefficients"] = std::vector<double>(mat.row(r).begin(), mat.row(r).end());
      row["rhs"] = rhs[r];
      out.push_back(std::move(row));
    }
    return out;
  };
  j["equalities"] = rows(miqp.a_eq, miqp.b_eq, miqp.eq_tags);
  j["inequalities"] = rows(miqp.a_in, miqp.b_in, miqp.in_tags);
  j["lb"] = std::vector<double>(miqp.lb.begin(), miqp.lb.end());
  j["ub"] = std::vector<double>(miqp.ub.begin(), miqp.ub.end());
  j["integer_columns"] = miqp.integer_cols;
  return j.dump(2) + "\n";
}

}  // namespace qcr

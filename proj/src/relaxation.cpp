#include "qcr/relaxation.hpp"

#include <cmath>
#include <stdexcept>

namespace qcr {

LinearizationDescriptor descriptor(int i, int j, int t, const Eigen::VectorXi& u) {
  if (i < 0 || j >= u.size() || i >= j) throw std::invalid_argument("descriptor: need 0 <= i < j < n");
  const double ui = static_cast<double>(u[i]);
  const double uj = static_cast<double>(u[j]);
  LinearizationDescriptor d;
  d.i = i;
  d.j = j;
  d.t = t;
  switch (t) {
    case 1:
      d.coef_xij = 1.0;
      d.coef_xi = -uj;
      break;
    case 2:
      d.coef_xij = 1.0;
      d.coef_xj = -ui;
      break;
    case 3:
      d.coef_xij = -1.0;
      d.coef_xi = uj;
      d.coef_xj = ui;
      d.constant = -ui * uj;
      break;
    case 4:
      d.coef_xij = -1.0;
      break;
    default:
      throw std::invalid_argument("descriptor: family t must be in {1, 2, 3, 4}");
  }
  return d;
}

double violation(const LinearizationDescriptor& desc, const Eigen::MatrixXd& X, const Eigen::VectorXd& x) {
  if (X.rows() != x.size() || X.cols() != x.size() || desc.j >= x.size())
    throw std::invalid_argument("violation: dimension mismatch");
  return desc.coef_xij * X(desc.i, desc.j) + desc.coef_xi * x[desc.i] + desc.coef_xj * x[desc.j] + desc.constant;
}

namespace {

// Adds w * x_i to a symmetric coefficient matrix on Z = (1 x'; x X).
void add_x_coef(Eigen::MatrixXd& A, int i, double w) {
  A(0, i + 1) += w / 2.0;
  A(i + 1, 0) += w / 2.0;
}

// Adds w * X_ij (or w * X_ii) to a symmetric coefficient matrix.
void add_xx_coef(Eigen::MatrixXd& A, int i, int j, double w) {
  if (i == j) {
    A(i + 1, i + 1) += w;
  } else {
    A(i + 1, j + 1) += w / 2.0;
    A(j + 1, i + 1) += w / 2.0;
  }
}

}  // namespace

SdpRelaxation build_base_relaxation(const QpInstance& inst) {
  validate(inst);
  if (inst.sense != Sense::max)
    throw std::invalid_argument("build_base_relaxation: instance must be normalized to max sense");
  const int n = inst.n;
  const int m = inst.m();
  const int nu = n + 1;

  SdpRelaxation relax;
  relax.n = n;
  relax.u = inst.u;
  ConicProgram& prog = relax.base;
  prog.psd_order = nu;
  int slacks = 0;  // one per inequality row; binary i merges (5) and (7)
  for (int i = 0; i < n; ++i) slacks += inst.u[i] == 1 ? 1 : 3;
  prog.nn_count = slacks;
  prog.c_nn = Eigen::VectorXd::Zero(slacks);

  prog.C = Eigen::MatrixXd::Zero(nu, nu);
  prog.C.bottomRightCorner(n, n) = objective_matrix(inst);
  for (int i = 0; i < n; ++i) add_x_coef(prog.C, i, inst.c[i]);

  const auto make_row = [&](double rhs) {
    ConicConstraint row;
    row.A = Eigen::MatrixXd::Zero(nu, nu);
    row.a = Eigen::VectorXd::Zero(slacks);
    row.b = rhs;
    return row;
  };

  {  // Z_00 = 1
    ConicConstraint row = make_row(1.0);
    row.A(0, 0) = 1.0;
    relax.rows.z00_row = static_cast<int>(prog.rows.size());
    prog.rows.push_back(std::move(row));
  }
  for (int r = 0; r < m; ++r) {  // original equalities on x
    ConicConstraint row = make_row(inst.b[r]);
    for (int i = 0; i < n; ++i) add_x_coef(row.A, i, inst.a(r, i));
    relax.rows.eq_rows.push_back(static_cast<int>(prog.rows.size()));
    prog.rows.push_back(std::move(row));
  }
  if (m > 0) {  // aggregated squared-equality row
    const double b_sq = inst.b.squaredNorm();
    if (!(b_sq < 1e15))
      throw std::invalid_argument("build_base_relaxation: sum of squared right-hand sides overflows");
    ConicConstraint row = make_row(-b_sq);
    const Eigen::MatrixXd ata = inst.a.transpose() * inst.a;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) add_xx_coef(row.A, i, j, i == j ? ata(i, i) : 2.0 * ata(i, j));
    const Eigen::VectorXd atb = inst.a.transpose() * inst.b;
    for (int i = 0; i < n; ++i) add_x_coef(row.A, i, -2.0 * atb[i]);
    relax.rows.sum_sq_row = static_cast<int>(prog.rows.size());
    prog.rows.push_back(std::move(row));
  }
  int slack = 0;
  for (int i = 0; i < n; ++i) {
    const double ui = static_cast<double>(inst.u[i]);
    if (inst.u[i] == 1) {
      // The lower and upper diagonal rows coincide for binary variables;
      // a slack pair would leave the orthant without interior, so the two
      // rows are emitted as the single equality X_ii = x_i.
      ConicConstraint row = make_row(0.0);
      add_xx_coef(row.A, i, i, 1.0);
      add_x_coef(row.A, i, -1.0);
      relax.rows.diag_eq_rows.push_back(static_cast<int>(prog.rows.size()));
      relax.rows.lam1_rows.push_back(-1);
      relax.rows.lam3_rows.push_back(-1);
      prog.rows.push_back(std::move(row));
    } else {
      relax.rows.diag_eq_rows.push_back(-1);
      {  // -X_ii + x_i <= 0
        ConicConstraint row = make_row(0.0);
        add_xx_coef(row.A, i, i, -1.0);
        add_x_coef(row.A, i, 1.0);
        row.a[slack++] = 1.0;
        relax.rows.lam1_rows.push_back(static_cast<int>(prog.rows.size()));
        prog.rows.push_back(std::move(row));
      }
      {  // X_ii - u_i x_i <= 0
        ConicConstraint row = make_row(0.0);
        add_xx_coef(row.A, i, i, 1.0);
        add_x_coef(row.A, i, -ui);
        row.a[slack++] = 1.0;
        relax.rows.lam3_rows.push_back(static_cast<int>(prog.rows.size()));
        prog.rows.push_back(std::move(row));
      }
    }
    {  // -X_ii + 2 u_i x_i - u_i^2 <= 0
      ConicConstraint row = make_row(ui * ui);
      add_xx_coef(row.A, i, i, -1.0);
      add_x_coef(row.A, i, 2.0 * ui);
      row.a[slack++] = 1.0;
      relax.rows.lam2_rows.push_back(static_cast<int>(prog.rows.size()));
      prog.rows.push_back(std::move(row));
    }
  }

  // Each squared equality pins v' Z v = 0 for v = (-b_r; a_r); declaring
  // these directions lets the solver work on the interior-bearing face.
  if (m > 0) {
    prog.psd_kernel.resize(nu, m);
    for (int r = 0; r < m; ++r) {
      prog.psd_kernel(0, r) = -inst.b[r];
      for (int i = 0; i < n; ++i) prog.psd_kernel(i + 1, r) = inst.a(r, i);
    }
  }

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int t = 1; t <= 4; ++t) relax.catalog.push_back(descriptor(i, j, t, inst.u));
  return relax;
}

std::pair<ConicProgram, double> dualized_program(const SdpRelaxation& relax, const BetaMap& beta) {
  ConicProgram prog = relax.base;
  double constant = 0.0;
  for (const auto& [key, mult] : beta) {
    if (mult == 0.0) continue;
    const LinearizationDescriptor d = descriptor(key.i, key.j, key.t, relax.u);
    add_xx_coef(prog.C, d.i, d.j, -mult * d.coef_xij);
    if (d.coef_xi != 0.0) add_x_coef(prog.C, d.i, -mult * d.coef_xi);
    if (d.coef_xj != 0.0) add_x_coef(prog.C, d.j, -mult * d.coef_xj);
    constant -= mult * d.constant;
  }
  return {std::move(prog), constant};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> extract_point(const ConicSolution& sol, int n) {
  Eigen::MatrixXd X = sol.Z.bottomRightCorner(n, n);
  Eigen::VectorXd x = (sol.Z.col(0).tail(n) + sol.Z.row(0).tail(n).transpose()) / 2.0;
  return {std::move(X), std::move(x)};
}

}  // namespace qcr

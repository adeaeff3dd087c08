#include "qcr/conic.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace qcr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Largest alpha in (0, 1] with x + alpha*dx >= 0 componentwise.
double max_step_vec(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
  double alpha = kInf;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
  return alpha;
}

// Largest alpha with X + alpha*dX psd, via lambda_min of L^-1 dX L^-T.
double max_step_psd(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dX) {
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  Eigen::MatrixXd V;
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd& L = llt.matrixL();
    V = L.triangularView<Eigen::Lower>().solve(dX);
    V = L.triangularView<Eigen::Lower>().solve(V.transpose());
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(1e-300);
    const Eigen::MatrixXd Li = lam.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    V = Li * dX * Li.transpose();
  }
  const double lam_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(V, Eigen::EigenvaluesOnly).eigenvalues()(0);
  return lam_min >= 0.0 ? kInf : -1.0 / lam_min;
}

struct Presolved {
  std::vector<ConicConstraint> rows;  // kept rows, scaled to unit coefficient norm
  std::vector<int> orig_index;
  std::vector<double> scale;
  std::vector<int> dropped;
};

// Scales every row to unit coefficient norm and removes numerically
// dependent rows (modified Gram-Schmidt with re-orthogonalization, earliest
// rows kept).
Presolved presolve(const ConicProgram& prog) {
  const int nu = prog.psd_order, q = prog.nn_count;
  const Eigen::Index dim = static_cast<Eigen::Index>(nu) * nu + q;
  Presolved out;
  std::vector<Eigen::VectorXd> basis;
  for (int k = 0; k < static_cast<int>(prog.rows.size()); ++k) {
    const ConicConstraint& row = prog.rows[k];
    Eigen::VectorXd v(dim);
    v.head(nu * nu) = Eigen::Map<const Eigen::VectorXd>(row.A.data(), nu * nu);
    v.tail(q) = row.a;
    const double norm = v.norm();
    if (norm == 0.0) {
      if (row.b != 0.0) throw std::invalid_argument("solve_conic: zero constraint row with nonzero right-hand side");
      out.dropped.push_back(k);
      continue;
    }
    v /= norm;
    Eigen::VectorXd r = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& qv : basis) r -= qv.dot(r) * qv;
    if (r.norm() <= 1e-10) {
      out.dropped.push_back(k);
      continue;
    }
    basis.push_back(r / r.norm());
    ConicConstraint scaled;
    scaled.A = row.A / norm;
    scaled.a = row.a / norm;
    scaled.b = row.b / norm;
    out.rows.push_back(std::move(scaled));
    out.orig_index.push_back(k);
    out.scale.push_back(norm);
  }
  return out;
}

struct Attempt {
  ConicSolution sol;
  bool stalled = false;
};

Attempt run_ipm(const ConicProgram& prog, const Presolved& pre, const ConicSettings& settings, double init_scale) {
  const int nu = prog.psd_order;
  const int q = prog.nn_count;
  const int m = static_cast<int>(pre.rows.size());

  Eigen::VectorXd b(m);
  Eigen::MatrixXd An(m, q);
  for (int k = 0; k < m; ++k) {
    b[k] = pre.rows[k].b;
    An.row(k) = pre.rows[k].a.transpose();
  }
  const double b_scale = 1.0 + max_abs(b);
  double c_scale = 1.0 + max_abs(prog.c_nn);
  if (nu > 0) c_scale = std::max(c_scale, 1.0 + prog.C.cwiseAbs().maxCoeff());

  Eigen::MatrixXd Z = init_scale * Eigen::MatrixXd::Identity(nu, nu);
  Eigen::MatrixXd S = init_scale * Eigen::MatrixXd::Identity(nu, nu);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(q, init_scale);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(q, init_scale);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  Attempt attempt;
  ConicSolution& sol = attempt.sol;

  std::vector<Eigen::MatrixXd> P(m), Q(m);
  Eigen::MatrixXd M(m, m), Rd(nu, nu), Sinv(nu, nu);
  int tiny_steps = 0;

  const auto record = [&](int iter, double mu, double obj_p, double obj_d, double pres, double dres, double ap,
                          double ad) {
    sol.log.push_back({iter, mu, obj_p, obj_d, pres, dres, ap, ad});
  };

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    // Residuals and convergence test.
    Eigen::VectorXd rp(m);
    for (int k = 0; k < m; ++k) rp[k] = b[k] - (pre.rows[k].A.cwiseProduct(Z)).sum() - pre.rows[k].a.dot(s);
    Rd = S + prog.C;  // Rd = S - (sum y_k A_k - C)
    for (int k = 0; k < m; ++k) Rd -= y[k] * pre.rows[k].A;
    Rd = ((Rd + Rd.transpose()) / 2.0).eval();
    Eigen::VectorXd rd = w - (An.transpose() * y - prog.c_nn);

    const double obj_p = (prog.C.cwiseProduct(Z)).sum() + prog.c_nn.dot(s);
    const double obj_d = b.dot(y);
    const double mu = (Z.cwiseProduct(S).sum() + s.dot(w)) / static_cast<double>(nu + q);
    const double prim_res = max_abs(rp) / b_scale;
    const double dual_res = std::max(nu > 0 ? Rd.cwiseAbs().maxCoeff() : 0.0, max_abs(rd)) / c_scale;
    const double rel_gap = std::abs(obj_p - obj_d) / (1.0 + std::abs(obj_p));
    record(iter, mu, obj_p, obj_d, prim_res, dual_res, 0.0, 0.0);

    sol.Z = Z;
    sol.s = s;
    sol.obj_primal = obj_p;
    sol.obj_dual = obj_d;
    sol.iterations = iter;
    sol.dual = Eigen::VectorXd::Zero(prog.rows.size());
    for (int k = 0; k < m; ++k) sol.dual[pre.orig_index[k]] = y[k] / pre.scale[k];

    if (rel_gap <= settings.tol_gap && prim_res <= settings.tol_gap && dual_res <= settings.tol_gap) {
      sol.status = ConicStatus::optimal;
      return attempt;
    }
    if (iter == settings.max_iter) {
      sol.status = ConicStatus::max_iter;
      return attempt;
    }
    if (!std::isfinite(mu) || !std::isfinite(obj_p)) {
      sol.status = ConicStatus::numerical_failure;
      return attempt;
    }

    // Factor S and assemble the Schur complement M_kl = tr(A_k Z A_l S^-1)
    // + a_k' diag(s/w) a_l (symmetric positive definite).
    Eigen::LLT<Eigen::MatrixXd> sllt(S);
    if (sllt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      if (es.eigenvalues()(0) <= 0.0) {
        sol.status = ConicStatus::numerical_failure;
        return attempt;
      }
      Sinv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    } else {
      Sinv = sllt.solve(Eigen::MatrixXd::Identity(nu, nu));
    }
    Sinv = (Sinv + Sinv.transpose()) / 2.0;

    for (int k = 0; k < m; ++k) {
      P[k] = pre.rows[k].A * Z;
      Q[k] = pre.rows[k].A * Sinv;
    }
    const Eigen::VectorXd s_over_w = q > 0 ? (s.array() / w.array()).matrix() : Eigen::VectorXd(0);
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l) {
        double v = (P[k].cwiseProduct(Q[l].transpose())).sum();
        if (q > 0) v += pre.rows[k].a.dot(s_over_w.cwiseProduct(pre.rows[l].a));
        M(k, l) = v;
        M(l, k) = v;
      }

    Eigen::LDLT<Eigen::MatrixXd> mldlt;
    if (m > 0) {
      mldlt.compute(M);
      if (mldlt.info() != Eigen::Success || !mldlt.isPositive()) {
        const double ridge = 1e-13 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
        mldlt.compute(M + ridge * Eigen::MatrixXd::Identity(m, m));
        if (mldlt.info() != Eigen::Success) {
          sol.status = ConicStatus::numerical_failure;
          return attempt;
        }
      }
    }

    const Eigen::MatrixXd ZRdSinv = Z * Rd * Sinv;
    const Eigen::VectorXd srd_over_w = q > 0 ? (s.array() * rd.array() / w.array()).matrix() : Eigen::VectorXd(0);
    Eigen::VectorXd rhs_base(m);
    for (int k = 0; k < m; ++k) {
      double v = -b[k] + (pre.rows[k].A.cwiseProduct(ZRdSinv.transpose())).sum();
      if (q > 0) v += pre.rows[k].a.dot(srd_over_w);
      rhs_base[k] = v;
    }

    const auto solve_direction = [&](double sigma_mu, const Eigen::MatrixXd* corrZ, const Eigen::VectorXd* corr_s,
                                     Eigen::MatrixXd& dZ, Eigen::MatrixXd& dS, Eigen::VectorXd& ds,
                                     Eigen::VectorXd& dw, Eigen::VectorXd& dy) {
      Eigen::VectorXd rhs = rhs_base;
      if (sigma_mu != 0.0)
        for (int k = 0; k < m; ++k) {
          double v = sigma_mu * Q[k].trace();
          if (q > 0) v += sigma_mu * pre.rows[k].a.dot(w.cwiseInverse());
          rhs[k] += v;
        }
      if (corrZ != nullptr)
        for (int k = 0; k < m; ++k) {
          double v = -(pre.rows[k].A.cwiseProduct(corrZ->transpose())).sum();
          if (q > 0) v -= pre.rows[k].a.dot(corr_s->cwiseQuotient(w));
          rhs[k] += v;
        }
      dy = m > 0 ? mldlt.solve(rhs).eval() : Eigen::VectorXd(0);
      dS = -Rd;
      for (int k = 0; k < m; ++k) dS += dy[k] * pre.rows[k].A;
      dw = An.transpose() * dy - rd;
      const Eigen::MatrixXd ZdSSinv = Z * dS * Sinv;
      dZ = -Z - (ZdSSinv + ZdSSinv.transpose()) / 2.0;
      if (sigma_mu != 0.0) dZ += sigma_mu * Sinv;
      if (corrZ != nullptr) dZ -= (*corrZ + corrZ->transpose()) / 2.0;
      ds = -s - s_over_w.cwiseProduct(dw);
      if (q > 0) {
        if (sigma_mu != 0.0) ds += sigma_mu * w.cwiseInverse();
        if (corr_s != nullptr) ds -= corr_s->cwiseQuotient(w);
      }
    };

    // Predictor.
    Eigen::MatrixXd dZa, dSa;
    Eigen::VectorXd dsa, dwa, dya;
    solve_direction(0.0, nullptr, nullptr, dZa, dSa, dsa, dwa, dya);
    const double ap_a = std::min(1.0, settings.step_fraction * std::min(max_step_psd(Z, dZa), max_step_vec(s, dsa)));
    const double ad_a = std::min(1.0, settings.step_fraction * std::min(max_step_psd(S, dSa), max_step_vec(w, dwa)));
    const double mu_aff = ((Z + ap_a * dZa).cwiseProduct(S + ad_a * dSa).sum() +
                           (s + ap_a * dsa).dot(w + ad_a * dwa)) /
                          static_cast<double>(nu + q);
    double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    // Corrector.
    const Eigen::MatrixXd corrZ = dZa * dSa * Sinv;
    const Eigen::VectorXd corr_s = dsa.cwiseProduct(dwa);
    Eigen::MatrixXd dZ, dS;
    Eigen::VectorXd ds, dw, dy;
    solve_direction(sigma * mu, &corrZ, &corr_s, dZ, dS, ds, dw, dy);

    const double ap = std::min(1.0, settings.step_fraction * std::min(max_step_psd(Z, dZ), max_step_vec(s, ds)));
    const double ad = std::min(1.0, settings.step_fraction * std::min(max_step_psd(S, dS), max_step_vec(w, dw)));

    Z += ap * dZ;
    s += ap * ds;
    S += ad * dS;
    w += ad * dw;
    y += ad * dy;
    Z = (Z + Z.transpose()) / 2.0;
    S = (S + S.transpose()) / 2.0;
    sol.log.back().step_primal = ap;
    sol.log.back().step_dual = ad;

    if (std::max(ap, ad) < 1e-4) {
      if (++tiny_steps >= 3) {
        attempt.stalled = true;
        sol.status = ConicStatus::max_iter;
        return attempt;
      }
    } else {
      tiny_steps = 0;
    }
  }
  sol.status = ConicStatus::max_iter;
  return attempt;
}

ConicSolution solve_reduced(const ConicProgram& prog, const ConicSettings& settings) {
  const Presolved pre = presolve(prog);
  Attempt first = run_ipm(prog, pre, settings, settings.init_scale);
  if (first.sol.status == ConicStatus::optimal || !first.stalled) {
    first.sol.dropped_rows = pre.dropped;
    return first.sol;
  }
  // Shifted restart: the plain identity start stalled, retry from a start
  // scaled to the data magnitude.
  double big = 1.0;
  for (const auto& row : prog.rows) big = std::max(big, std::abs(row.b) / std::max(1.0, row.A.norm() + row.a.norm()));
  if (prog.psd_order > 0) big = std::max(big, prog.C.cwiseAbs().maxCoeff());
  Attempt second = run_ipm(prog, pre, settings, 100.0 * big);
  Attempt& pick = second.sol.status == ConicStatus::optimal ? second : first;
  pick.sol.dropped_rows = pre.dropped;
  return pick.sol;
}

// Orthonormal basis of the complement of the declared forced kernel.
Eigen::MatrixXd face_basis(const Eigen::MatrixXd& kernel, int order) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(kernel);
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(order, order);
  return q.rightCols(order - rank);
}

}  // namespace

ConicSolution solve_conic(const ConicProgram& prog, const ConicSettings& settings) {
  if (prog.psd_order < 1) throw std::invalid_argument("solve_conic: psd_order must be >= 1");
  if (prog.C.rows() != prog.psd_order || prog.C.cols() != prog.psd_order)
    throw std::invalid_argument("solve_conic: objective matrix has wrong order");
  if (prog.c_nn.size() != prog.nn_count) throw std::invalid_argument("solve_conic: c_nn has wrong length");
  for (const auto& row : prog.rows) {
    if (row.A.rows() != prog.psd_order || row.A.cols() != prog.psd_order || row.a.size() != prog.nn_count)
      throw std::invalid_argument("solve_conic: constraint row has wrong dimensions");
  }
  if (prog.psd_kernel.size() == 0 || prog.psd_kernel.cols() == 0) return solve_reduced(prog, settings);

  if (prog.psd_kernel.rows() != prog.psd_order)
    throw std::invalid_argument("solve_conic: psd_kernel has wrong row count");
  const Eigen::MatrixXd W = face_basis(prog.psd_kernel, prog.psd_order);
  if (W.cols() == 0) throw std::invalid_argument("solve_conic: forced kernel spans the whole block");
  ConicProgram reduced;
  reduced.psd_order = static_cast<int>(W.cols());
  reduced.nn_count = prog.nn_count;
  reduced.C = W.transpose() * prog.C * W;
  reduced.c_nn = prog.c_nn;
  reduced.rows.reserve(prog.rows.size());
  for (const auto& row : prog.rows) {
    ConicConstraint r;
    r.A = W.transpose() * row.A * W;
    r.A = ((r.A + r.A.transpose()) / 2.0).eval();
    r.a = row.a;
    r.b = row.b;
    reduced.rows.push_back(std::move(r));
  }
  ConicSolution sol = solve_reduced(reduced, settings);
  sol.Z = (W * sol.Z * W.transpose()).eval();
  sol.Z = ((sol.Z + sol.Z.transpose()) / 2.0).eval();
  return sol;
}

KktReport check_kkt(const ConicProgram& prog, const ConicSolution& sol) {
  KktReport report;
  double b_max = 0.0;
  double prim = 0.0;
  for (std::size_t k = 0; k < prog.rows.size(); ++k) {
    const auto& row = prog.rows[k];
    prim = std::max(prim, std::abs((row.A.cwiseProduct(sol.Z)).sum() + row.a.dot(sol.s) - row.b));
    b_max = std::max(b_max, std::abs(row.b));
  }
  report.primal_res = prim / (1.0 + b_max);

  double c_scale = 1.0 + max_abs(prog.c_nn);
  if (prog.psd_order > 0) c_scale = std::max(c_scale, 1.0 + prog.C.cwiseAbs().maxCoeff());
  Eigen::MatrixXd S = -prog.C;
  Eigen::VectorXd w = -prog.c_nn;
  for (std::size_t k = 0; k < prog.rows.size(); ++k) {
    S += sol.dual[k] * prog.rows[k].A;
    w += sol.dual[k] * prog.rows[k].a;
  }
  if (prog.psd_kernel.size() > 0 && prog.psd_kernel.cols() > 0) {
    const Eigen::MatrixXd W = face_basis(prog.psd_kernel, prog.psd_order);
    S = (W.transpose() * S * W).eval();
  }
  const double s_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues()(0);
  double dual_infeas = std::max(0.0, -s_eig);
  if (w.size() > 0) dual_infeas = std::max(dual_infeas, std::max(0.0, -w.minCoeff()));
  report.dual_res = dual_infeas / c_scale;

  const double obj_p = (prog.C.cwiseProduct(sol.Z)).sum() + prog.c_nn.dot(sol.s);
  const double obj_d = [&] {
    double v = 0.0;
    for (std::size_t k = 0; k < prog.rows.size(); ++k) v += sol.dual[k] * prog.rows[k].b;
    return v;
  }();
  report.comp_gap = std::abs(obj_p - obj_d) / (1.0 + std::abs(obj_p));
  report.z_min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sol.Z, Eigen::EigenvaluesOnly).eigenvalues()(0);
  report.s_min = sol.s.size() > 0 ? sol.s.minCoeff() : 0.0;
  return report;
}

void write_iterate_log_csv(const ConicSolution& sol, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write iterate log: " + path);
  out << "iter,mu,obj_primal,obj_dual,primal_res,dual_res,step_primal,step_dual\n";
  for (const auto& it : sol.log)
    out << it.iter << ',' << it.mu << ',' << it.obj_primal << ',' << it.obj_dual << ',' << it.primal_res << ','
        << it.dual_res << ',' << it.step_primal << ',' << it.step_dual << '\n';
}

}  // namespace qcr

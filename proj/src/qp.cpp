#include "qcr/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qcr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void step_limit(const Eigen::VectorXd& x, const Eigen::VectorXd& dx, double& alpha) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
}

}  // namespace

QpSolution solve_qp(const QpProblem& prob, const QpSettings& settings) {
  const int n = static_cast<int>(prob.H.rows());
  if (prob.H.cols() != n || prob.g.size() != n) throw std::invalid_argument("solve_qp: bad objective dimensions");
  if (prob.lb.size() != n || prob.ub.size() != n) throw std::invalid_argument("solve_qp: bad bound dimensions");
  if (prob.A.rows() != prob.b.size() || (prob.A.rows() > 0 && prob.A.cols() != n))
    throw std::invalid_argument("solve_qp: bad equality dimensions");
  if (prob.G.rows() != prob.h.size() || (prob.G.rows() > 0 && prob.G.cols() != n))
    throw std::invalid_argument("solve_qp: bad inequality dimensions");

  QpSolution sol;
  for (int i = 0; i < n; ++i)
    if (prob.lb[i] > prob.ub[i]) {
      sol.status = QpStatus::infeasible;
      return sol;
    }

  // Fold collapsed boxes into equality rows.
  std::vector<int> fixed;
  for (int i = 0; i < n; ++i)
    if (std::isfinite(prob.lb[i]) && prob.ub[i] - prob.lb[i] <= 1e-12) fixed.push_back(i);
  const int me = static_cast<int>(prob.A.rows()) + static_cast<int>(fixed.size());
  Eigen::MatrixXd A(me, n);
  Eigen::VectorXd b(me);
  A.topRows(prob.A.rows()) = prob.A;
  b.head(prob.b.size()) = prob.b;
  Eigen::VectorXd lb = prob.lb, ub = prob.ub;
  for (std::size_t k = 0; k < fixed.size(); ++k) {
    const int i = fixed[k];
    const Eigen::Index r = prob.A.rows() + static_cast<Eigen::Index>(k);
    A.row(r).setZero();
    A(r, i) = 1.0;
    b[r] = (prob.lb[i] + prob.ub[i]) / 2.0;
    lb[i] = -kInf;
    ub[i] = kInf;
  }

  const int mg = static_cast<int>(prob.G.rows());
  const double b_scale = 1.0 + std::max(max_abs(b), max_abs(prob.h));
  const double g_scale = 1.0 + max_abs(prob.g) + (n > 0 ? prob.H.cwiseAbs().maxCoeff() : 0.0);

  // Strictly interior start for the bounded coordinates.
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(lb[i]) && std::isfinite(ub[i]))
      x[i] = (lb[i] + ub[i]) / 2.0;
    else if (std::isfinite(lb[i]))
      x[i] = lb[i] + 1.0;
    else if (std::isfinite(ub[i]))
      x[i] = ub[i] - 1.0;
    else
      x[i] = 0.0;
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(mg), z = Eigen::VectorXd::Ones(mg);
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(n);
  int comp_terms = mg;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(lb[i])) {
      zl[i] = 1.0;
      ++comp_terms;
    }
    if (std::isfinite(ub[i])) {
      zu[i] = 1.0;
      ++comp_terms;
    }
  }
  if (comp_terms == 0) comp_terms = 1;

  const auto dist_lo = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = std::isfinite(lb[i]) ? v[i] - lb[i] : 1.0;
    return d;
  };
  const auto dist_hi = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = std::isfinite(ub[i]) ? ub[i] - v[i] : 1.0;
    return d;
  };

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    const Eigen::VectorXd dl = dist_lo(x), du = dist_hi(x);
    Eigen::VectorXd rd = prob.H * x + prob.g + A.transpose() * y - zl + zu;
    if (mg > 0) rd += prob.G.transpose() * z;
    const Eigen::VectorXd rp = A * x - b;
    const Eigen::VectorXd rg = mg > 0 ? (prob.G * x + s - prob.h).eval() : Eigen::VectorXd(0);
    const double mu = (s.dot(z) + dl.dot(zl) + du.dot(zu)) / comp_terms;
    const double obj = 0.5 * x.dot(prob.H * x) + prob.g.dot(x);

    sol.x = x;
    sol.y = y;
    sol.z = z;
    sol.obj = obj;
    sol.iterations = iter;

    const bool feas = max_abs(rp) <= settings.tol * b_scale && max_abs(rg) <= settings.tol * b_scale;
    if (feas && max_abs(rd) <= settings.tol * g_scale && mu <= settings.tol * (1.0 + std::abs(obj))) {
      sol.status = QpStatus::optimal;
      return sol;
    }
    if (!std::isfinite(mu) || !std::isfinite(obj)) {
      sol.status = QpStatus::numerical_failure;
      return sol;
    }

    // Farkas test for primal infeasibility.
    if (iter >= 5) {
      double rho = std::max({max_abs(y), max_abs(z), max_abs(zl), max_abs(zu)});
      if (rho > 1e4) {
        Eigen::VectorXd lhs = A.transpose() * y - zl + zu;
        if (mg > 0) lhs += prob.G.transpose() * z;
        double rhs = b.dot(y) + prob.h.dot(z);
        for (int i = 0; i < n; ++i) {
          if (std::isfinite(lb[i])) rhs -= lb[i] * zl[i];
          if (std::isfinite(ub[i])) rhs += ub[i] * zu[i];
        }
        if (max_abs(lhs) / rho <= 1e-9 * (1.0 + g_scale) && rhs / rho <= -1e-9 * b_scale) {
          sol.status = QpStatus::infeasible;
          return sol;
        }
      }
    }
    if (iter == settings.max_iter) {
      sol.status = QpStatus::max_iter;
      return sol;
    }

    // K = H + G' diag(z/s) G + diag(zl/dl + zu/du) + delta I
    Eigen::MatrixXd K = prob.H;
    if (mg > 0) K += prob.G.transpose() * (z.array() / s.array()).matrix().asDiagonal() * prob.G;
    for (int i = 0; i < n; ++i) {
      double d = 0.0;
      if (std::isfinite(lb[i])) d += zl[i] / dl[i];
      if (std::isfinite(ub[i])) d += zu[i] / du[i];
      K(i, i) += d;
    }
    const double delta = 1e-11 * (1.0 + K.diagonal().cwiseAbs().maxCoeff());
    K.diagonal().array() += delta;
    Eigen::LLT<Eigen::MatrixXd> kllt(K);
    if (kllt.info() != Eigen::Success) {
      K.diagonal().array() += 1e6 * delta;
      kllt.compute(K);
      if (kllt.info() != Eigen::Success) {
        sol.status = QpStatus::numerical_failure;
        return sol;
      }
    }
    Eigen::MatrixXd KiAt;
    Eigen::LDLT<Eigen::MatrixXd> schur;
    if (me > 0) {
      KiAt = kllt.solve(A.transpose());
      Eigen::MatrixXd Sm = A * KiAt;
      Sm.diagonal().array() += delta;
      schur.compute(Sm);
      if (schur.info() != Eigen::Success) {
        sol.status = QpStatus::numerical_failure;
        return sol;
      }
    }

    const auto solve_kkt = [&](const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, Eigen::VectorXd& dx,
                               Eigen::VectorXd& dy) {
      // [K A'; A 0] [dx; dy] = [rx; ry]
      if (me > 0) {
        dy = schur.solve(A * kllt.solve(rx) - ry);
        dx = kllt.solve(rx - A.transpose() * dy);
      } else {
        dy.resize(0);
        dx = kllt.solve(rx);
      }
    };

    const auto build_dirs = [&](double sigma_mu, const Eigen::VectorXd* cs, const Eigen::VectorXd* cl,
                                const Eigen::VectorXd* cu, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                                Eigen::VectorXd& ds, Eigen::VectorXd& dz, Eigen::VectorXd& dzl,
                                Eigen::VectorXd& dzu) {
      // rc_* are the right-hand sides of the linearized complementarity rows.
      Eigen::VectorXd rc_g(mg), rc_l(n), rc_u(n);
      for (int k = 0; k < mg; ++k) rc_g[k] = sigma_mu - s[k] * z[k] - (cs ? (*cs)[k] : 0.0);
      for (int i = 0; i < n; ++i) {
        rc_l[i] = std::isfinite(lb[i]) ? sigma_mu - dl[i] * zl[i] - (cl ? (*cl)[i] : 0.0) : 0.0;
        rc_u[i] = std::isfinite(ub[i]) ? sigma_mu - du[i] * zu[i] - (cu ? (*cu)[i] : 0.0) : 0.0;
      }
      Eigen::VectorXd rx = -rd;
      if (mg > 0) rx -= prob.G.transpose() * ((rc_g + z.cwiseProduct(rg)).cwiseQuotient(s));
      for (int i = 0; i < n; ++i) {
        if (std::isfinite(lb[i])) rx[i] += rc_l[i] / dl[i];
        if (std::isfinite(ub[i])) rx[i] -= rc_u[i] / du[i];
      }
      solve_kkt(rx, rp, dx, dy);
      ds = mg > 0 ? (-rg - prob.G * dx).eval() : Eigen::VectorXd(0);
      dz.resize(mg);
      for (int k = 0; k < mg; ++k) dz[k] = (rc_g[k] - z[k] * ds[k]) / s[k];
      dzl.resize(n);
      dzu.resize(n);
      for (int i = 0; i < n; ++i) {
        dzl[i] = std::isfinite(lb[i]) ? (rc_l[i] - zl[i] * dx[i]) / dl[i] : 0.0;
        dzu[i] = std::isfinite(ub[i]) ? (rc_u[i] + zu[i] * dx[i]) / du[i] : 0.0;
      }
    };

    const auto step_lengths = [&](const Eigen::VectorXd& dx, const Eigen::VectorXd& ds, const Eigen::VectorXd& dz,
                                  const Eigen::VectorXd& dzl, const Eigen::VectorXd& dzu, double& ap, double& ad) {
      ap = ad = 1.0 / 0.99;
      step_limit(s, ds, ap);
      step_limit(z, dz, ad);
      for (int i = 0; i < n; ++i) {
        if (std::isfinite(lb[i])) {
          if (dx[i] < 0.0) ap = std::min(ap, -dl[i] / dx[i]);
          if (dzl[i] < 0.0) ad = std::min(ad, -zl[i] / dzl[i]);
        }
        if (std::isfinite(ub[i])) {
          if (dx[i] > 0.0) ap = std::min(ap, du[i] / dx[i]);
          if (dzu[i] < 0.0) ad = std::min(ad, -zu[i] / dzu[i]);
        }
      }
      ap = std::min(1.0, 0.99 * ap);
      ad = std::min(1.0, 0.99 * ad);
    };

    Eigen::VectorXd dxa, dya, dsa, dza, dzla, dzua;
    build_dirs(0.0, nullptr, nullptr, nullptr, dxa, dya, dsa, dza, dzla, dzua);
    double apa, ada;
    step_lengths(dxa, dsa, dza, dzla, dzua, apa, ada);
    // Infinite-bound coordinates contribute distance 1 with zero multiplier.
    double mu_aff = (s + apa * dsa).dot(z + ada * dza);
    mu_aff += dist_lo(x + apa * dxa).dot(zl + ada * dzla);
    mu_aff += dist_hi(x + apa * dxa).dot(zu + ada * dzua);
    mu_aff /= comp_terms;
    double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0), 1e-8, 1.0);

    const Eigen::VectorXd cs = dsa.cwiseProduct(dza);
    const Eigen::VectorXd cl = dxa.cwiseProduct(dzla);
    const Eigen::VectorXd cu = (-dxa).cwiseProduct(dzua);
    Eigen::VectorXd dx, dy, ds, dz, dzl, dzu;
    build_dirs(sigma * mu, &cs, &cl, &cu, dx, dy, ds, dz, dzl, dzu);
    double ap, ad;
    step_lengths(dx, ds, dz, dzl, dzu, ap, ad);

    x += ap * dx;
    s += ap * ds;
    y += ad * dy;
    z += ad * dz;
    zl += ad * dzl;
    zu += ad * dzu;
  }
  sol.status = QpStatus::max_iter;
  return sol;
}

}  // namespace qcr

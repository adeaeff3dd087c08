#include "qcr/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace qcr {

namespace {

double affine_value(const Minorant& mnt, const Eigen::VectorXd& beta) {
  return mnt.value + mnt.subgrad.dot(beta - mnt.anchor);
}

}  // namespace

DualEval evaluate_dual_function(const SdpRelaxation& relax, const BetaMap& beta, const ConicSettings& oracle) {
  for (const auto& [key, mult] : beta)
    if (mult < 0.0) throw std::invalid_argument("evaluate_dual_function: multipliers must be nonnegative");
  auto [prog, constant] = dualized_program(relax, beta);
  const ConicSolution sol = solve_conic(prog, oracle);
  if (sol.status == ConicStatus::numerical_failure)
    throw std::runtime_error("evaluate_dual_function: oracle failed on the dualized program");

  DualEval eval;
  eval.status = sol.status;
  eval.value = sol.obj_dual + constant;
  std::tie(eval.X, eval.x) = extract_point(sol, relax.n);
  eval.alpha = relax.rows.sum_sq_row >= 0 ? -sol.dual[relax.rows.sum_sq_row] : 0.0;
  const int n = relax.n;
  eval.lam1.resize(n);
  eval.lam2.resize(n);
  eval.lam3.resize(n);
  for (int i = 0; i < n; ++i) {
    eval.lam2[i] = std::max(0.0, sol.dual[relax.rows.lam2_rows[i]]);
    if (relax.rows.diag_eq_rows[i] >= 0) {
      // Merged binary diagonal: the free equality multiplier carries the
      // difference of the two one-sided multipliers.
      const double y = sol.dual[relax.rows.diag_eq_rows[i]];
      eval.lam1[i] = std::max(0.0, -y);
      eval.lam3[i] = std::max(0.0, y);
    } else {
      eval.lam1[i] = std::max(0.0, sol.dual[relax.rows.lam1_rows[i]]);
      eval.lam3[i] = std::max(0.0, sol.dual[relax.rows.lam3_rows[i]]);
    }
  }
  return eval;
}

MasterResult master_step(const BundleState& state, double tol) {
  const int L = static_cast<int>(state.bundle.size());
  const int d = static_cast<int>(state.active.size());
  if (L == 0) throw std::invalid_argument("master_step: bundle is empty");

  MasterResult result;
  const double tau = state.weight;

  if (d == 0) {
    double model = -std::numeric_limits<double>::infinity();
    for (const auto& mnt : state.bundle) model = std::max(model, mnt.value);
    result.candidate.resize(0);
    result.predicted_decrease = std::max(0.0, state.center_value - model);
    result.weights = Eigen::VectorXd::Zero(L);
    if (L > 0) result.weights[0] = 1.0;
    return result;
  }

  // Affine pieces c_l + s_l' beta.
  Eigen::MatrixXd S(L, d);
  Eigen::VectorXd c(L);
  for (int l = 0; l < L; ++l) {
    S.row(l) = state.bundle[l].subgrad.transpose();
    c[l] = state.bundle[l].value - state.bundle[l].subgrad.dot(state.bundle[l].anchor);
  }

  // Primal-dual interior-point solve of
  //   min v + tau/2 ||beta - center||^2   s.t.  c + S beta <= v 1,  beta >= 0,
  // with the Newton systems reduced to L x L through the bundle rows.
  Eigen::VectorXd beta = (state.center.cwiseMax(0.0).array() + 0.1).matrix();
  Eigen::VectorXd kappa = Eigen::VectorXd::Ones(d);
  double v = (c + S * beta).maxCoeff() + 1.0;
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(L, v) - c - S * beta;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(L, 1.0 / L);

  const double subgrad_scale = 1.0 + S.cwiseAbs().maxCoeff();
  const double r1_scale = subgrad_scale + tau * (1.0 + state.center.cwiseAbs().maxCoeff());
  const double mu_tol =
      std::max(1e-13, std::min(1e-11, tol * 1e-3) * (1.0 + std::abs(state.center_value)));
  bool solved = false;

  for (int iter = 0; iter < 120; ++iter) {
    const Eigen::VectorXd r1 = -(tau * (beta - state.center) + S.transpose() * w - kappa);
    const double rv = 1.0 - w.sum();
    const double mu = (sigma.dot(w) + beta.dot(kappa)) / static_cast<double>(L + d);
    if (!std::isfinite(mu)) break;
    if (mu <= mu_tol && r1.cwiseAbs().maxCoeff() <= 1e-9 * r1_scale && std::abs(rv) <= 1e-11) {
      solved = true;
      break;
    }

    const Eigen::VectorXd W = w.cwiseQuotient(sigma);
    const Eigen::VectorXd D = (tau + kappa.array() / beta.array()).matrix();
    const Eigen::VectorXd Wh = W.cwiseSqrt();
    const double w_sum = W.sum();
    const Eigen::VectorXd what = Wh / std::sqrt(w_sum);
    // U = S' W^(1/2) (I - what what'), so that U U' = S' Wtilde S.
    const Eigen::MatrixXd SW = S.transpose() * Wh.asDiagonal();
    const Eigen::MatrixXd U = SW - (SW * what) * what.transpose();
    const Eigen::VectorXd Dinv = D.cwiseInverse();
    Eigen::MatrixXd small = Eigen::MatrixXd::Identity(L, L) + U.transpose() * Dinv.asDiagonal() * U;
    Eigen::LLT<Eigen::MatrixXd> llt(small);
    if (llt.info() != Eigen::Success) break;

    const auto reduced_solve = [&](const Eigen::VectorXd& r) {
      const Eigen::VectorXd t = Dinv.cwiseProduct(r);
      return (t - Dinv.cwiseProduct(U * llt.solve(U.transpose() * t))).eval();
    };

    const Eigen::VectorXd SW1 = S.transpose() * W;  // S' W 1
    const auto directions = [&](double sigma_mu, const Eigen::VectorXd* corr_w, const Eigen::VectorXd* corr_k,
                                Eigen::VectorXd& db, double& dv, Eigen::VectorXd& dsg, Eigen::VectorXd& dw,
                                Eigen::VectorXd& dk) {
      Eigen::VectorXd rc_w(L), rc_k(d);
      for (int l = 0; l < L; ++l) rc_w[l] = sigma_mu - sigma[l] * w[l] - (corr_w ? (*corr_w)[l] : 0.0);
      for (int i = 0; i < d; ++i) rc_k[i] = sigma_mu - beta[i] * kappa[i] - (corr_k ? (*corr_k)[i] : 0.0);
      const Eigen::VectorXd rcw_over_w = rc_w.cwiseQuotient(w);
      const double denom = w_sum;
      const double rho_v = rv - W.dot(rcw_over_w);
      const Eigen::VectorXd rho_b = r1 + rc_k.cwiseQuotient(beta) - S.transpose() * W.cwiseProduct(rcw_over_w);
      db = reduced_solve(rho_b - SW1 * (rho_v / denom));
      dv = (SW1.dot(db) - rho_v) / denom;
      dw = W.cwiseProduct(S * db - Eigen::VectorXd::Constant(L, dv) + rcw_over_w);
      dsg = (rc_w - sigma.cwiseProduct(dw)).cwiseQuotient(w);
      dk = (rc_k - kappa.cwiseProduct(db)).cwiseQuotient(beta);
    };

    const auto step_len = [&](const Eigen::VectorXd& db, const Eigen::VectorXd& dsg, const Eigen::VectorXd& dw,
                              const Eigen::VectorXd& dk, double& ap, double& ad) {
      ap = ad = 1.0 / 0.995;
      for (int i = 0; i < d; ++i) {
        if (db[i] < 0.0) ap = std::min(ap, -beta[i] / db[i]);
        if (dk[i] < 0.0) ad = std::min(ad, -kappa[i] / dk[i]);
      }
      for (int l = 0; l < L; ++l) {
        if (dsg[l] < 0.0) ap = std::min(ap, -sigma[l] / dsg[l]);
        if (dw[l] < 0.0) ad = std::min(ad, -w[l] / dw[l]);
      }
      ap = std::min(1.0, 0.995 * ap);
      ad = std::min(1.0, 0.995 * ad);
    };

    Eigen::VectorXd dba, dsga, dwa, dka;
    double dva;
    directions(0.0, nullptr, nullptr, dba, dva, dsga, dwa, dka);
    double apa, ada;
    step_len(dba, dsga, dwa, dka, apa, ada);
    const double mu_aff = ((sigma + apa * dsga).dot(w + ada * dwa) + (beta + apa * dba).dot(kappa + ada * dka)) /
                          static_cast<double>(L + d);
    const double sig = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 1e-10, 1.0);

    const Eigen::VectorXd corr_w = dsga.cwiseProduct(dwa);
    const Eigen::VectorXd corr_k = dba.cwiseProduct(dka);
    Eigen::VectorXd db, dsg, dw, dk;
    double dv;
    directions(sig * mu, &corr_w, &corr_k, db, dv, dsg, dw, dk);
    double ap, ad;
    step_len(db, dsg, dw, dk, ap, ad);
    beta += ap * db;
    v += ap * dv;
    sigma += ap * dsg;
    w += ad * dw;
    kappa += ad * dk;
  }

  if (!solved) {
    // Degenerate model; stay at the center.
    result.candidate = state.center;
    result.predicted_decrease = 0.0;
    result.weights = Eigen::VectorXd::Constant(L, 1.0 / L);
    result.ok = false;
    return result;
  }

  result.candidate = beta.cwiseMax(0.0);
  double model = -std::numeric_limits<double>::infinity();
  for (const auto& mnt : state.bundle) model = std::max(model, affine_value(mnt, result.candidate));
  const double prox = 0.5 * tau * (result.candidate - state.center).squaredNorm();
  result.predicted_decrease = std::max(0.0, state.center_value - (model + prox));
  result.weights = w;
  return result;
}

std::vector<DescriptorKey> update_active_set(const BundleState& state, const SdpRelaxation& relax,
                                             const Eigen::MatrixXd& X, const Eigen::VectorXd& x, int p,
                                             double drop_tol) {
  std::set<DescriptorKey> members(state.active.begin(), state.active.end());
  if (p <= 0) return {};

  for (std::size_t c = 0; c < state.active.size(); ++c) {
    const DescriptorKey key = state.active[c];
    const double mult = c < static_cast<std::size_t>(state.center.size()) ? state.center[c] : 0.0;
    const double viol = violation(descriptor(key.i, key.j, key.t, relax.u), X, x);
    if (mult < drop_tol && viol <= 0.0) members.erase(key);
  }

  std::vector<std::pair<double, DescriptorKey>> candidates;
  for (const auto& desc : relax.catalog) {
    const DescriptorKey key{desc.i, desc.j, desc.t};
    if (members.count(key)) continue;
    const double viol = violation(desc, X, x);
    if (viol > 1e-10) candidates.emplace_back(viol, key);
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& lhs, const auto& rhs) {
    if (lhs.first != rhs.first) return lhs.first > rhs.first;
    return lhs.second < rhs.second;
  });
  for (const auto& [viol, key] : candidates) {
    if (static_cast<int>(members.size()) >= p) break;
    members.insert(key);
  }
  return {members.begin(), members.end()};
}

namespace {

BetaMap to_map(const std::vector<DescriptorKey>& active, const Eigen::VectorXd& values) {
  BetaMap map;
  for (std::size_t c = 0; c < active.size(); ++c)
    if (values[c] != 0.0) map[active[c]] = values[c];
  return map;
}

Eigen::VectorXd subgrad_at(const std::vector<DescriptorKey>& active, const SdpRelaxation& relax,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(active.size());
  for (std::size_t c = 0; c < active.size(); ++c) {
    const DescriptorKey key = active[c];
    g[c] = -violation(descriptor(key.i, key.j, key.t, relax.u), X, x);
  }
  return g;
}

// Re-expresses every minorant and the center on a new active set:
// added coordinates are zero-padded, removed ones are folded into the
// anchored value. Returns true if a removed center coordinate was nonzero.
bool reindex(BundleState& state, const std::vector<DescriptorKey>& next) {
  std::map<DescriptorKey, int> old_pos;
  for (std::size_t c = 0; c < state.active.size(); ++c) old_pos[state.active[c]] = static_cast<int>(c);
  std::set<DescriptorKey> kept(next.begin(), next.end());

  bool lost_mass = false;
  for (std::size_t c = 0; c < state.active.size(); ++c)
    if (!kept.count(state.active[c]) && state.center[c] != 0.0) lost_mass = true;

  const int nd = static_cast<int>(next.size());
  Eigen::VectorXd center = Eigen::VectorXd::Zero(nd);
  for (int c = 0; c < nd; ++c) {
    auto it = old_pos.find(next[c]);
    if (it != old_pos.end()) center[c] = state.center[it->second];
  }
  for (auto& mnt : state.bundle) {
    Eigen::VectorXd anchor = Eigen::VectorXd::Zero(nd), sub = Eigen::VectorXd::Zero(nd);
    double value = mnt.value;
    std::set<int> used;
    for (int c = 0; c < nd; ++c) {
      auto it = old_pos.find(next[c]);
      if (it != old_pos.end()) {
        anchor[c] = mnt.anchor[it->second];
        sub[c] = mnt.subgrad[it->second];
        used.insert(it->second);
      }
    }
    for (std::size_t c = 0; c < state.active.size(); ++c)
      if (!used.count(static_cast<int>(c))) value -= mnt.subgrad[c] * mnt.anchor[c];
    mnt.anchor = std::move(anchor);
    mnt.subgrad = std::move(sub);
    mnt.value = value;
  }
  state.active = next;
  state.center = std::move(center);
  return lost_mass;
}

}  // namespace

DualSolution compute_beta(const SdpRelaxation& relax, int p, const BundleSettings& settings) {
  const int p_max = static_cast<int>(relax.catalog.size());
  if (p < 0 || p > p_max)
    throw std::invalid_argument("compute_beta: p must lie in [0, " + std::to_string(p_max) + "]");

  DualSolution out;
  out.lambda.resize(relax.n);

  const auto set_duals = [&](const DualEval& eval) {
    out.alpha = eval.alpha;
    out.lambda = -eval.lam1 - eval.lam2 + eval.lam3;
    out.dual_value = eval.value;
  };

  DualEval eval = evaluate_dual_function(relax, {}, settings.oracle);
  ++out.oracle_calls;
  set_duals(eval);
  out.history.push_back({0, eval.value, 0, 'I', 0.0, eval.status});
  if (p == 0 || p_max == 0) {
    out.status = BundleStatus::converged;
    return out;
  }

  BundleState state;
  state.active = update_active_set(state, relax, eval.X, eval.x, p, settings.drop_tol);
  state.center = Eigen::VectorXd::Zero(state.active.size());
  state.center_value = eval.value;
  state.weight = 1.0;
  state.bundle.push_back({state.center, eval.value, subgrad_at(state.active, relax, eval.X, eval.x), false});
  if (state.active.empty()) {
    out.status = BundleStatus::converged;
    return out;
  }

  out.status = BundleStatus::max_iter;
  for (int k = 1; k <= settings.max_iter; ++k) {
    state.iteration = k;
    out.iterations = k;
    const MasterResult master = master_step(state, settings.tol);
    if (master.predicted_decrease <= settings.tol * (1.0 + std::abs(state.center_value))) {
      out.status = master.ok ? BundleStatus::converged : BundleStatus::max_iter;
      break;
    }

    DualEval cand;
    try {
      cand = evaluate_dual_function(relax, to_map(state.active, master.candidate), settings.oracle);
    } catch (const std::runtime_error&) {
      out.status = BundleStatus::oracle_failure;
      break;
    }
    ++out.oracle_calls;

    const bool descent = state.center_value - cand.value >= settings.descent_ratio * master.predicted_decrease;
    if (descent) {
      state.center = master.candidate;
      state.center_value = cand.value;
      set_duals(cand);
      state.weight = std::max(settings.weight_min, state.weight / 2.0);
    } else {
      state.weight = std::min(1e12, state.weight * 2.0);
    }
    out.history.push_back({k, cand.value, static_cast<int>(state.active.size()), descent ? 'D' : 'N',
                           master.predicted_decrease, cand.status});

    state.bundle.push_back({master.candidate, cand.value, subgrad_at(state.active, relax, cand.X, cand.x), false});
    if (static_cast<int>(state.bundle.size()) > settings.bundle_cap) {
      // Replace all prior model mass by the aggregate of the last master
      // solve, keep the newest minorant, and fill the remaining slots with
      // the regulars carrying the largest convexity weights.
      Minorant agg;
      agg.anchor = Eigen::VectorXd::Zero(state.active.size());
      agg.subgrad = Eigen::VectorXd::Zero(state.active.size());
      agg.value = 0.0;
      for (int l = 0; l < master.weights.size(); ++l) {
        const Minorant& mnt = state.bundle[l];
        agg.value += master.weights[l] * affine_value(mnt, agg.anchor);
        agg.subgrad += master.weights[l] * mnt.subgrad;
      }
      agg.aggregate = true;
      const int newest = static_cast<int>(state.bundle.size()) - 1;
      std::vector<std::pair<double, int>> regulars;
      for (int l = 0; l < newest; ++l)
        if (!state.bundle[l].aggregate)
          regulars.emplace_back(l < master.weights.size() ? master.weights[l] : 0.0, l);
      std::sort(regulars.begin(), regulars.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return lhs.second < rhs.second;
      });
      std::set<int> keep;
      for (int r = 0; r < std::min<int>(settings.bundle_cap - 2, static_cast<int>(regulars.size())); ++r)
        keep.insert(regulars[r].second);
      std::vector<Minorant> trimmed;
      trimmed.reserve(settings.bundle_cap);
      for (int l = 0; l < newest; ++l)
        if (keep.count(l)) trimmed.push_back(std::move(state.bundle[l]));
      trimmed.push_back(std::move(state.bundle[newest]));
      trimmed.push_back(std::move(agg));
      state.bundle = std::move(trimmed);
    }

    const std::vector<DescriptorKey> next = update_active_set(state, relax, cand.X, cand.x, p, settings.drop_tol);
    if (next != state.active) {
      const bool reeval = reindex(state, next);
      if (reeval) {
        try {
          eval = evaluate_dual_function(relax, to_map(state.active, state.center), settings.oracle);
        } catch (const std::runtime_error&) {
          out.status = BundleStatus::oracle_failure;
          break;
        }
        ++out.oracle_calls;
        state.center_value = eval.value;
        set_duals(eval);
        out.history.push_back({k, eval.value, static_cast<int>(state.active.size()), 'R', 0.0, eval.status});
        state.bundle.push_back({state.center, eval.value, subgrad_at(state.active, relax, eval.X, eval.x), false});
      }
    }
  }

  out.beta.clear();
  for (std::size_t c = 0; c < state.active.size(); ++c) {
    const DescriptorKey key = state.active[c];
    const double value = state.center[c];
    if (value == 0.0) continue;
    const double sign = key.t <= 2 ? 1.0 : -1.0;
    out.beta[{key.i, key.j}] += sign * value;
  }
  std::erase_if(out.beta, [](const auto& entry) { return entry.second == 0.0; });
  return out;
}

void write_bundle_log_csv(const DualSolution& dual, const std::string& path) {
  std::ofstream outfile(path);
  if (!outfile) throw std::runtime_error("cannot write bundle log: " + path);
  outfile << "iteration,g_value,active_size,step,predicted_decrease,oracle_status\n";
  for (const auto& row : dual.history) {
    const char* status = row.oracle_status == ConicStatus::optimal ? "optimal"
                         : row.oracle_status == ConicStatus::max_iter ? "max-iter"
                                                                      : "numerical-failure";
    outfile << row.iteration << ',' << row.g_value << ',' << row.active_size << ',' << row.step << ','
            << row.predicted_decrease << ',' << status << '\n';
  }
}

}  // namespace qcr

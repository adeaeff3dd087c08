#include "qcr/conic.hpp"
#include "qcr/instance.hpp"
#include "qcr/relaxation.hpp"

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <string>

using namespace qcr;

namespace {

ConicProgram one_by_one() {
  ConicProgram prog;
  prog.psd_order = 1;
  prog.nn_count = 0;
  prog.C = Eigen::MatrixXd::Constant(1, 1, -1.0);
  prog.c_nn.resize(0);
  return prog;
}

// n = 1 lifted feasible set with x_1 forced to b and u_1 = b.
ConicProgram forced_point(double b, double q, double c) {
  ConicProgram prog;
  prog.psd_order = 2;
  prog.nn_count = 3;
  prog.C = Eigen::MatrixXd::Zero(2, 2);
  prog.C(1, 1) = q;
  prog.C(0, 1) = prog.C(1, 0) = c / 2.0;
  prog.c_nn = Eigen::VectorXd::Zero(3);
  const auto row = [&](double rhs) {
    ConicConstraint r;
    r.A = Eigen::MatrixXd::Zero(2, 2);
    r.a = Eigen::VectorXd::Zero(3);
    r.b = rhs;
    return r;
  };
  {
    ConicConstraint r = row(1.0);
    r.A(0, 0) = 1.0;
    prog.rows.push_back(r);
  }
  {
    ConicConstraint r = row(b);  // x = b
    r.A(0, 1) = r.A(1, 0) = 0.5;
    prog.rows.push_back(r);
  }
  {
    ConicConstraint r = row(-b * b);  // X - 2 b x = -b^2
    r.A(1, 1) = 1.0;
    r.A(0, 1) = r.A(1, 0) = -b;
    prog.rows.push_back(r);
  }
  {
    ConicConstraint r = row(0.0);  // -X + x <= 0
    r.A(1, 1) = -1.0;
    r.A(0, 1) = r.A(1, 0) = 0.5;
    r.a[0] = 1.0;
    prog.rows.push_back(r);
  }
  {
    ConicConstraint r = row(b * b);  // -X + 2 u x <= u^2
    r.A(1, 1) = -1.0;
    r.A(0, 1) = r.A(1, 0) = b;
    r.a[1] = 1.0;
    prog.rows.push_back(r);
  }
  {
    ConicConstraint r = row(0.0);  // X - u x <= 0
    r.A(1, 1) = 1.0;
    r.A(0, 1) = r.A(1, 0) = -b / 2.0;
    r.a[2] = 1.0;
    prog.rows.push_back(r);
  }
  prog.psd_kernel.resize(2, 1);  // (x - b)^2 = 0 pins this direction
  prog.psd_kernel << -b, 1.0;
  return prog;
}

}  // namespace

TEST_CASE("trivial psd minimization") {
  const ConicSolution sol = solve_conic(one_by_one());
  REQUIRE(sol.status == ConicStatus::optimal);
  CHECK(sol.Z(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(sol.obj_primal == doctest::Approx(0.0).epsilon(1e-6));

  const KktReport kkt = check_kkt(one_by_one(), sol);
  CHECK(kkt.primal_res <= 1e-7);
  CHECK(kkt.dual_res <= 1e-7);
  CHECK(kkt.comp_gap <= 1e-7);
  CHECK(kkt.z_min_eig >= -1e-9);
}

TEST_CASE("check_kkt is a pure recomputation") {
  ConicSolution hand;
  hand.Z = Eigen::MatrixXd::Zero(1, 1);
  hand.s.resize(0);
  hand.dual.resize(0);
  hand.obj_primal = 0.0;
  hand.obj_dual = 0.0;
  const KktReport exact = check_kkt(one_by_one(), hand);
  CHECK(exact.primal_res == 0.0);
  CHECK(exact.dual_res == 0.0);
  CHECK(exact.comp_gap == 0.0);
  CHECK(exact.z_min_eig == 0.0);

  hand.Z(0, 0) = -1.0;
  CHECK(check_kkt(one_by_one(), hand).z_min_eig == -1.0);
}

TEST_CASE("forced single-point feasible set") {
  const double b = 2.0, q = 1.0, c = 3.0;
  const ConicSolution sol = solve_conic(forced_point(b, q, c));
  REQUIRE(sol.status == ConicStatus::optimal);
  CHECK(sol.obj_primal == doctest::Approx(q * b * b + c * b).epsilon(1e-6));
  CHECK(sol.Z(0, 1) == doctest::Approx(b).epsilon(1e-6));
  CHECK(sol.Z(1, 1) == doctest::Approx(b * b).epsilon(1e-6));
}

TEST_CASE("gap bound holds whenever status is optimal") {
  const ConicSettings settings{.tol_gap = 1e-8};
  const ConicSolution sol = solve_conic(forced_point(3.0, -2.0, 1.0), settings);
  REQUIRE(sol.status == ConicStatus::optimal);
  const KktReport kkt = check_kkt(forced_point(3.0, -2.0, 1.0), sol);
  CHECK(kkt.comp_gap <= 1e-8 * (1.0 + std::abs(sol.obj_primal)) + 1e-12);
}

TEST_CASE("base relaxation of a k-cluster instance") {
  const QpInstance inst = generate_kcluster(6, 0.5, 3, 11);
  const SdpRelaxation relax = build_base_relaxation(inst);
  const ConicSolution sol = solve_conic(relax.base);
  REQUIRE(sol.status == ConicStatus::optimal);

  SUBCASE("self-consistency under a perturbed solver path") {
    ConicSettings perturbed;
    perturbed.init_scale = 10.0;
    perturbed.step_fraction = 0.49;
    perturbed.max_iter = 500;
    const ConicSolution sol2 = solve_conic(relax.base, perturbed);
    REQUIRE(sol2.status == ConicStatus::optimal);
    CHECK(sol.obj_primal == doctest::Approx(sol2.obj_primal).epsilon(1e-5));
  }

  SUBCASE("identical inputs give identical iterate sequences") {
    const ConicSolution sol2 = solve_conic(relax.base);
    REQUIRE(sol.log.size() == sol2.log.size());
    for (std::size_t i = 0; i < sol.log.size(); ++i) {
      CHECK(sol.log[i].mu == sol2.log[i].mu);
      CHECK(sol.log[i].obj_primal == sol2.log[i].obj_primal);
      CHECK(sol.log[i].step_primal == sol2.log[i].step_primal);
    }
  }

  SUBCASE("objective scaling scales both objective values") {
    ConicProgram scaled = relax.base;
    scaled.C *= 4.0;
    scaled.c_nn *= 4.0;
    const ConicSolution sol4 = solve_conic(scaled);
    REQUIRE(sol4.status == ConicStatus::optimal);
    CHECK(sol4.obj_primal == doctest::Approx(4.0 * sol.obj_primal).epsilon(1e-6));
    CHECK(sol4.obj_dual == doctest::Approx(4.0 * sol.obj_dual).epsilon(1e-6));
  }

  SUBCASE("weak duality on near-feasible logged iterates") {
    for (const auto& it : sol.log)
      if (it.primal_res <= 1e-7 && it.dual_res <= 1e-7)
        CHECK(it.obj_dual >= it.obj_primal - 1e-8 * (1.0 + std::abs(it.obj_primal)) - 1e-9);
  }
}

TEST_CASE("presolve drops dependent rows and reports zero duals for them") {
  ConicProgram prog = forced_point(2.0, 1.0, 0.0);
  ConicConstraint duplicate = prog.rows[1];  // x = b again, scaled
  duplicate.A *= 2.0;
  duplicate.b *= 2.0;
  prog.rows.push_back(duplicate);
  const ConicSolution sol = solve_conic(prog);
  REQUIRE(sol.status == ConicStatus::optimal);
  CHECK(sol.obj_primal == doctest::Approx(4.0).epsilon(1e-6));
  // The duplicate (index 6) must be among the dropped rows with a zero
  // multiplier; facial reduction may expose further dependencies.
  CHECK(std::count(sol.dropped_rows.begin(), sol.dropped_rows.end(), 6) == 1);
  CHECK(sol.dual[6] == 0.0);
  CHECK(check_kkt(prog, sol).primal_res <= 1e-7);
}

TEST_CASE("iterate log is written as csv") {
  const ConicSolution sol = solve_conic(forced_point(2.0, 1.0, 0.0));
  write_iterate_log_csv(sol, "/tmp/qcr_test_conic_log.csv");
  std::FILE* f = std::fopen("/tmp/qcr_test_conic_log.csv", "r");
  REQUIRE(f != nullptr);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  CHECK(std::string(line).find("obj_dual") != std::string::npos);
  std::fclose(f);
  std::remove("/tmp/qcr_test_conic_log.csv");
}

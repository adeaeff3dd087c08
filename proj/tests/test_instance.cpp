#include "qcr/instance.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

using namespace qcr;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/qcr_test_") + name;
}

QpInstance tiny_from_json(const std::string& body) { return instance_from_json(body); }

}  // namespace

TEST_CASE("minimal instance round trip") {
  const std::string text = R"({
    "name": "square", "sense": "max", "n": 1,
    "u": [1], "c": [0], "Q": [[1, 1, 1]], "A": [], "b": []
  })";
  const QpInstance inst = tiny_from_json(text);
  CHECK(inst.n == 1);
  CHECK(inst.m() == 0);
  CHECK(inst.q.at({0, 0}) == 1.0);
  IntegerPoint pt{Eigen::VectorXi::Ones(1)};
  CHECK(evaluate_objective(inst, pt) == 1.0);  // f(x) = x^2

  const std::string path = temp_path("roundtrip.json");
  save_instance(inst, path);
  const QpInstance again = load_instance(path);
  CHECK(again.name == inst.name);
  CHECK(again.q == inst.q);
  CHECK(again.u == inst.u);
  std::remove(path.c_str());
}

TEST_CASE("validation rejects u_i = 0") {
  const std::string text = R"({
    "name": "bad", "sense": "max", "n": 1,
    "u": [0], "c": [0], "Q": [], "A": [], "b": []
  })";
  CHECK_THROWS_WITH_AS(tiny_from_json(text), doctest::Contains("u_i >= 1"), std::invalid_argument);
}

TEST_CASE("parser rejects duplicate and lower-triangle Q entries") {
  CHECK_THROWS_WITH_AS(tiny_from_json(R"({"name":"d","sense":"max","n":2,"u":[1,1],"c":[0,0],
    "Q":[[1,2,1],[1,2,2]],"A":[],"b":[]})"),
                       doctest::Contains("duplicate"), std::runtime_error);
  CHECK_THROWS_WITH_AS(tiny_from_json(R"({"name":"d","sense":"max","n":2,"u":[1,1],"c":[0,0],
    "Q":[[2,1,1]],"A":[],"b":[]})"),
                       doctest::Contains("below the diagonal"), std::runtime_error);
}

TEST_CASE("generated k-cluster instance survives save/load byte for byte") {
  const QpInstance inst = generate_kcluster(8, 0.5, 4, 1);
  const std::string path = temp_path("kc.json");
  save_instance(inst, path);
  const QpInstance again = load_instance(path);
  CHECK(again.name == inst.name);
  CHECK(again.sense == inst.sense);
  CHECK(again.n == inst.n);
  CHECK(again.q == inst.q);
  CHECK(again.c == inst.c);
  CHECK(again.a == inst.a);
  CHECK(again.b == inst.b);
  CHECK(again.u == inst.u);

  // Canonical files are fixed points of save(load(.)).
  const std::string path2 = temp_path("kc2.json");
  save_instance(again, path2);
  std::ifstream f1(path), f2(path2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("k-cluster generator") {
  SUBCASE("density one forces the complete graph") {
    const QpInstance inst = generate_kcluster(5, 1.0, 3, 99);
    CHECK(inst.q.size() == 10);
    for (const auto& [key, value] : inst.q) CHECK(value == 1.0);
    CHECK(inst.m() == 1);
    CHECK(inst.a == Eigen::MatrixXd::Ones(1, 5));
    CHECK(inst.b[0] == 3.0);
    CHECK((inst.u.array() == 1).all());
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(generate_kcluster(5, 0.0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_kcluster(5, 1.5, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_kcluster(5, 0.5, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_kcluster(5, 0.5, 4, 1), std::invalid_argument);  // k > n-2
  }
  SUBCASE("same seed reproduces the same edge set") {
    const QpInstance a = generate_kcluster(12, 0.5, 6, 7);
    const QpInstance b = generate_kcluster(12, 0.5, 6, 7);
    CHECK(a.q == b.q);
    // and independently re-drawing the Bernoulli stream gives the same edges
    Rng rng(7);
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i < 12; ++i)
      for (int j = i + 1; j < 12; ++j)
        if (rng.uniform01() < 0.5) edges.insert({i, j});
    std::set<std::pair<int, int>> stored;
    for (const auto& [key, value] : a.q) stored.insert(key);
    CHECK(edges == stored);
    CHECK(generate_kcluster(12, 0.5, 6, 8).q != a.q);
  }
}

TEST_CASE("eiqp generator") {
  SUBCASE("class 1 parameters") {
    const QpInstance inst = generate_eiqp(1, 10, 3);
    CHECK(inst.sense == Sense::min);
    CHECK((inst.u.array() == 30).all());
    CHECK(inst.m() == 1);
    CHECK(inst.b[0] == 15.0 * inst.a.row(0).sum());
    for (int i = 0; i < 10; ++i) {
      CHECK(inst.a(0, i) >= 1.0);
      CHECK(inst.a(0, i) <= 50.0);
    }
  }
  SUBCASE("class 2 parameters") {
    const QpInstance inst = generate_eiqp(2, 6, 4);
    CHECK((inst.u.array() == 50).all());
    CHECK(inst.b[0] == 20.0 * inst.a.row(0).sum());
    for (int i = 0; i < 6; ++i) CHECK(inst.a(0, i) <= 100.0);
  }
  SUBCASE("x_i = mu is feasible") {
    for (int cls : {1, 2}) {
      const QpInstance inst = generate_eiqp(cls, 7, 11);
      const int mu = cls == 1 ? 15 : 20;
      CHECK(inst.a.row(0).sum() * mu == inst.b[0]);
      CHECK(mu <= inst.u[0]);
    }
  }
  CHECK_THROWS_AS(generate_eiqp(3, 5, 1), std::invalid_argument);
}

TEST_CASE("iep generator") {
  SUBCASE("dimensions and bounds") {
    const QpInstance inst = generate_iep(3, 20, 5, 1);
    CHECK(inst.n == 15);
    CHECK(inst.m() == 8);
    CHECK((inst.u.array() == 12).all());
    CHECK(inst.sense == Sense::min);
    for (const auto& [key, value] : inst.q) {
      CHECK(value >= 1.0);
      CHECK(value <= 10.0);
    }
  }
  SUBCASE("tight bound case") {
    const QpInstance inst = generate_iep(2, 2, 4, 1);
    CHECK(inst.n == 8);
    CHECK((inst.u.array() == 1).all());
    for (int k = 0; k < 4; ++k) CHECK(inst.b[k] == 1.0);
  }
  CHECK_THROWS_AS(generate_iep(3, 20, 7, 1), std::invalid_argument);
}

TEST_CASE("objective evaluation") {
  SUBCASE("single product") {
    QpInstance inst;
    inst.name = "prod";
    inst.n = 2;
    inst.q[{0, 1}] = 1.0;
    inst.c = Eigen::VectorXd::Zero(2);
    inst.u = Eigen::VectorXi::Ones(2);
    IntegerPoint pt{Eigen::VectorXi::Ones(2)};
    CHECK(evaluate_objective(inst, pt) == 1.0);
    IntegerPoint bad{Eigen::VectorXi::Ones(3)};
    CHECK_THROWS_AS(evaluate_objective(inst, bad), std::invalid_argument);
  }
  SUBCASE("complete graph cluster of three") {
    const QpInstance inst = generate_kcluster(5, 1.0, 3, 1);
    Eigen::VectorXi x(5);
    x << 1, 1, 1, 0, 0;
    CHECK(evaluate_objective(inst, IntegerPoint{x}) == 3.0);
  }
  SUBCASE("matches an independent accumulation order") {
    const QpInstance inst = generate_eiqp(1, 6, 5);
    Eigen::VectorXi x = Eigen::VectorXi::Constant(6, 15);
    double alt = 0.0;  // dense double loop over all ordered pairs
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const auto it = inst.q.find({std::min(i, j), std::max(i, j)});
        if (it == inst.q.end()) continue;
        const double half = i == j ? it->second : it->second / 2.0;
        alt += half * x[i] * x[j];
      }
    for (int i = 0; i < 6; ++i) alt += inst.c[i] * x[i];
    CHECK(evaluate_objective(inst, IntegerPoint{x}) == doctest::Approx(alt).epsilon(1e-14));
  }
}

namespace {

QpInstance complete_kc(int n, int k) {
  QpInstance inst;
  inst.name = "complete";
  inst.sense = Sense::max;
  inst.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) inst.q[{i, j}] = 1.0;
  inst.c = Eigen::VectorXd::Zero(n);
  inst.a = Eigen::MatrixXd::Ones(1, n);
  inst.b = Eigen::VectorXd::Constant(1, static_cast<double>(k));
  inst.u = Eigen::VectorXi::Ones(n);
  return inst;
}

}  // namespace

TEST_CASE("brute force enumeration") {
  SUBCASE("complete graph, two of four") {
    // All pairs tie at value 1; the enumeration keeps the lexicographically
    // smallest point.
    const BruteForceResult best = brute_force_optimum(complete_kc(4, 2));
    CHECK(best.value == 1.0);
    Eigen::VectorXi expect(4);
    expect << 0, 0, 1, 1;
    CHECK(best.point.x == expect);
  }
  SUBCASE("complete graph, three of five") {
    CHECK(brute_force_optimum(generate_kcluster(5, 1.0, 3, 1)).value == 3.0);
  }
  SUBCASE("feasible points satisfy the equalities exactly") {
    const QpInstance inst = generate_iep(2, 2, 2, 3);
    const BruteForceResult best = brute_force_optimum(inst);
    for (int r = 0; r < inst.m(); ++r) {
      long long lhs = 0;
      for (int i = 0; i < inst.n; ++i) lhs += static_cast<long long>(inst.a(r, i)) * best.point.x[i];
      CHECK(lhs == static_cast<long long>(inst.b[r]));
    }
  }
  SUBCASE("matches an independently coded nested-loop enumerator") {
    QpInstance inst = generate_eiqp(1, 4, 9);
    inst.u = Eigen::VectorXi::Constant(4, 3);
    inst.b[0] = 2.0 * inst.a.row(0).sum();  // keep a feasible point after clipping
    const BruteForceResult best = brute_force_optimum(inst);

    double alt_best = 0.0;
    bool found = false;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; b <= 3; ++b)
        for (int c = 0; c <= 3; ++c)
          for (int d = 0; d <= 3; ++d) {
            Eigen::VectorXi x(4);
            x << a, b, c, d;
            if (inst.a.row(0).dot(x.cast<double>()) != inst.b[0]) continue;
            const double value = evaluate_objective(inst, IntegerPoint{x});
            if (!found || value < alt_best) {
              alt_best = value;
              found = true;
            }
          }
    REQUIRE(found);
    CHECK(best.value == alt_best);
  }
  SUBCASE("error paths") {
    QpInstance big = generate_eiqp(1, 10, 1);
    CHECK_THROWS_WITH_AS(brute_force_optimum(big, 1000), doctest::Contains("enumeration too large"),
                         std::invalid_argument);
    QpInstance infeasible = complete_kc(4, 2);
    infeasible.b[0] = 9.0;  // unreachable sum
    CHECK_THROWS_WITH_AS(brute_force_optimum(infeasible), doctest::Contains("infeasible"), std::runtime_error);
  }
}

TEST_CASE("normalization to max flips coefficients") {
  const QpInstance inst = generate_eiqp(1, 5, 2);
  const QpInstance flipped = normalized_max(inst);
  CHECK(flipped.sense == Sense::max);
  Eigen::VectorXi x = Eigen::VectorXi::Constant(5, 2);
  CHECK(evaluate_objective(flipped, IntegerPoint{x}) == -evaluate_objective(inst, IntegerPoint{x}));
  CHECK(normalized_max(flipped).c == flipped.c);
}

TEST_CASE("generators are pure functions of their parameters") {
  for (int seed : {1, 2, 3}) {
    CHECK(generate_eiqp(2, 8, seed).q == generate_eiqp(2, 8, seed).q);
    CHECK(generate_iep(3, 4, 6, seed).q == generate_iep(3, 4, 6, seed).q);
  }
}

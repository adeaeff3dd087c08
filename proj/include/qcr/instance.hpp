#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>

namespace qcr {

enum class Sense { max, min };

/// Integer quadratic program with linear equality constraints:
///
///   opt  sum_{i<=j} q_ij x_i x_j + c'x
///   s.t. A x = b,  0 <= x <= u,  x integer.
///
/// Quadratic coefficients are stored sparsely for the upper triangle only
/// (i <= j, 0-based); all other entries are implicitly zero. A and b must be
/// integral, u_i >= 1.
struct QpInstance {
  std::string name;
  Sense sense = Sense::max;
  int n = 0;
  std::map<std::pair<int, int>, double> q;
  Eigen::VectorXd c;
  Eigen::MatrixXd a;  // m x n
  Eigen::VectorXd b;  // length m
  Eigen::VectorXi u;

  int m() const { return static_cast<int>(a.rows()); }
};

struct IntegerPoint {
  Eigen::VectorXi x;
};

/// Deterministic random source. mt19937_64 with explicitly coded sampling so
/// that generated streams do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform integer in [lo, hi], via rejection sampling on the raw stream.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1) from the top 53 bits of one draw.
  double uniform01();

 private:
  std::mt19937_64 eng_;
};

/// Throws std::invalid_argument naming the violated invariant.
void validate(const QpInstance& inst);

QpInstance load_instance(const std::string& path);
void save_instance(const QpInstance& inst, const std::string& path);

/// Canonical JSON text of an instance (what save_instance writes).
std::string instance_to_json(const QpInstance& inst);
QpInstance instance_from_json(const std::string& text, const std::string& context = "<string>");

/// Random graph k-cluster instance: maximize the number of edges induced by a
/// subset of exactly k vertices. Edges are sampled independently with
/// probability d, pairs visited in lexicographic order (i < j).
QpInstance generate_kcluster(int n, double d, int k, std::uint64_t seed);

/// Equality-constrained integer quadratic minimization instance; cls selects
/// the coefficient ranges (1 or 2).
QpInstance generate_eiqp(int cls, int n, std::uint64_t seed);

/// Equipartition instance: n item types, m items per type, p equal-size sets.
/// Variables x_{ik} count items of type i placed in set k; the cost of a pair
/// of types placed in different sets is drawn uniformly from [1, 10].
QpInstance generate_iep(int n, int m, int p, std::uint64_t seed);

/// Exact objective value at an integer point (does not check feasibility).
double evaluate_objective(const QpInstance& inst, const IntegerPoint& pt);

struct BruteForceResult {
  double value = 0.0;
  IntegerPoint point;
};

/// Enumerates every integer point of the box, keeps those satisfying all
/// equalities exactly (integer arithmetic), returns the best per sense; ties
/// resolved toward the lexicographically smallest point. Throws if
/// prod(u_i + 1) exceeds limit, or if no feasible point exists.
BruteForceResult brute_force_optimum(const QpInstance& inst, std::uint64_t limit = 1'000'000);

/// Same instance with minimization rewritten as maximization (q, c negated).
QpInstance normalized_max(const QpInstance& inst);

/// Symmetric matrix M with x'Mx + c'x equal to the objective:
/// M_ii = q_ii, M_ij = q_ij / 2 for i != j.
Eigen::MatrixXd objective_matrix(const QpInstance& inst);

}  // namespace qcr

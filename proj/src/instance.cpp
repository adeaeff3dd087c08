#include "qcr/instance.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qcr {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_integral(double v) { return std::isfinite(v) && v == std::floor(v); }

// Integral doubles are written as JSON integers so canonical files stay
// stable under load/save round trips.
ordered_json number(double v) {
  if (is_integral(v) && std::abs(v) < 9.0e15) return ordered_json(static_cast<std::int64_t>(v));
  return ordered_json(v);
}

[[noreturn]] void parse_fail(const std::string& context, const std::string& what) {
  throw std::runtime_error("parse error in " + context + ": " + what);
}

}  // namespace

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
  const std::uint64_t reject_above = std::numeric_limits<std::uint64_t>::max() -
                                     std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r;
  do {
    r = eng_();
  } while (r >= reject_above);
  return lo + static_cast<std::int64_t>(r % span);
}

double Rng::uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

void validate(const QpInstance& inst) {
  if (inst.n < 1) throw std::invalid_argument("instance '" + inst.name + "': n >= 1 violated");
  if (inst.u.size() != inst.n) throw std::invalid_argument("instance '" + inst.name + "': u has wrong length");
  for (int i = 0; i < inst.n; ++i) {
    if (inst.u[i] < 1)
      throw std::invalid_argument("instance '" + inst.name + "': u_i >= 1 violated at i=" + std::to_string(i + 1));
  }
  if (inst.c.size() != inst.n) throw std::invalid_argument("instance '" + inst.name + "': c has wrong length");
  if (inst.a.rows() != inst.b.size())
    throw std::invalid_argument("instance '" + inst.name + "': A row count differs from b length");
  if (inst.a.rows() > 0 && inst.a.cols() != inst.n)
    throw std::invalid_argument("instance '" + inst.name + "': A has wrong column count");
  for (int r = 0; r < inst.m(); ++r) {
    if (!is_integral(inst.b[r]))
      throw std::invalid_argument("instance '" + inst.name + "': b_r integral violated at r=" + std::to_string(r + 1));
    for (int i = 0; i < inst.n; ++i)
      if (!is_integral(inst.a(r, i)))
        throw std::invalid_argument("instance '" + inst.name + "': A integral violated at (" +
                                    std::to_string(r + 1) + "," + std::to_string(i + 1) + ")");
  }
  for (const auto& [key, val] : inst.q) {
    const auto [i, j] = key;
    if (i < 0 || j < 0 || i >= inst.n || j >= inst.n || i > j)
      throw std::invalid_argument("instance '" + inst.name + "': Q index outside upper triangle");
    if (!std::isfinite(val)) throw std::invalid_argument("instance '" + inst.name + "': non-finite Q entry");
  }
}

std::string instance_to_json(const QpInstance& inst) {
  ordered_json j;
  j["name"] = inst.name;
  j["sense"] = inst.sense == Sense::max ? "max" : "min";
  j["n"] = inst.n;
  j["u"] = ordered_json::array();
  for (int i = 0; i < inst.n; ++i) j["u"].push_back(inst.u[i]);
  j["c"] = ordered_json::array();
  for (int i = 0; i < inst.n; ++i) j["c"].push_back(number(inst.c[i]));
  j["Q"] = ordered_json::array();
  for (const auto& [key, val] : inst.q)
    j["Q"].push_back(ordered_json::array({key.first + 1, key.second + 1, number(val)}));
  j["A"] = ordered_json::array();
  for (int r = 0; r < inst.m(); ++r) {
    ordered_json row = ordered_json::array();
    for (int i = 0; i < inst.n; ++i) row.push_back(number(inst.a(r, i)));
    j["A"].push_back(std::move(row));
  }
  j["b"] = ordered_json::array();
  for (int r = 0; r < inst.m(); ++r) j["b"].push_back(number(inst.b[r]));
  return j.dump(2) + "\n";
}

QpInstance instance_from_json(const std::string& text, const std::string& context) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    parse_fail(context, e.what());
  }
  QpInstance inst;
  try {
    inst.name = j.at("name").get<std::string>();
    const std::string sense = j.at("sense").get<std::string>();
    if (sense == "max")
      inst.sense = Sense::max;
    else if (sense == "min")
      inst.sense = Sense::min;
    else
      parse_fail(context, "field 'sense' must be \"max\" or \"min\"");
    inst.n = j.at("n").get<int>();
    if (inst.n < 1) parse_fail(context, "field 'n' must be >= 1");

    const auto& ju = j.at("u");
    inst.u.resize(inst.n);
    if (static_cast<int>(ju.size()) != inst.n) parse_fail(context, "field 'u' has wrong length");
    for (int i = 0; i < inst.n; ++i) inst.u[i] = ju[i].get<int>();

    const auto& jc = j.at("c");
    inst.c.resize(inst.n);
    if (static_cast<int>(jc.size()) != inst.n) parse_fail(context, "field 'c' has wrong length");
    for (int i = 0; i < inst.n; ++i) inst.c[i] = jc[i].get<double>();

    for (const auto& entry : j.at("Q")) {
      if (entry.size() != 3) parse_fail(context, "field 'Q' entries must be [i, j, value]");
      const int i = entry[0].get<int>(), jj = entry[1].get<int>();
      const double val = entry[2].get<double>();
      if (i < 1 || jj < 1 || i > inst.n || jj > inst.n)
        parse_fail(context, "Q index out of range: (" + std::to_string(i) + "," + std::to_string(jj) + ")");
      if (i > jj)
        parse_fail(context, "Q entry below the diagonal: (" + std::to_string(i) + "," + std::to_string(jj) +
                                "); store i <= j only");
      if (!inst.q.emplace(std::make_pair(i - 1, jj - 1), val).second)
        parse_fail(context, "duplicate Q entry at (" + std::to_string(i) + "," + std::to_string(jj) + ")");
    }

    const auto& ja = j.at("A");
    const auto& jb = j.at("b");
    const int m = static_cast<int>(ja.size());
    if (static_cast<int>(jb.size()) != m) parse_fail(context, "fields 'A' and 'b' have different row counts");
    inst.a.resize(m, inst.n);
    inst.b.resize(m);
    for (int r = 0; r < m; ++r) {
      if (static_cast<int>(ja[r].size()) != inst.n)
        parse_fail(context, "row " + std::to_string(r + 1) + " of 'A' has wrong length");
      for (int i = 0; i < inst.n; ++i) inst.a(r, i) = ja[r][i].get<double>();
      inst.b[r] = jb[r].get<double>();
    }
  } catch (const ordered_json::exception& e) {
    parse_fail(context, e.what());
  }
  validate(inst);
  return inst;
}

QpInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return instance_from_json(buf.str(), path);
}

void save_instance(const QpInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  out << instance_to_json(inst);
}

QpInstance generate_kcluster(int n, double d, int k, std::uint64_t seed) {
  if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("generate_kcluster: density d must lie in (0, 1]");
  if (k < 3 || k > n - 2) throw std::invalid_argument("generate_kcluster: k must lie in {3, ..., n-2}");
  Rng rng(seed);
  QpInstance inst;
  {
    char buf[96];
    std::snprintf(buf, sizeof buf, "kc-n%d-d%d-k%d-s%llu", n, static_cast<int>(std::lround(d * 100)), k,
                  static_cast<unsigned long long>(seed));
    inst.name = buf;
  }
  inst.sense = Sense::max;
  inst.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform01() < d) inst.q[{i, j}] = 1.0;
  inst.c = Eigen::VectorXd::Zero(n);
  inst.a = Eigen::MatrixXd::Ones(1, n);
  inst.b = Eigen::VectorXd::Constant(1, static_cast<double>(k));
  inst.u = Eigen::VectorXi::Ones(n);
  return inst;
}

QpInstance generate_eiqp(int cls, int n, std::uint64_t seed) {
  if (cls != 1 && cls != 2) throw std::invalid_argument("generate_eiqp: class must be 1 or 2");
  if (n < 1) throw std::invalid_argument("generate_eiqp: n must be >= 1");
  const int a_hi = cls == 1 ? 50 : 100;
  const int mu = cls == 1 ? 15 : 20;
  const int bound = cls == 1 ? 30 : 50;
  Rng rng(seed);
  QpInstance inst;
  {
    char buf[64];
    std::snprintf(buf, sizeof buf, "eiqp%d-n%d-s%llu", cls, n, static_cast<unsigned long long>(seed));
    inst.name = buf;
  }
  inst.sense = Sense::min;
  inst.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = static_cast<double>(rng.uniform_int(-100, 100));
      if (v != 0.0) inst.q[{i, j}] = v;
    }
  inst.c.resize(n);
  for (int i = 0; i < n; ++i) inst.c[i] = static_cast<double>(rng.uniform_int(-100, 100));
  inst.a.resize(1, n);
  for (int i = 0; i < n; ++i) inst.a(0, i) = static_cast<double>(rng.uniform_int(1, a_hi));
  inst.b = Eigen::VectorXd::Constant(1, static_cast<double>(mu) * inst.a.row(0).sum());
  inst.u = Eigen::VectorXi::Constant(n, bound);
  return inst;
}

QpInstance generate_iep(int n, int m, int p, std::uint64_t seed) {
  if (n < 1 || m < 1 || p < 1) throw std::invalid_argument("generate_iep: n, m, p must be >= 1");
  if ((static_cast<std::int64_t>(n) * m) % p != 0)
    throw std::invalid_argument("generate_iep: n*m must be a multiple of p");
  const int per_set = static_cast<int>(static_cast<std::int64_t>(n) * m / p);
  Rng rng(seed);

  // Pair costs c_ij for 1 <= i <= j <= n, sampled in lexicographic order.
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) cost(i, j) = static_cast<double>(rng.uniform_int(1, 10));

  QpInstance inst;
  {
    char buf[96];
    std::snprintf(buf, sizeof buf, "iep-n%d-m%d-p%d-s%llu", n, m, p, static_cast<unsigned long long>(seed));
    inst.name = buf;
  }
  inst.sense = Sense::min;
  inst.n = n * p;
  const auto var = [p](int type, int set) { return type * p + set; };

  // Cross-set pairs of distinct types, plus split pairs within one type.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < p; ++k)
        for (int l = 0; l < p; ++l)
          if (k != l) inst.q[{var(i, k), var(j, l)}] = cost(i, j);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k)
      for (int l = k + 1; l < p; ++l) inst.q[{var(i, k), var(i, l)}] = cost(i, i);

  inst.c = Eigen::VectorXd::Zero(inst.n);
  inst.a = Eigen::MatrixXd::Zero(p + n, inst.n);
  inst.b.resize(p + n);
  for (int k = 0; k < p; ++k) {  // each set receives exactly n*m/p items
    for (int i = 0; i < n; ++i) inst.a(k, var(i, k)) = 1.0;
    inst.b[k] = static_cast<double>(per_set);
  }
  for (int i = 0; i < n; ++i) {  // all m items of each type are placed
    for (int k = 0; k < p; ++k) inst.a(p + i, var(i, k)) = 1.0;
    inst.b[p + i] = static_cast<double>(m);
  }
  inst.u = Eigen::VectorXi::Constant(inst.n, std::min(m, per_set));
  return inst;
}

double evaluate_objective(const QpInstance& inst, const IntegerPoint& pt) {
  if (pt.x.size() != inst.n) throw std::invalid_argument("evaluate_objective: point dimension mismatch");
  double value = 0.0;
  for (const auto& [key, val] : inst.q)
    value += val * static_cast<double>(pt.x[key.first]) * static_cast<double>(pt.x[key.second]);
  for (int i = 0; i < inst.n; ++i) value += inst.c[i] * static_cast<double>(pt.x[i]);
  return value;
}

BruteForceResult brute_force_optimum(const QpInstance& inst, std::uint64_t limit) {
  validate(inst);
  double count = 1.0;
  for (int i = 0; i < inst.n; ++i) count *= static_cast<double>(inst.u[i]) + 1.0;
  if (count > static_cast<double>(limit))
    throw std::invalid_argument("brute_force_optimum: enumeration too large (" + std::to_string(count) +
                                " points exceed the cap of " + std::to_string(limit) + ")");

  const int m = inst.m();
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> ai(m, inst.n);
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> bi(m);
  for (int r = 0; r < m; ++r) {
    bi[r] = static_cast<std::int64_t>(inst.b[r]);
    for (int i = 0; i < inst.n; ++i) ai(r, i) = static_cast<std::int64_t>(inst.a(r, i));
  }

  Eigen::VectorXi x = Eigen::VectorXi::Zero(inst.n);
  bool found = false;
  BruteForceResult best;
  const bool maximize = inst.sense == Sense::max;
  // Ascending lexicographic enumeration; strict improvement keeps the
  // lexicographically smallest point among ties.
  while (true) {
    bool feasible = true;
    for (int r = 0; r < m && feasible; ++r) {
      std::int64_t lhs = 0;
      for (int i = 0; i < inst.n; ++i) lhs += ai(r, i) * x[i];
      feasible = lhs == bi[r];
    }
    if (feasible) {
      const double value = evaluate_objective(inst, IntegerPoint{x});
      if (!found || (maximize ? value > best.value : value < best.value)) {
        best.value = value;
        best.point.x = x;
        found = true;
      }
    }
    int pos = inst.n - 1;
    while (pos >= 0 && x[pos] == inst.u[pos]) x[pos--] = 0;
    if (pos < 0) break;
    ++x[pos];
  }
  if (!found) throw std::runtime_error("brute_force_optimum: infeasible instance (no point satisfies the equalities)");
  return best;
}

QpInstance normalized_max(const QpInstance& inst) {
  if (inst.sense == Sense::max) return inst;
  QpInstance out = inst;
  out.sense = Sense::max;
  for (auto& [key, val] : out.q) val = -val;
  out.c = -out.c;
  return out;
}

Eigen::MatrixXd objective_matrix(const QpInstance& inst) {
  Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(inst.n, inst.n);
  for (const auto& [key, val] : inst.q) {
    const auto [i, j] = key;
    if (i == j) {
      mat(i, i) = val;
    } else {
      mat(i, j) = val / 2.0;
      mat(j, i) = val / 2.0;
    }
  }
  return mat;
}

}  // namespace qcr

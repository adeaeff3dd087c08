#include "qcr/pipeline.hpp"
#include "qcr/reform.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using qcr::QpInstance;
using qcr::RunConfig;

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write output file: " + path);
  out << text;
}

QpInstance generate_from_family(const std::string& family, int n, double d, int k, int m, int p,
                                std::uint64_t seed) {
  if (family == "kcluster") return qcr::generate_kcluster(n, d, k, seed);
  if (family == "eiqp1") return qcr::generate_eiqp(1, n, seed);
  if (family == "eiqp2") return qcr::generate_eiqp(2, n, seed);
  if (family == "iep") return qcr::generate_iep(n, m, p, seed);
  throw std::runtime_error("unknown family: " + family);
}

struct SolveFlags {
  std::string in;
  double delta = 1.0;
  std::string mode = "auto";
  std::optional<double> tol, zero_tol, oracle_tol;
  double time_limit = 1e15;
  long long node_limit = 1'000'000'000;
  int bundle_max_iter = 300;
  std::string out, log_dir, dump_miqp;
};

void add_solve_flags(CLI::App* cmd, SolveFlags& flags, bool with_phase2) {
  cmd->add_option("--in", flags.in, "instance file (JSON)")->required();
  cmd->add_option("--delta", flags.delta, "fraction of dualizable constraints, p = round(delta * 4 C(n,2))")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--mode", flags.mode, "tolerance preset: binary | integer | auto")
      ->check(CLI::IsMember({"binary", "integer", "auto"}));
  cmd->add_option("--tol", flags.tol, "phase-1 stopping tolerance (relative predicted decrease)");
  cmd->add_option("--zero-tol", flags.zero_tol, "multiplier zero threshold for the reformulation");
  cmd->add_option("--oracle-tol", flags.oracle_tol, "inner solver gap tolerance");
  cmd->add_option("--bundle-max-iter", flags.bundle_max_iter, "phase-1 iteration cap");
  if (with_phase2) {
    cmd->add_option("--time-limit", flags.time_limit, "phase-2 wall-clock limit in seconds");
    cmd->add_option("--node-limit", flags.node_limit, "phase-2 node cap");
    cmd->add_option("--dump-miqp", flags.dump_miqp, "write the reformulated problem as JSON");
  }
  cmd->add_option("--out", flags.out, "report output file (stdout when omitted)");
  cmd->add_option("--log-dir", flags.log_dir, "directory for bundle/conic/node CSV logs");
}

RunConfig to_config(const SolveFlags& flags) {
  RunConfig config;
  config.instance = qcr::load_instance(flags.in);
  config.delta = flags.delta;
  config.mode = flags.mode == "binary"    ? qcr::Mode::binary
                : flags.mode == "integer" ? qcr::Mode::integer_wide
                                          : qcr::Mode::automatic;
  config.phase1_tol = flags.tol;
  config.zero_tol = flags.zero_tol;
  config.oracle_tol = flags.oracle_tol;
  config.bundle_max_iter = flags.bundle_max_iter;
  config.time_limit = flags.time_limit;
  config.node_limit = flags.node_limit;
  config.log_dir = flags.log_dir;
  return config;
}

std::vector<RunConfig> parse_batch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open batch config: " + path);
  nlohmann::json spec = nlohmann::json::parse(in);
  std::vector<RunConfig> configs;
  for (const auto& entry : spec) {
    RunConfig config;
    if (entry.contains("instance")) {
      config.instance = qcr::load_instance(entry.at("instance").get<std::string>());
    } else {
      config.instance = generate_from_family(
          entry.at("family").get<std::string>(), entry.value("n", 0), entry.value("d", 0.5), entry.value("k", 0),
          entry.value("m", 0), entry.value("p", 0), entry.value("seed", 1ULL));
    }
    config.delta = entry.value("delta", 1.0);
    const std::string mode = entry.value("mode", std::string("auto"));
    config.mode = mode == "binary"    ? qcr::Mode::binary
                  : mode == "integer" ? qcr::Mode::integer_wide
                                      : qcr::Mode::automatic;
    if (entry.contains("tol")) config.phase1_tol = entry.at("tol").get<double>();
    if (entry.contains("zero_tol")) config.zero_tol = entry.at("zero_tol").get<double>();
    if (entry.contains("oracle_tol")) config.oracle_tol = entry.at("oracle_tol").get<double>();
    config.bundle_max_iter = entry.value("bundle_max_iter", 300);
    config.time_limit = entry.value("time_limit", 1e15);
    config.node_limit = entry.value("node_limit", 1'000'000'000LL);
    config.label = entry.value("label", std::string());
    configs.push_back(std::move(config));
  }
  return configs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase convex reformulation solver for linearly-constrained integer quadratic programs"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a benchmark instance");
  std::string family, gen_out;
  int gen_n = 10, gen_k = 0, gen_m = 0, gen_p = 0;
  double gen_d = 0.5;
  std::uint64_t gen_seed = 1;
  gen->add_option("--family", family, "kcluster | eiqp1 | eiqp2 | iep")
      ->required()
      ->check(CLI::IsMember({"kcluster", "eiqp1", "eiqp2", "iep"}));
  gen->add_option("--n", gen_n, "variable count (types for iep)");
  gen->add_option("--d", gen_d, "edge density (kcluster)");
  gen->add_option("--k", gen_k, "cluster size (kcluster)");
  gen->add_option("--m", gen_m, "items per type (iep)");
  gen->add_option("--p", gen_p, "set count (iep)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output file (stdout when omitted)");

  auto* solve = app.add_subcommand("solve", "run the full two-phase pipeline");
  SolveFlags solve_flags;
  add_solve_flags(solve, solve_flags, true);

  auto* phase1 = app.add_subcommand("phase1", "stop after the dual heuristic, dump the multipliers");
  SolveFlags phase1_flags;
  add_solve_flags(phase1, phase1_flags, false);

  auto* brute = app.add_subcommand("bruteforce", "exact optimum by box enumeration");
  std::string brute_in, brute_out;
  std::uint64_t brute_limit = 1'000'000;
  brute->add_option("--in", brute_in, "instance file")->required();
  brute->add_option("--limit", brute_limit, "enumeration cap");
  brute->add_option("--out", brute_out, "output file (stdout when omitted)");

  auto* batch = app.add_subcommand("batch", "run a list of configurations and aggregate");
  std::string batch_config, batch_out;
  batch->add_option("--config", batch_config, "JSON array of run configurations")->required();
  batch->add_option("--out", batch_out, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const QpInstance inst = generate_from_family(family, gen_n, gen_d, gen_k, gen_m, gen_p, gen_seed);
      write_or_print(qcr::instance_to_json(inst), gen_out);
    } else if (solve->parsed()) {
      const RunConfig config = to_config(solve_flags);
      if (!solve_flags.dump_miqp.empty()) {
        const qcr::ResolvedSettings rs = qcr::resolve_settings(config);
        qcr::BundleSettings bs;
        bs.tol = rs.phase1_tol;
        bs.max_iter = config.bundle_max_iter;
        bs.oracle.tol_gap = rs.oracle_tol;
        const qcr::SdpRelaxation relax = qcr::build_base_relaxation(qcr::normalized_max(config.instance));
        const int p =
            static_cast<int>(std::lround(config.delta * static_cast<double>(relax.catalog.size())));
        const qcr::DualSolution dual = qcr::compute_beta(relax, p, bs);
        const qcr::ReformulatedMiqp miqp =
            qcr::ensure_concavity(qcr::build_reformulation(config.instance, dual, rs.zero_tol));
        write_or_print(qcr::reformulation_to_json(miqp), solve_flags.dump_miqp);
      }
      write_or_print(qcr::report_to_json(qcr::run_pipeline(config)), solve_flags.out);
    } else if (phase1->parsed()) {
      const RunConfig config = to_config(phase1_flags);
      const qcr::ResolvedSettings rs = qcr::resolve_settings(config);
      qcr::BundleSettings bs;
      bs.tol = rs.phase1_tol;
      bs.max_iter = config.bundle_max_iter;
      bs.oracle.tol_gap = rs.oracle_tol;
      const qcr::SdpRelaxation relax = qcr::build_base_relaxation(qcr::normalized_max(config.instance));
      const int p = static_cast<int>(std::lround(config.delta * static_cast<double>(relax.catalog.size())));
      const qcr::DualSolution dual = qcr::compute_beta(relax, p, bs);
      if (!config.log_dir.empty()) qcr::write_bundle_log_csv(dual, config.log_dir + "/bundle.csv");
      write_or_print(qcr::dual_solution_to_json(dual, config.instance.sense == qcr::Sense::min),
                     phase1_flags.out);
    } else if (brute->parsed()) {
      const QpInstance inst = qcr::load_instance(brute_in);
      const qcr::BruteForceResult result = qcr::brute_force_optimum(inst, brute_limit);
      nlohmann::ordered_json j;
      j["instance"] = inst.name;
      j["value"] = result.value;
      j["point"] = std::vector<int>(result.point.x.begin(), result.point.x.end());
      write_or_print(j.dump(2) + "\n", brute_out);
    } else if (batch->parsed()) {
      const qcr::BatchResult result = qcr::run_batch(parse_batch_file(batch_config));
      write_or_print(qcr::batch_to_json(result), batch_out);
      if (!batch_out.empty()) std::cout << qcr::batch_to_text(result);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

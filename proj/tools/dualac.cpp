// Command-line front end: train, ablation, oracle-check.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualac/driver.hpp"
#include "dualac/envs.hpp"
#include "dualac/errors.hpp"
#include "dualac/mdp.hpp"

namespace {

using namespace dualac;

DualAcConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                            const std::optional<int>& iterations) {
  DualAcConfig cfg = path.empty() ? DualAcConfig{} : load_config(path);
  if (seed) cfg.seed = *seed;
  if (iterations) cfg.iterations = *iterations;
  cfg.validate();
  return cfg;
}

int cmd_train(const std::string& env, const std::string& config, const std::optional<std::uint64_t>& seed,
              const std::optional<int>& iterations, const std::string& out, bool quiet) {
  const DualAcConfig cfg = resolve_config(config, seed, iterations);
  std::optional<std::filesystem::path> dir;
  if (!out.empty()) dir = out;
  const RecordSink sink = [quiet](const IterationRecord& r) {
    if (!quiet) std::cout << record_to_json(r).dump() << '\n';
  };
  try {
    const auto records = run_experiment(cfg, env, dir, sink);
    if (!records.empty()) std::cerr << "final return (last 10): " << final_return(records) << '\n';
  } catch (const DivergedError& e) {
    std::cerr << "iteration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "iteration error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int cmd_ablation(const std::string& env, const std::string& config, const std::vector<std::uint64_t>& seeds,
                 const std::optional<int>& iterations, const std::string& out) {
  const DualAcConfig cfg = resolve_config(config, std::nullopt, iterations);
  std::optional<std::filesystem::path> dir;
  if (!out.empty()) dir = out;
  AblationTable table;
  try {
    table = ablation_suite(cfg, env, seeds, dir);
  } catch (const DivergedError& e) {
    std::cerr << "iteration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "iteration error: " << e.what() << '\n';
    return 2;
  }
  const auto j = ablation_to_json(table);
  if (dir) std::ofstream(*dir / "ablation.json") << j.dump(2) << '\n';
  for (const auto& s : table.summary) {
    std::printf("%-16s %12.4f +- %.4f (n=%d)\n", s.variant.c_str(), s.mean, s.half_width, s.n);
  }
  bool all = true;
  for (const auto& c : check_ablation_ordering(table)) {
    std::printf("%s %s\n", c.pass ? "PASS" : "FAIL", c.description.c_str());
    all = all && c.pass;
  }
  return all ? 0 : 3;
}

int cmd_oracle_check(const std::string& env, double gamma, double tol, const std::string& out) {
  auto e = make_env(env);
  TabularMdp mdp = as_tabular(*e);
  if (gamma > 0.0) mdp = mdp.with_gamma(gamma);
  const LpSolution sol = solve_lp_oracles(mdp, tol);
  const TabularPolicy& greedy = sol.pi_star;
  nlohmann::json j = {{"env", env},
                      {"gamma", mdp.gamma()},
                      {"primal_objective", sol.primal},
                      {"dual_objective", sol.dual},
                      {"duality_gap", duality_gap(mdp, sol.v_star, sol.rho_star)},
                      {"occupancy_total", sol.rho_star.total()},
                      {"dual_feasibility_residual", dual_feasibility_residual(mdp, sol.rho_star)},
                      {"optimal_return", expected_return(mdp, greedy)},
                      {"v_star", std::vector<double>(sol.v_star.data(), sol.v_star.data() + sol.v_star.size())}};
  std::vector<int> actions;
  for (int s = 0; s < mdp.n_states(); ++s) {
    Eigen::Index a = 0;
    greedy.probs.row(s).maxCoeff(&a);
    actions.push_back(static_cast<int>(a));
  }
  j["greedy_actions"] = actions;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(std::filesystem::path(out) / "oracle.json") << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual Actor-Critic: training, ablations and exact tabular oracles"};
  app.require_subcommand(1);

  std::string env = "gridworld";
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "run Dual-AC and stream one JSON record per iteration");
  train->add_option("--env", env, "environment: chain2, chain5, gridworld, pendulum or mdp:<file>");
  train->add_option("--config", config, "JSON config with DualAcConfig field names");
  train->add_option("--seed", seed, "overrides the config seed");
  train->add_option("--iterations", iterations, "overrides the config iteration count");
  train->add_option("--out", out, "output directory for metrics.jsonl and checkpoint.json");
  train->add_flag("--quiet", quiet, "do not echo records to stdout");

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  auto* ablation = app.add_subcommand("ablation", "run every ablation variant over several seeds");
  ablation->add_option("--env", env, "environment name");
  ablation->add_option("--config", config, "JSON config for the base (full) variant");
  ablation->add_option("--seeds", seeds, "seeds, e.g. --seeds 0 1 2")->expected(2, 1000);
  ablation->add_option("--iterations", iterations, "overrides the config iteration count");
  ablation->add_option("--out", out, "output directory");

  double gamma = 0.0;
  double tol = 1e-11;
  auto* oracle = app.add_subcommand("oracle-check", "solve a tabular environment exactly by its LP oracles");
  oracle->add_option("--env", env, "tabular environment name or mdp:<file>");
  oracle->add_option("--gamma", gamma, "override the discount");
  oracle->add_option("--tol", tol, "value-iteration tolerance");
  oracle->add_option("--out", out, "output directory for oracle.json");
  oracle->add_option("--seed", seed, "unused; accepted for a uniform interface");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(env, config, seed, iterations, out, quiet);
    if (*ablation) return cmd_ablation(env, config, seeds, iterations, out);
    if (*oracle) return cmd_oracle_check(env, gamma, tol, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

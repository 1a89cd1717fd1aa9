#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dualac/envs.hpp"
#include "dualac/estimators.hpp"
#include "dualac/function_approx.hpp"
#include "dualac/optimizer.hpp"

namespace dualac {

enum class Ablation { kFull, kNoMultistep, kNoPathreg, kNoUnbiasedV, kNaive };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& name);

enum class PolicyUpdate { kNatural, kExactProx };

struct InnerVConfig {
  int max_iters = 2000;      // budget of the converged fit
  double grad_tol = 1e-6;    // relative to the gradient norm at the warm start
  double ridge = 0.1;        // proximal weight on |theta - theta_prev|^2
  double lr = 0.5;           // stepsize of the fixed-step fits (times the Jacobi preconditioner)
  int biased_steps = 5;      // steps used by no_unbiased_v
  int fixed_steps = 0;       // > 0 replaces the converged fit with this many steps
};

struct DualAcConfig {
  int k = 10;
  double eta_v = 1.0;
  double eta_alpha = 10.0;
  double eta_mu = 1.0;
  StepsizeSchedule schedule{};
  int batch_m = 24;
  double gamma = 0.0;  // <= 0 uses the environment's gamma_hint
  int horizon = 0;     // <= 0 uses the environment's horizon
  InnerVConfig inner_v{};
  CgConfig cg{};
  bool normalize = true;
  PolicyUpdate update = PolicyUpdate::kNatural;
  Ablation ablation = Ablation::kFull;
  std::uint64_t seed = 0;
  int iterations = 100;
  int n_features = 100;        // random features for continuous policy and value
  double initial_log_std = 0.0;

  void validate() const;
  /// Copy with the ablation's forced settings applied.
  DualAcConfig effective() const;
};

nlohmann::json config_to_json(const DualAcConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
DualAcConfig config_from_json(const nlohmann::json& j, DualAcConfig base = {});
DualAcConfig load_config(const std::filesystem::path& path, DualAcConfig base = {});

struct IterationRecord {
  int iteration = 0;
  double mean_return = 0.0;             // undiscounted, over the batch
  double mean_discounted_return = 0.0;  // over the batch
  std::optional<double> eval_return;    // exact mu^T V^pi (tabular only)
  double mean_delta = 0.0;
  bool v_converged = false;
  double v_residual = 0.0;
  int v_iterations = 0;
  double kl = 0.0;
  double stepsize = 0.0;
  double g_finv_g = 0.0;
  bool normalize_fallback = false;
  double wall_time = 0.0;
};

nlohmann::json record_to_json(const IterationRecord& r);
IterationRecord record_from_json(const nlohmann::json& j);

/// Everything an iteration reads and writes. Iteration randomness derives from (seed, iteration).
struct TrainingState {
  std::unique_ptr<Environment> env;
  std::unique_ptr<Policy> policy;
  std::optional<LinearValue> value;
  std::optional<TabularMdp> mdp;  // exact model at the training discount (tabular only)
  int iteration = 0;              // completed iterations
  double gamma = 0.0;
  int horizon = 0;
  std::vector<std::string> trace;  // stage names of the last iteration, in execution order

  TrainingState() = default;
  TrainingState(TrainingState&&) = default;
  TrainingState& operator=(TrainingState&&) = default;
};

/// Fresh state: zero value weights, uniform (tabular) or zero-mean Gaussian policy.
/// Continuous tasks set the RBF bandwidth by the median trick on initial rollouts.
TrainingState init_training(const DualAcConfig& cfg, std::unique_ptr<Environment> env);

/// One outer iteration: sample, fit V, alpha~, stepsize, policy gradient, policy update.
/// Throws DivergedError / NumericalError on a failed iteration; the state is left untouched then.
IterationRecord dual_ac_iteration(TrainingState& state, const DualAcConfig& cfg);

NamedArrays save_training(const TrainingState& state, const DualAcConfig& cfg);
TrainingState load_training(const NamedArrays& arrays, const DualAcConfig& cfg, std::unique_ptr<Environment> env);

using RecordSink = std::function<void(const IterationRecord&)>;

/**
 * Full run. With out_dir set, metrics stream to out_dir/metrics.jsonl and the
 * checkpoint (checkpoint.json) is written at the start and after each iteration,
 * so a failed iteration leaves the last good one on disk.
 */
std::vector<IterationRecord> run_experiment(const DualAcConfig& cfg, const std::string& env_name,
                                            const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                            const RecordSink& sink = {});

/// Final performance of a run: mean of eval_return (tabular) or mean_return over the last `window` records.
double final_return(const std::vector<IterationRecord>& records, int window = 10);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double final_return = 0.0;
};

struct AblationSummary {
  std::string variant;
  double mean = 0.0;
  double half_width = 0.0;  // standard error of the mean over seeds
  int n = 0;
};

struct AblationTable {
  std::string env;
  std::string full_variant;  // the row the ordering checks compare against
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;

  const AblationSummary& find(const std::string& variant) const;
};

struct VariantSpec {
  std::string name;
  DualAcConfig cfg;
};

/// full (base k), full at k in {10, 50} when k + 1 <= horizon, no_multistep, no_pathreg, no_unbiased_v, naive.
std::vector<VariantSpec> ablation_variants(const DualAcConfig& base, int horizon);

AblationTable ablation_suite(const DualAcConfig& base, const std::string& env_name, const std::vector<std::uint64_t>& seeds,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt);

AblationSummary summarize(const std::string& variant, const std::vector<double>& values);

struct OrderingCheck {
  std::string description;
  bool pass = false;
};

/// full >= every ablation (or overlap), naive <= every other variant (or overlap), naive not ranked first.
std::vector<OrderingCheck> check_ablation_ordering(const AblationTable& table);

nlohmann::json ablation_to_json(const AblationTable& table);

}  // namespace dualac

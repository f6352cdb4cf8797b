#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibgrpo/expert_gen.hpp"
#include "ibgrpo/policy_model.hpp"
#include "ibgrpo/rewards.hpp"
#include "ibgrpo/sim_env.hpp"

namespace ibgrpo {

enum class OptimizerKind { kSgd, kAdam };

const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

// First-order optimizer minimizing a loss. Adam keeps per-parameter moments.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t size, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8);
  void step(std::vector<double>& theta, std::span<const double> grad, double lr);

 private:
  OptimizerKind kind_;
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Linear ramp from lr / warmup to lr over the first `warmup` steps.
double warmup_lr(double lr, long step, long warmup);

// ---------------------------------------------------------------------------
// Behavior cloning.

struct SftConfig {
  double learning_rate = 1e-2;
  int epochs = 10;
  double warmup_fraction = 0.1;
  int batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SftReport {
  double initial_nll = 0.0;
  std::vector<double> epoch_nll;  // mean NLL during each epoch
  std::vector<double> final_nll;  // mean NLL after each epoch
};

struct SftResult {
  PolicyParams params;
  SftReport report;
};

PromptContext demo_context(const DemoRecord& r);

// Mean over records of -log mu(path | context).
double dataset_nll(const PolicyParams& params, const DemoDataset& data);

// Throws std::invalid_argument on an empty dataset, std::runtime_error on a
// non-finite loss.
SftResult sft_train(const PolicyParams& params, const DemoDataset& data, const SftConfig& cfg);

// ---------------------------------------------------------------------------
// IB-GRPO.

enum class AdvantageMode { kIndicator, kWeightedSum, kHvContribution };

// How objective values are scaled inside a group before fitness.
enum class ObjectiveScaling {
  kRaw,          // values as composed
  kGroupMinMax,  // each objective mapped to [0, 1] over the group; constant objectives to 0
};

const char* scaling_name(ObjectiveScaling s);
ObjectiveScaling parse_scaling(const std::string& name);

const char* advantage_name(AdvantageMode m);
AdvantageMode parse_advantage(const std::string& name);

struct GrpoConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;          // prompts per optimization step
  int epochs = 5;
  int group_size = 8;
  int warmup_steps = 10;
  double clip_low = 0.2;
  double clip_high = 0.28;
  double kappa = 0.05;
  double adv_eps = 1e-8;
  bool per_token_ratio = false;
  double kl_coef = 0.0;
  int updates_per_batch = 1;
  double temperature = 1.0;
  AdvantageMode advantage = AdvantageMode::kIndicator;
  ObjectiveScaling scaling = ObjectiveScaling::kRaw;
  std::vector<double> weights{1.0, 1.0, 1.0, 1.0};  // weighted_sum only
  RewardMask mask;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 0;

  void validate() const;
};

// One student prompt in the training set.
struct TrainPrompt {
  int id = 0;
  PromptContext ctx;
};

std::vector<TrainPrompt> make_prompts(std::span<const StudentEntry> students, int target_len);

struct GroupSample {
  std::vector<int> path;
  std::vector<double> old_step_log_probs;
  double old_log_prob = 0.0;
  std::uint64_t rollout_seed = 0;
  RewardVector reward;
  double fitness = 0.0;
  double advantage = 0.0;
};

struct SampleGroup {
  int prompt_id = 0;
  PromptContext ctx;
  std::vector<GroupSample> samples;
};

// Fitness of each member of a group of reward vectors under the configured
// advantage mode and reward mask.
std::vector<double> group_fitness(std::span<const RewardVector> rewards, const GrpoConfig& cfg);

// Samples K paths per prompt from `params_old`, rolls them out and attaches
// rewards, fitness and advantages. Seeds derive from (prompt id, sample, epoch).
std::vector<SampleGroup> sample_groups(const PolicyParams& params_old,
                                       std::span<const TrainPrompt> prompts,
                                       const GrpoConfig& cfg, const Environment& env,
                                       const RewardContext& rewards, int epoch);

// min(rho A, clip(rho, 1 - lo, 1 + hi) A).
double clipped_term(double rho, double advantage, double clip_low, double clip_high);
// d clipped_term / d log rho: rho * A, or exactly 0 in the clipped flat region.
double clipped_term_slope(double rho, double advantage, double clip_low, double clip_high);

struct SurrogateResult {
  double objective = 0.0;  // mean over samples and prompts
  std::vector<double> grad;  // gradient of the objective
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

SurrogateResult surrogate_gradient(const PolicyParams& params, std::span<const SampleGroup> groups,
                                   const GrpoConfig& cfg, const PolicyParams* reference = nullptr);

struct TrainStepRecord {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double e_p = 0.0;
  double s_zpd = 0.0;
  double r_len = 0.0;
  double d_div = 0.0;
  double len_score = 0.0;
  double div_path = 0.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double adv_min = 0.0;
  double adv_max = 0.0;
  double clip_fraction = 0.0;
};

struct EvalPoint {
  int step = 0;
  double e_p = 0.0;
};

struct TrainReport {
  std::vector<TrainStepRecord> steps;
  std::vector<EvalPoint> evals;

  void write_csv(std::ostream& out) const;
  nlohmann::json summary() const;
};

// Snapshot, sample, then one optimizer update on the clipped surrogate.
TrainStepRecord ib_grpo_step(PolicyParams& params, const PolicyParams& params_old,
                             std::span<const TrainPrompt> prompts, const GrpoConfig& cfg,
                             const Environment& env, const RewardContext& rewards, int epoch,
                             Optimizer& opt, double lr);

struct TrainResult {
  PolicyParams params;
  TrainReport report;
};

// Called after every epoch with (epoch, params); returns a held-out E_p to log.
using EvalHook = std::function<double(int, const PolicyParams&)>;

TrainResult train_loop(const PolicyParams& init, std::span<const TrainPrompt> prompts,
                       const GrpoConfig& cfg, const Environment& env,
                       const RewardContext& rewards, const EvalHook& eval_hook = {});

// ---------------------------------------------------------------------------
// Evaluation.

// Maps a student and a target length to a path.
using PathGenerator = std::function<std::vector<int>(const StudentEntry&, int)>;

PathGenerator greedy_policy(const PolicyParams& params);
PathGenerator sampled_policy(const PolicyParams& params, std::uint64_t seed);
// Fixed-length paths of uniform concepts.
PathGenerator random_policy(int num_concepts, std::uint64_t seed);
// Every step picks the concept with difficulty nearest z(a); ties go to the lowest id.
PathGenerator nearest_zpd_policy(const RewardContext& rewards);
// Emits the stored path of each student.
PathGenerator replay_policy(std::map<int, std::vector<int>> paths);

struct EvalRow {
  int student = 0;
  std::vector<int> path;
  double e_p = 0.0;
  double s_zpd = 0.0;
  double len_score = 0.0;
  double div_path = 0.0;
};

struct MetricSummary {
  std::string policy;
  int target_len = 0;
  int n = 0;
  double e_p_mean = 0.0, e_p_std = 0.0;
  double s_zpd_mean = 0.0, s_zpd_std = 0.0;
  double len_score_mean = 0.0, len_score_std = 0.0;
  double div_path_mean = 0.0, div_path_std = 0.0;
  double length_mean = 0.0;
};

struct EvalResult {
  MetricSummary summary;
  std::vector<EvalRow> rows;
};

// Rollout seed of student s is derive_seed(seed, {kEval, s}), shared by every
// policy evaluated with the same seed.
EvalResult evaluate_policy(const PathGenerator& policy, const std::string& tag,
                           std::span<const StudentEntry> students, const Environment& env,
                           int target_len, const RewardContext& rewards, std::uint64_t seed);

}  // namespace ibgrpo

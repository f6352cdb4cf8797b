#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibgrpo/expert_gen.hpp"
#include "ibgrpo/sim_env.hpp"
#include "ibgrpo/trainers.hpp"

namespace ibgrpo {

// Invalid configuration: unknown key, wrong type, or a value outside its
// module's invariants. The message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Which d(c) table S_ZPD reads.
enum class DifficultySource {
  kEmpirical,  // cohort error rates
  kCatalog,    // configured difficulties
};

struct StudentSettings {
  int count = 200;
  double eval_fraction = 0.2;
};

struct ZpdSettings {
  int num_bins = 5;
  double outcome_threshold = 0.9;
  int corpus_horizon_factor = 4;  // corpus rollouts stop after factor * target_len steps
  DifficultySource difficulty_source = DifficultySource::kEmpirical;
  int cohort_size = 10000;
};

struct RewardSettings {
  double sigma = 0.1;
  int tolerance = 1;
  double penalty = 0.1;
  int ngram = 2;
  double kappa = 0.05;
  double adv_eps = 1e-8;
};

struct PolicySettings {
  int hidden = 32;
  double init_scale = 0.05;
};

struct EvalSettings {
  std::vector<int> lengths{5, 10, 20};
};

// One experiment. Module seeds are derived from `seed`; they are not stored.
struct ExperimentConfig {
  std::string catalog_path;  // empty: built-in catalog with num_concepts concepts
  int num_concepts = 20;
  SimConfig sim;
  StudentSettings students;
  GaConfig ga;
  TeacherConfig teacher;
  SynthesisConfig synthesis;
  ZpdSettings zpd;
  RewardSettings rewards;
  PolicySettings policy;
  SftConfig sft;
  std::string sft_source = "GA+RL";
  GrpoConfig grpo;
  EvalSettings eval;
  int target_len = 10;
  std::uint64_t seed = 42;
  std::string output_dir = "runs";

  std::string base_dir;  // directory relative paths resolve against; not serialized

  ExperimentConfig();

  // Throws ConfigError.
  void validate() const;
  std::string resolved_catalog_path() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace ibgrpo

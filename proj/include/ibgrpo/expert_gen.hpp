#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ibgrpo/random.hpp"
#include "ibgrpo/sim_env.hpp"

namespace ibgrpo {

// ---------------------------------------------------------------------------
// Genetic search over fixed-length concept sequences.

struct Chromosome {
  std::vector<int> genes;
  double fitness = 0.0;  // E_p under the simulator
};

struct GaConfig {
  int population_size = 10;
  double crossover_prob = 1.0;
  double mutation_prob = 0.01;
  int generations = 500;
  int tournament_size = 2;
  int elitism_count = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GaResult {
  Chromosome best;
  std::vector<Chromosome> population;      // final generation
  std::vector<double> best_per_generation;  // [0] is the initial population
};

// Single-point crossover with the cut uniform in [1, L-1]. Parents shorter
// than 2 genes are returned unchanged.
std::pair<std::vector<int>, std::vector<int>> crossover(const std::vector<int>& parent1,
                                                        const std::vector<int>& parent2,
                                                        Rng& rng);

// Each gene is independently resampled uniformly with probability `prob`.
std::vector<int> mutate(std::vector<int> genes, double prob, int num_concepts, Rng& rng);

// Index of the fittest of `size` uniform draws (with replacement).
std::size_t tournament_select(std::span<const Chromosome> population, int size, Rng& rng);

GaResult ga_search(const StudentState& student, const Environment& env, int length,
                   const GaConfig& cfg);

// ---------------------------------------------------------------------------
// Tabular Q-learning teacher.

struct TeacherConfig {
  int episodes = 3000;
  int horizon = 10;
  double learning_rate = 0.1;
  double discount = 0.9;
  double epsilon = 0.2;
  int proficiency_buckets = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Q(s, c) over a per-action state signature: the proficiency bucket of the
// student, the mastery bucket {low, mid, high} of c, and whether c's
// prerequisites are satisfied. The signature only reads target_set-relevant
// quantities, so the table size is |C| * buckets * 3 * 2 regardless of |C|.
class TeacherPolicy {
 public:
  static constexpr int kMasteryBuckets = 3;

  TeacherPolicy(int num_concepts, int proficiency_buckets);

  int num_concepts() const { return num_concepts_; }
  int num_signatures() const { return proficiency_buckets_ * kMasteryBuckets * 2; }

  int signature(std::span<const double> mastery, double proficiency, const Environment& env,
                int concept_id) const;
  double q(int signature, int concept_id) const;
  double& q(int signature, int concept_id);

  // argmax_c Q(sig(s, c), c); ties go to the lowest id.
  int greedy_action(std::span<const double> mastery, double proficiency,
                    const Environment& env) const;
  double state_value(std::span<const double> mastery, double proficiency,
                     const Environment& env) const;

  const std::vector<double>& table() const { return table_; }

  nlohmann::json to_json() const;
  static TeacherPolicy from_json(const nlohmann::json& j);

 private:
  int num_concepts_;
  int proficiency_buckets_;
  std::vector<double> table_;
};

// Reward per step is the gain in expected exam score.
TeacherPolicy train_teacher(const Environment& env, const TeacherConfig& cfg);

// L greedy actions against a private copy of the student.
std::vector<int> teacher_rollout(const TeacherPolicy& teacher, const StudentState& student,
                                 const Environment& env, int length);

// Myopic tutor: every step practices the concept with the largest immediate
// exam gain (ties to the lowest id). Stops after the first step whose E_p
// exceeds `stop_effect`, or after `max_len` steps.
std::vector<int> greedy_gain_rollout(const StudentState& student, const Environment& env,
                                     int max_len, double stop_effect);

// ---------------------------------------------------------------------------
// Demonstration data.

enum class DemoSource { kRand, kGa, kRl };

const char* source_tag(DemoSource s);
DemoSource parse_source(const std::string& tag);

struct StudentEntry {
  int id = 0;
  StudentState state;
};

struct DemoRecord {
  int student = 0;
  std::vector<double> mastery;  // session-start snapshot
  double proficiency = 0.0;
  int target_len = 0;
  std::vector<int> path;
  DemoSource source = DemoSource::kGa;
  double e_p = 0.0;
  std::uint64_t seed = 0;  // rollout seed that reproduces e_p

  nlohmann::json to_json() const;
  static DemoRecord from_json(const nlohmann::json& j);
};

struct DemoDataset {
  std::vector<DemoRecord> records;

  double mean_effect() const;
  void write(std::ostream& out) const;
  static DemoDataset read(std::istream& in);
  void save(const std::string& path) const;
  static DemoDataset load(const std::string& path);
};

// Mean over students of the mean pairwise (1 - n-gram Jaccard) among that
// student's demonstrations.
double pool_diversity(const DemoDataset& pool, int n = 2);

struct SynthesisConfig {
  int length = 10;
  double quality_threshold = 0.6;
  int per_student_quota = 3;
  std::uint64_t seed = 0;
};

// The four demonstration sources compared when synthesizing data, all built
// from one GA run and one teacher rollout per student.
struct ExpertPools {
  DemoDataset rand;
  DemoDataset ga;
  DemoDataset rl;
  DemoDataset ga_rl;
};

ExpertPools synthesize_pools(std::span<const StudentEntry> students, const Environment& env,
                             const GaConfig& ga_cfg, const TeacherPolicy& teacher,
                             const SynthesisConfig& cfg);

// Per student: GA paths with E_p >= quality_threshold up to the quota, the
// remainder filled with teacher rollouts.
DemoDataset build_sft_dataset(std::span<const StudentEntry> students, const Environment& env,
                              const GaConfig& ga_cfg, const TeacherPolicy& teacher,
                              const SynthesisConfig& cfg);

}  // namespace ibgrpo

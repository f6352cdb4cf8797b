#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibgrpo/random.hpp"

namespace ibgrpo {

struct Concept {
  int id = 0;
  double difficulty = 0.0;
  std::vector<int> prereqs;
};

// Concepts with difficulties and a prerequisite DAG; the action space of the
// recommender. Construction validates every invariant and throws
// std::invalid_argument on violation.
class ConceptCatalog {
 public:
  ConceptCatalog(std::vector<Concept> concepts, std::vector<int> target_set);

  // Evenly spaced difficulties on [0.05, 0.95], chain-plus-branches DAG and
  // every concept in the exam.
  static ConceptCatalog desk_default(int num_concepts = 20);

  static ConceptCatalog from_json(const nlohmann::json& j);
  static ConceptCatalog load(const std::string& path);
  nlohmann::json to_json() const;

  int size() const { return static_cast<int>(concepts_.size()); }
  const Concept& concept_at(int id) const { return concepts_.at(static_cast<std::size_t>(id)); }
  const std::vector<Concept>& concepts() const { return concepts_; }
  double difficulty(int id) const { return concept_at(id).difficulty; }
  std::vector<double> difficulties() const;
  const std::vector<int>& target_set() const { return target_set_; }
  bool valid_id(int id) const { return id >= 0 && id < size(); }

 private:
  std::vector<Concept> concepts_;
  std::vector<int> target_set_;
};

enum class InitKind {
  kUniform,  // mastery ~ U[low, high] independently per concept
  kAbility,  // per-student ability; mastery falls off with difficulty
};

// Initial mastery distribution of a fresh student.
//
// kAbility draws an ability b ~ U[ability_low, ability_high] and sets
//   m_c = low + (high - low) * sigmoid((b - d_c) / sharpness) + U(-noise, noise)
// clamped to [low, high], so easy concepts start mostly mastered.
struct InitDistribution {
  InitKind kind = InitKind::kAbility;
  double low = 0.05;
  double high = 0.98;
  double ability_low = 0.4;
  double ability_high = 0.9;
  double sharpness = 0.08;
  double noise = 0.05;
};

struct SimConfig {
  double learn_rate = 1.0;        // gamma
  double zpd_width_sim = 0.25;    // width of the Gaussian learning gain
  double prereq_threshold = 0.5;  // prerequisite mastery needed for full gain
  double gated_factor = 0.3;      // gain multiplier when a prerequisite is missing
  InitDistribution init;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Interaction {
  int concept_id = 0;
  int correct = 0;
};

struct StudentState {
  std::vector<double> mastery;
  double proficiency = 0.0;  // frozen for the session
  std::vector<Interaction> history;
};

struct ExamResult {
  double score = 0.0;
  double max_score = 0.0;
};

struct StepRecord {
  int concept_id = 0;
  int correct = 0;
  std::vector<double> mastery;  // snapshot after the step
};

struct PathRollout {
  std::vector<StepRecord> steps;
  ExamResult pre;
  ExamResult post;
  double e_p = 0.0;
  StudentState final_state;
};

// Catalog plus simulator parameters.
struct Environment {
  ConceptCatalog catalog;
  SimConfig sim;
};

StudentState init_student(const ConceptCatalog& catalog, const SimConfig& cfg,
                          std::uint64_t rng_seed);

// Gaussian-shaped gain in (difficulty - proficiency); 1 at the peak.
double gain_kernel(double difficulty, double proficiency, double width);

// 1 when every prerequisite of `concept_id` is at or above the threshold,
// otherwise cfg.gated_factor.
double prereq_factor(std::span<const double> mastery, const ConceptCatalog& catalog,
                     const SimConfig& cfg, int concept_id);

// Probability of a correct answer: mastery * (1 - 0.5 * max(0, d - a)).
double success_probability(const StudentState& state, const ConceptCatalog& catalog,
                           int concept_id);

// Deterministic mastery update for one practice of `concept_id`. Does not
// touch history. Throws std::out_of_range on an invalid id.
void apply_practice(std::vector<double>& mastery, double proficiency,
                    const ConceptCatalog& catalog, const SimConfig& cfg, int concept_id);

// Samples correctness, updates mastery and appends to history. Returns y.
int practice_step(StudentState& state, const ConceptCatalog& catalog,
                  const SimConfig& cfg, int concept_id, Rng& rng);

ExamResult administer_exam(std::span<const double> mastery, const ConceptCatalog& catalog);
inline ExamResult administer_exam(const StudentState& state, const ConceptCatalog& catalog) {
  return administer_exam(state.mastery, catalog);
}

// Normalized improvement (E_e - E_s) / (E_sup - E_s); 0 without headroom.
double learning_effect(const ExamResult& pre, const ExamResult& post);

// Executes every step of `path` and records the trajectory. Throws
// std::invalid_argument naming the offending position for an invalid id.
PathRollout run_path(const StudentState& state, std::span<const int> path,
                     const ConceptCatalog& catalog, const SimConfig& cfg,
                     std::uint64_t rng_seed);

// E_p of `path` without recording a trajectory. Mastery dynamics do not
// depend on sampled correctness, so this equals run_path(...).e_p for any seed.
double path_effect(const StudentState& state, std::span<const int> path,
                   const ConceptCatalog& catalog, const SimConfig& cfg);

// Per-concept error rate of a cohort of fresh students answering each concept once.
std::vector<double> estimate_empirical_difficulty(const ConceptCatalog& catalog,
                                                  const SimConfig& cfg, int cohort_size,
                                                  std::uint64_t rng_seed);

// One executed path, as persisted in the trajectory JSON-lines files.
struct TrajectoryRecord {
  int student = 0;
  double proficiency = 0.0;
  std::vector<int> path;
  std::vector<int> correct;
  double e_p = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrajectoryRecord from_json(const nlohmann::json& j);
};

TrajectoryRecord make_trajectory_record(int student_id, const StudentState& state,
                                        std::span<const int> path, const Environment& env,
                                        std::uint64_t rng_seed);

void write_trajectories(std::ostream& out, std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> read_trajectories(std::istream& in);

}  // namespace ibgrpo

#include "ibgrpo/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ibgrpo {

namespace {

void check_acyclic(const std::vector<Concept>& concepts) {
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> state(concepts.size(), 0);
  std::function<void(int)> visit = [&](int id) {
    state[static_cast<std::size_t>(id)] = 1;
    for (int p : concepts[static_cast<std::size_t>(id)].prereqs) {
      if (state[static_cast<std::size_t>(p)] == 1)
        throw std::invalid_argument("catalog: prerequisite cycle through concept " +
                                    std::to_string(p));
      if (state[static_cast<std::size_t>(p)] == 0) visit(p);
    }
    state[static_cast<std::size_t>(id)] = 2;
  };
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (state[i] == 0) visit(static_cast<int>(i));
}

}  // namespace

ConceptCatalog::ConceptCatalog(std::vector<Concept> concepts, std::vector<int> target_set)
    : concepts_(std::move(concepts)), target_set_(std::move(target_set)) {
  if (concepts_.empty()) throw std::invalid_argument("catalog: no concepts");
  std::sort(concepts_.begin(), concepts_.end(),
            [](const Concept& a, const Concept& b) { return a.id < b.id; });
  const int n = size();
  for (int i = 0; i < n; ++i) {
    const Concept& c = concepts_[static_cast<std::size_t>(i)];
    if (c.id != i)
      throw std::invalid_argument("catalog: ids must be dense and unique in 0.." +
                                  std::to_string(n - 1));
    if (!(c.difficulty >= 0.0 && c.difficulty <= 1.0))
      throw std::invalid_argument("catalog: difficulty of concept " + std::to_string(i) +
                                  " outside [0,1]");
    for (int p : c.prereqs)
      if (p < 0 || p >= n || p == i)
        throw std::invalid_argument("catalog: invalid prerequisite " + std::to_string(p) +
                                    " on concept " + std::to_string(i));
  }
  check_acyclic(concepts_);
  if (target_set_.empty()) throw std::invalid_argument("catalog: empty target_set");
  for (int t : target_set_)
    if (t < 0 || t >= n)
      throw std::invalid_argument("catalog: invalid target id " + std::to_string(t));
}

ConceptCatalog ConceptCatalog::desk_default(int num_concepts) {
  if (num_concepts < 2) throw std::invalid_argument("desk_default: need at least 2 concepts");
  std::vector<Concept> concepts;
  std::vector<int> targets;
  for (int i = 0; i < num_concepts; ++i) {
    Concept c;
    c.id = i;
    c.difficulty = 0.05 + 0.9 * static_cast<double>(i) / (num_concepts - 1);
    // Spine i-1 -> i, with every third concept branching off i-2.
    if (i == 1) c.prereqs = {0};
    else if (i >= 2) c.prereqs = {i % 3 == 2 ? i - 2 : i - 1};
    concepts.push_back(std::move(c));
    targets.push_back(i);
  }
  return ConceptCatalog(std::move(concepts), std::move(targets));
}

ConceptCatalog ConceptCatalog::from_json(const nlohmann::json& j) {
  std::vector<Concept> concepts;
  for (const auto& jc : j.at("concepts")) {
    Concept c;
    c.id = jc.at("id").get<int>();
    c.difficulty = jc.at("difficulty").get<double>();
    if (jc.contains("prereqs")) c.prereqs = jc.at("prereqs").get<std::vector<int>>();
    concepts.push_back(std::move(c));
  }
  return ConceptCatalog(std::move(concepts), j.at("target_set").get<std::vector<int>>());
}

ConceptCatalog ConceptCatalog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalog file: " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json ConceptCatalog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Concept& c : concepts_)
    arr.push_back({{"id", c.id}, {"difficulty", c.difficulty}, {"prereqs", c.prereqs}});
  return {{"concepts", arr}, {"target_set", target_set_}};
}

std::vector<double> ConceptCatalog::difficulties() const {
  std::vector<double> d;
  d.reserve(concepts_.size());
  for (const Concept& c : concepts_) d.push_back(c.difficulty);
  return d;
}

void SimConfig::validate() const {
  if (!(learn_rate > 0.0)) throw std::invalid_argument("sim.learn_rate must be > 0");
  if (!(zpd_width_sim > 0.0)) throw std::invalid_argument("sim.zpd_width_sim must be > 0");
  if (!(prereq_threshold >= 0.0 && prereq_threshold <= 1.0))
    throw std::invalid_argument("sim.prereq_threshold must be in [0,1]");
  if (!(gated_factor >= 0.0 && gated_factor <= 1.0))
    throw std::invalid_argument("sim.gated_factor must be in [0,1]");
  if (!(init.low >= 0.0 && init.low <= init.high && init.high <= 1.0))
    throw std::invalid_argument("sim.init: need 0 <= low <= high <= 1");
  if (init.kind == InitKind::kAbility) {
    if (!(init.ability_low <= init.ability_high))
      throw std::invalid_argument("sim.init: ability_low > ability_high");
    if (!(init.sharpness > 0.0)) throw std::invalid_argument("sim.init.sharpness must be > 0");
    if (!(init.noise >= 0.0)) throw std::invalid_argument("sim.init.noise must be >= 0");
  }
}

StudentState init_student(const ConceptCatalog& catalog, const SimConfig& cfg,
                          std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  const InitDistribution& init = cfg.init;
  StudentState s;
  s.mastery.resize(static_cast<std::size_t>(catalog.size()));
  if (init.kind == InitKind::kUniform) {
    for (double& m : s.mastery) m = rng.uniform(init.low, init.high);
  } else {
    const double ability = rng.uniform(init.ability_low, init.ability_high);
    for (int c = 0; c < catalog.size(); ++c) {
      const double sig = 1.0 / (1.0 + std::exp(-(ability - catalog.difficulty(c)) / init.sharpness));
      const double m = init.low + (init.high - init.low) * sig + rng.uniform(-init.noise, init.noise);
      s.mastery[static_cast<std::size_t>(c)] = std::clamp(m, init.low, init.high);
    }
  }
  const ExamResult pre = administer_exam(s.mastery, catalog);
  s.proficiency = pre.score / pre.max_score;
  return s;
}

double gain_kernel(double difficulty, double proficiency, double width) {
  const double z = difficulty - proficiency;
  return std::exp(-z * z / (2.0 * width * width));
}

double prereq_factor(std::span<const double> mastery, const ConceptCatalog& catalog,
                     const SimConfig& cfg, int concept_id) {
  for (int p : catalog.concept_at(concept_id).prereqs)
    if (mastery[static_cast<std::size_t>(p)] < cfg.prereq_threshold) return cfg.gated_factor;
  return 1.0;
}

double success_probability(const StudentState& state, const ConceptCatalog& catalog,
                           int concept_id) {
  const double m = state.mastery.at(static_cast<std::size_t>(concept_id));
  const double over = std::max(0.0, catalog.difficulty(concept_id) - state.proficiency);
  return std::clamp(m * (1.0 - 0.5 * over), 0.0, 1.0);
}

void apply_practice(std::vector<double>& mastery, double proficiency,
                    const ConceptCatalog& catalog, const SimConfig& cfg, int concept_id) {
  if (!catalog.valid_id(concept_id))
    throw std::out_of_range("practice: invalid concept id " + std::to_string(concept_id));
  double& m = mastery[static_cast<std::size_t>(concept_id)];
  const double gain = cfg.learn_rate *
                      gain_kernel(catalog.difficulty(concept_id), proficiency, cfg.zpd_width_sim) *
                      (1.0 - m) * prereq_factor(mastery, catalog, cfg, concept_id);
  m = std::clamp(m + gain, 0.0, 1.0);
}

int practice_step(StudentState& state, const ConceptCatalog& catalog, const SimConfig& cfg,
                  int concept_id, Rng& rng) {
  if (!catalog.valid_id(concept_id))
    throw std::out_of_range("practice: invalid concept id " + std::to_string(concept_id));
  const int y = rng.bernoulli(success_probability(state, catalog, concept_id)) ? 1 : 0;
  apply_practice(state.mastery, state.proficiency, catalog, cfg, concept_id);
  state.history.push_back({concept_id, y});
  return y;
}

ExamResult administer_exam(std::span<const double> mastery, const ConceptCatalog& catalog) {
  ExamResult r;
  for (int c : catalog.target_set()) r.score += mastery[static_cast<std::size_t>(c)];
  r.max_score = static_cast<double>(catalog.target_set().size());
  return r;
}

double learning_effect(const ExamResult& pre, const ExamResult& post) {
  const double headroom = pre.max_score - pre.score;
  if (headroom < 1e-9) return 0.0;
  return (post.score - pre.score) / headroom;
}

namespace {

void check_path(std::span<const int> path, const ConceptCatalog& catalog) {
  if (path.empty()) throw std::invalid_argument("run_path: empty path");
  for (std::size_t i = 0; i < path.size(); ++i)
    if (!catalog.valid_id(path[i]))
      throw std::invalid_argument("run_path: invalid concept id " + std::to_string(path[i]) +
                                  " at position " + std::to_string(i));
}

}  // namespace

PathRollout run_path(const StudentState& state, std::span<const int> path,
                     const ConceptCatalog& catalog, const SimConfig& cfg,
                     std::uint64_t rng_seed) {
  check_path(path, catalog);
  Rng rng(rng_seed);
  PathRollout out;
  out.final_state = state;
  out.pre = administer_exam(state, catalog);
  out.steps.reserve(path.size());
  for (int c : path) {
    const int y = practice_step(out.final_state, catalog, cfg, c, rng);
    out.steps.push_back({c, y, out.final_state.mastery});
  }
  out.post = administer_exam(out.final_state, catalog);
  out.e_p = learning_effect(out.pre, out.post);
  return out;
}

double path_effect(const StudentState& state, std::span<const int> path,
                   const ConceptCatalog& catalog, const SimConfig& cfg) {
  check_path(path, catalog);
  std::vector<double> mastery = state.mastery;
  for (int c : path) apply_practice(mastery, state.proficiency, catalog, cfg, c);
  return learning_effect(administer_exam(state.mastery, catalog),
                         administer_exam(mastery, catalog));
}

std::vector<double> estimate_empirical_difficulty(const ConceptCatalog& catalog,
                                                  const SimConfig& cfg, int cohort_size,
                                                  std::uint64_t rng_seed) {
  if (cohort_size < 1) throw std::invalid_argument("cohort_size must be >= 1");
  const auto n = static_cast<std::size_t>(catalog.size());
  std::vector<double> errors(n, 0.0);
  Rng answers(derive_seed(rng_seed, {seed_tag::kCohort}));
  for (int s = 0; s < cohort_size; ++s) {
    const StudentState st =
        init_student(catalog, cfg, derive_seed(rng_seed, {seed_tag::kStudent, static_cast<std::uint64_t>(s)}));
    for (int c = 0; c < catalog.size(); ++c)
      if (!answers.bernoulli(success_probability(st, catalog, c))) errors[static_cast<std::size_t>(c)] += 1.0;
  }
  for (double& e : errors) e /= cohort_size;
  return errors;
}

nlohmann::json TrajectoryRecord::to_json() const {
  return {{"student", student}, {"a", proficiency}, {"path", path},
          {"correct", correct}, {"e_p", e_p},      {"seed", seed}};
}

TrajectoryRecord TrajectoryRecord::from_json(const nlohmann::json& j) {
  TrajectoryRecord r;
  r.student = j.at("student").get<int>();
  r.proficiency = j.value("a", 0.0);
  r.path = j.at("path").get<std::vector<int>>();
  r.correct = j.value("correct", std::vector<int>{});
  r.e_p = j.at("e_p").get<double>();
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

TrajectoryRecord make_trajectory_record(int student_id, const StudentState& state,
                                        std::span<const int> path, const Environment& env,
                                        std::uint64_t rng_seed) {
  const PathRollout ro = run_path(state, path, env.catalog, env.sim, rng_seed);
  TrajectoryRecord r;
  r.student = student_id;
  r.proficiency = state.proficiency;
  r.path.assign(path.begin(), path.end());
  for (const StepRecord& s : ro.steps) r.correct.push_back(s.correct);
  r.e_p = ro.e_p;
  r.seed = rng_seed;
  return r;
}

void write_trajectories(std::ostream& out, std::span<const TrajectoryRecord> records) {
  for (const TrajectoryRecord& r : records) out << r.to_json().dump() << '\n';
}

std::vector<TrajectoryRecord> read_trajectories(std::istream& in) {
  std::vector<TrajectoryRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(TrajectoryRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace ibgrpo

#include "ibgrpo/expert_gen.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "ibgrpo/rewards.hpp"

namespace ibgrpo {

void GaConfig::validate() const {
  if (population_size < 2) throw std::invalid_argument("ga.population_size must be >= 2");
  if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0))
    throw std::invalid_argument("ga.crossover_prob must be in [0,1]");
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0))
    throw std::invalid_argument("ga.mutation_prob must be in [0,1]");
  if (generations < 0) throw std::invalid_argument("ga.generations must be >= 0");
  if (tournament_size < 1) throw std::invalid_argument("ga.tournament_size must be >= 1");
  if (elitism_count < 0 || elitism_count > population_size)
    throw std::invalid_argument("ga.elitism_count must be in [0, population_size]");
}

std::pair<std::vector<int>, std::vector<int>> crossover(const std::vector<int>& parent1,
                                                        const std::vector<int>& parent2,
                                                        Rng& rng) {
  if (parent1.size() != parent2.size())
    throw std::invalid_argument("crossover: parents differ in length");
  if (parent1.size() < 2) return {parent1, parent2};
  const auto cut = static_cast<std::ptrdiff_t>(1 + rng.below(parent1.size() - 1));
  std::vector<int> c1(parent1.begin(), parent1.begin() + cut);
  std::vector<int> c2(parent2.begin(), parent2.begin() + cut);
  c1.insert(c1.end(), parent2.begin() + cut, parent2.end());
  c2.insert(c2.end(), parent1.begin() + cut, parent1.end());
  return {std::move(c1), std::move(c2)};
}

std::vector<int> mutate(std::vector<int> genes, double prob, int num_concepts, Rng& rng) {
  if (prob <= 0.0) return genes;
  for (int& g : genes)
    if (rng.bernoulli(prob)) g = rng.index(num_concepts);
  return genes;
}

std::size_t tournament_select(std::span<const Chromosome> population, int size, Rng& rng) {
  if (population.empty()) throw std::invalid_argument("tournament_select: empty population");
  std::size_t best = rng.below(population.size());
  for (int t = 1; t < size; ++t) {
    const std::size_t cand = rng.below(population.size());
    if (population[cand].fitness > population[best].fitness) best = cand;
  }
  return best;
}

namespace {

// Stable order by fitness, best first.
std::vector<std::size_t> ranking(const std::vector<Chromosome>& pop) {
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pop[a].fitness > pop[b].fitness;
  });
  return order;
}

}  // namespace

GaResult ga_search(const StudentState& student, const Environment& env, int length,
                   const GaConfig& cfg) {
  if (length < 1) throw std::invalid_argument("ga_search: length must be >= 1");
  cfg.validate();
  const int n = env.catalog.size();
  Rng rng(cfg.seed);
  auto evaluate = [&](std::vector<int> genes) {
    Chromosome c;
    c.fitness = path_effect(student, genes, env.catalog, env.sim);
    c.genes = std::move(genes);
    return c;
  };

  std::vector<Chromosome> pop;
  pop.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int i = 0; i < cfg.population_size; ++i) {
    std::vector<int> genes(static_cast<std::size_t>(length));
    for (int& g : genes) g = rng.index(n);
    pop.push_back(evaluate(std::move(genes)));
  }

  GaResult result;
  result.best_per_generation.push_back(pop[ranking(pop).front()].fitness);
  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Chromosome> next;
    next.reserve(pop.size());
    const auto order = ranking(pop);
    for (int e = 0; e < cfg.elitism_count; ++e) next.push_back(pop[order[static_cast<std::size_t>(e)]]);
    while (next.size() < pop.size()) {
      const Chromosome& p1 = pop[tournament_select(pop, cfg.tournament_size, rng)];
      const Chromosome& p2 = pop[tournament_select(pop, cfg.tournament_size, rng)];
      std::vector<int> c1 = p1.genes, c2 = p2.genes;
      if (rng.bernoulli(cfg.crossover_prob)) std::tie(c1, c2) = crossover(p1.genes, p2.genes, rng);
      // unchanged children reuse the parent's fitness
      auto child = [&](std::vector<int> genes, const Chromosome& parent) {
        genes = mutate(std::move(genes), cfg.mutation_prob, n, rng);
        if (genes == parent.genes) return parent;
        return evaluate(std::move(genes));
      };
      next.push_back(child(std::move(c1), p1));
      if (next.size() < pop.size()) next.push_back(child(std::move(c2), p2));
    }
    pop = std::move(next);
    result.best_per_generation.push_back(pop[ranking(pop).front()].fitness);
  }
  result.best = pop[ranking(pop).front()];
  result.population = std::move(pop);
  return result;
}

// ---------------------------------------------------------------------------

void TeacherConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("teacher.episodes must be >= 0");
  if (horizon < 1) throw std::invalid_argument("teacher.horizon must be >= 1");
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0))
    throw std::invalid_argument("teacher.learning_rate must be in [0,1]");
  if (!(discount >= 0.0 && discount <= 1.0))
    throw std::invalid_argument("teacher.discount must be in [0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("teacher.epsilon must be in [0,1]");
  if (proficiency_buckets < 1) throw std::invalid_argument("teacher.proficiency_buckets must be >= 1");
}

TeacherPolicy::TeacherPolicy(int num_concepts, int proficiency_buckets)
    : num_concepts_(num_concepts), proficiency_buckets_(proficiency_buckets) {
  if (num_concepts < 1 || proficiency_buckets < 1)
    throw std::invalid_argument("TeacherPolicy: invalid shape");
  table_.assign(static_cast<std::size_t>(num_signatures() * num_concepts_), 0.0);
}

int TeacherPolicy::signature(std::span<const double> mastery, double proficiency,
                             const Environment& env, int concept_id) const {
  const int a_bucket = std::clamp(static_cast<int>(proficiency * proficiency_buckets_), 0,
                                  proficiency_buckets_ - 1);
  const double m = mastery[static_cast<std::size_t>(concept_id)];
  const int m_bucket = m < 0.4 ? 0 : (m < 0.8 ? 1 : 2);
  const int ready = prereq_factor(mastery, env.catalog, env.sim, concept_id) >= 1.0 ? 1 : 0;
  return (a_bucket * kMasteryBuckets + m_bucket) * 2 + ready;
}

double TeacherPolicy::q(int signature, int concept_id) const {
  return table_.at(static_cast<std::size_t>(signature * num_concepts_ + concept_id));
}

double& TeacherPolicy::q(int signature, int concept_id) {
  return table_.at(static_cast<std::size_t>(signature * num_concepts_ + concept_id));
}

int TeacherPolicy::greedy_action(std::span<const double> mastery, double proficiency,
                                 const Environment& env) const {
  int best = 0;
  double best_q = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < num_concepts_; ++c) {
    const double v = q(signature(mastery, proficiency, env, c), c);
    if (v > best_q) {
      best_q = v;
      best = c;
    }
  }
  return best;
}

double TeacherPolicy::state_value(std::span<const double> mastery, double proficiency,
                                  const Environment& env) const {
  const int c = greedy_action(mastery, proficiency, env);
  return q(signature(mastery, proficiency, env, c), c);
}

nlohmann::json TeacherPolicy::to_json() const {
  return {{"num_concepts", num_concepts_},
          {"proficiency_buckets", proficiency_buckets_},
          {"q", table_}};
}

TeacherPolicy TeacherPolicy::from_json(const nlohmann::json& j) {
  TeacherPolicy t(j.at("num_concepts").get<int>(), j.at("proficiency_buckets").get<int>());
  auto q = j.at("q").get<std::vector<double>>();
  if (q.size() != t.table_.size()) throw std::invalid_argument("teacher: table size mismatch");
  t.table_ = std::move(q);
  return t;
}

TeacherPolicy train_teacher(const Environment& env, const TeacherConfig& cfg) {
  cfg.validate();
  const ConceptCatalog& cat = env.catalog;
  TeacherPolicy teacher(cat.size(), cfg.proficiency_buckets);
  Rng explore(derive_seed(cfg.seed, {seed_tag::kTeacher}));
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const StudentState s = init_student(
        cat, env.sim, derive_seed(cfg.seed, {seed_tag::kTeacher, seed_tag::kStudent, static_cast<std::uint64_t>(ep)}));
    std::vector<double> mastery = s.mastery;
    double score = administer_exam(mastery, cat).score;
    for (int t = 0; t < cfg.horizon; ++t) {
      const int c = explore.bernoulli(cfg.epsilon) ? explore.index(cat.size())
                                                   : teacher.greedy_action(mastery, s.proficiency, env);
      const int sig = teacher.signature(mastery, s.proficiency, env, c);
      apply_practice(mastery, s.proficiency, cat, env.sim, c);
      const double next_score = administer_exam(mastery, cat).score;
      double target = next_score - score;
      if (t + 1 < cfg.horizon) target += cfg.discount * teacher.state_value(mastery, s.proficiency, env);
      double& qv = teacher.q(sig, c);
      qv += cfg.learning_rate * (target - qv);
      score = next_score;
    }
  }
  return teacher;
}

std::vector<int> teacher_rollout(const TeacherPolicy& teacher, const StudentState& student,
                                 const Environment& env, int length) {
  std::vector<double> mastery = student.mastery;
  std::vector<int> path;
  path.reserve(static_cast<std::size_t>(std::max(length, 0)));
  for (int t = 0; t < length; ++t) {
    const int c = teacher.greedy_action(mastery, student.proficiency, env);
    apply_practice(mastery, student.proficiency, env.catalog, env.sim, c);
    path.push_back(c);
  }
  return path;
}

std::vector<int> greedy_gain_rollout(const StudentState& student, const Environment& env,
                                     int max_len, double stop_effect) {
  const ConceptCatalog& cat = env.catalog;
  std::vector<double> mastery = student.mastery;
  const ExamResult pre = administer_exam(mastery, cat);
  std::vector<int> path;
  std::vector<double> trial;
  for (int t = 0; t < max_len; ++t) {
    int best = 0;
    double best_score = -1.0;
    for (int c = 0; c < cat.size(); ++c) {
      trial = mastery;
      apply_practice(trial, student.proficiency, cat, env.sim, c);
      const double score = administer_exam(trial, cat).score;
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    apply_practice(mastery, student.proficiency, cat, env.sim, best);
    path.push_back(best);
    if (learning_effect(pre, administer_exam(mastery, cat)) > stop_effect) break;
  }
  return path;
}

// ---------------------------------------------------------------------------

const char* source_tag(DemoSource s) {
  switch (s) {
    case DemoSource::kRand: return "Rand";
    case DemoSource::kGa: return "GA";
    case DemoSource::kRl: return "RL";
  }
  return "?";
}

DemoSource parse_source(const std::string& tag) {
  if (tag == "Rand") return DemoSource::kRand;
  if (tag == "GA") return DemoSource::kGa;
  if (tag == "RL") return DemoSource::kRl;
  throw std::invalid_argument("unknown demo source: " + tag);
}

nlohmann::json DemoRecord::to_json() const {
  return {{"student", student},
          {"context", {{"mastery", mastery}, {"a", proficiency}, {"target_len", target_len}}},
          {"path", path},
          {"source", source_tag(source)},
          {"e_p", e_p},
          {"seed", seed}};
}

DemoRecord DemoRecord::from_json(const nlohmann::json& j) {
  DemoRecord r;
  r.student = j.value("student", 0);
  const auto& ctx = j.at("context");
  r.mastery = ctx.at("mastery").get<std::vector<double>>();
  r.proficiency = ctx.at("a").get<double>();
  r.target_len = ctx.at("target_len").get<int>();
  r.path = j.at("path").get<std::vector<int>>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.e_p = j.at("e_p").get<double>();
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

double DemoDataset::mean_effect() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const DemoRecord& r : records) s += r.e_p;
  return s / static_cast<double>(records.size());
}

void DemoDataset::write(std::ostream& out) const {
  for (const DemoRecord& r : records) out << r.to_json().dump() << '\n';
}

DemoDataset DemoDataset::read(std::istream& in) {
  DemoDataset d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    d.records.push_back(DemoRecord::from_json(nlohmann::json::parse(line)));
  }
  return d;
}

void DemoDataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

DemoDataset DemoDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demo dataset: " + path);
  return read(in);
}

double pool_diversity(const DemoDataset& pool, int n) {
  std::map<int, std::vector<std::vector<int>>> by_student;
  for (const DemoRecord& r : pool.records) by_student[r.student].push_back(r.path);
  double total = 0.0;
  int groups = 0;
  for (const auto& [id, paths] : by_student) {
    if (paths.size() < 2) continue;
    double s = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < paths.size(); ++i)
      for (std::size_t j = i + 1; j < paths.size(); ++j) {
        s += 1.0 - ngram_jaccard(paths[i], paths[j], n);
        ++pairs;
      }
    total += s / pairs;
    ++groups;
  }
  return groups > 0 ? total / groups : 0.0;
}

namespace {

DemoRecord make_record(const StudentEntry& st, const Environment& env, const SynthesisConfig& cfg,
                       std::vector<int> path, DemoSource source, int slot) {
  DemoRecord r;
  r.student = st.id;
  r.mastery = st.state.mastery;
  r.proficiency = st.state.proficiency;
  r.target_len = cfg.length;
  r.source = source;
  r.seed = derive_seed(cfg.seed, {seed_tag::kRollout, static_cast<std::uint64_t>(st.id),
                                  static_cast<std::uint64_t>(source), static_cast<std::uint64_t>(slot)});
  r.e_p = run_path(st.state, path, env.catalog, env.sim, r.seed).e_p;
  r.path = std::move(path);
  return r;
}

// Final GA population ordered for demonstration use: distinct paths by
// fitness first, then the remaining duplicates.
std::vector<const Chromosome*> ga_candidates(const GaResult& ga) {
  const auto order = ranking(ga.population);
  std::vector<const Chromosome*> distinct, dups;
  std::set<std::vector<int>> seen;
  for (std::size_t i : order) {
    const Chromosome* c = &ga.population[i];
    (seen.insert(c->genes).second ? distinct : dups).push_back(c);
  }
  distinct.insert(distinct.end(), dups.begin(), dups.end());
  return distinct;
}

}  // namespace

ExpertPools synthesize_pools(std::span<const StudentEntry> students, const Environment& env,
                             const GaConfig& ga_cfg, const TeacherPolicy& teacher,
                             const SynthesisConfig& cfg) {
  if (cfg.per_student_quota < 1) throw std::invalid_argument("synthesis: quota must be >= 1");
  if (cfg.length < 1) throw std::invalid_argument("synthesis: length must be >= 1");
  ExpertPools pools;
  const int n = env.catalog.size();
  for (const StudentEntry& st : students) {
    GaConfig gcfg = ga_cfg;
    gcfg.seed = derive_seed(ga_cfg.seed, {seed_tag::kGa, static_cast<std::uint64_t>(st.id)});
    const GaResult ga = ga_search(st.state, env, cfg.length, gcfg);
    const auto candidates = ga_candidates(ga);
    const std::vector<int> rl_path = teacher_rollout(teacher, st.state, env, cfg.length);
    Rng rand_rng(derive_seed(cfg.seed, {seed_tag::kRandomPolicy, static_cast<std::uint64_t>(st.id)}));

    int ga_rl_slot = 0;
    for (int k = 0; k < cfg.per_student_quota; ++k) {
      std::vector<int> rp(static_cast<std::size_t>(cfg.length));
      for (int& g : rp) g = rand_rng.index(n);
      pools.rand.records.push_back(make_record(st, env, cfg, std::move(rp), DemoSource::kRand, k));

      const Chromosome& gc = *candidates[static_cast<std::size_t>(k) % candidates.size()];
      pools.ga.records.push_back(make_record(st, env, cfg, gc.genes, DemoSource::kGa, k));
      pools.rl.records.push_back(make_record(st, env, cfg, rl_path, DemoSource::kRl, k));
    }
    for (const Chromosome* c : candidates) {
      if (ga_rl_slot >= cfg.per_student_quota) break;
      if (c->fitness >= cfg.quality_threshold)
        pools.ga_rl.records.push_back(make_record(st, env, cfg, c->genes, DemoSource::kGa, ga_rl_slot++));
    }
    for (; ga_rl_slot < cfg.per_student_quota; ++ga_rl_slot)
      pools.ga_rl.records.push_back(make_record(st, env, cfg, rl_path, DemoSource::kRl, ga_rl_slot));
  }
  return pools;
}

DemoDataset build_sft_dataset(std::span<const StudentEntry> students, const Environment& env,
                              const GaConfig& ga_cfg, const TeacherPolicy& teacher,
                              const SynthesisConfig& cfg) {
  return synthesize_pools(students, env, ga_cfg, teacher, cfg).ga_rl;
}

}  // namespace ibgrpo

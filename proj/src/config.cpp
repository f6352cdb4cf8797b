#include "ibgrpo/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <type_traits>

namespace ibgrpo {

namespace fs = std::filesystem;

namespace {

// Reads the keys of one JSON object and rejects any key it was not asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!integral_ok<T>(*it)) throw ConfigError(field(key) + ": wrong type");
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  // nlohmann truncates 1.5 to 1 when asked for an int; refuse instead.
  template <typename T>
  static bool integral_ok(const nlohmann::json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v.is_boolean();
    } else if constexpr (std::is_unsigned_v<T>) {
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    } else if constexpr (std::is_integral_v<T>) {
      return v.is_number_integer();
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array()) return false;
      for (const auto& x : v)
        if (!x.is_number_integer()) return false;
      return true;
    } else {
      return true;
    }
  }

  // Sub-object, if present.
  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + field(it.key()) + "'");
  }

  std::string field(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  std::string label() const { return name_.empty() ? "config" : name_; }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename F>
void with_section(Section& parent, const char* key, const std::string& name, F&& f) {
  if (const nlohmann::json* c = parent.child(key)) {
    Section s(*c, name);
    f(s);
    s.finish();
  }
}

const char* init_kind_name(InitKind k) { return k == InitKind::kUniform ? "uniform" : "ability"; }

InitKind parse_init_kind(const std::string& s) {
  if (s == "uniform") return InitKind::kUniform;
  if (s == "ability") return InitKind::kAbility;
  throw ConfigError("sim.init.kind: expected 'uniform' or 'ability', got '" + s + "'");
}

const char* difficulty_source_name(DifficultySource d) {
  return d == DifficultySource::kCatalog ? "catalog" : "empirical";
}

DifficultySource parse_difficulty_source(const std::string& s) {
  if (s == "empirical") return DifficultySource::kEmpirical;
  if (s == "catalog") return DifficultySource::kCatalog;
  throw ConfigError("zpd.difficulty_source: expected 'empirical' or 'catalog', got '" + s + "'");
}

template <typename F>
auto rethrow_as_config(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  sft.optimizer = OptimizerKind::kAdam;
  grpo.optimizer = OptimizerKind::kAdam;
  grpo.learning_rate = 3e-4;
  teacher.horizon = target_len;
  synthesis.length = target_len;
}

void ExperimentConfig::validate() const {
  rethrow_as_config([&] {
    if (catalog_path.empty() && num_concepts < 2) throw ConfigError("num_concepts must be >= 2");
    if (!catalog_path.empty() && !fs::exists(resolved_catalog_path()))
      throw ConfigError("catalog_path: file not found: " + resolved_catalog_path());
    sim.validate();
    if (students.count < 2) throw ConfigError("students.count must be >= 2");
    if (!(students.eval_fraction > 0.0 && students.eval_fraction < 1.0))
      throw ConfigError("students.eval_fraction must be in (0, 1)");
    ga.validate();
    TeacherConfig t = teacher;
    t.horizon = target_len;
    t.validate();
    if (!(synthesis.quality_threshold >= 0.0 && synthesis.quality_threshold <= 1.0))
      throw ConfigError("synthesis.quality_threshold must be in [0, 1]");
    if (synthesis.per_student_quota < 1) throw ConfigError("synthesis.per_student_quota must be >= 1");
    if (zpd.num_bins < 1) throw ConfigError("zpd.num_bins must be >= 1");
    if (!(zpd.outcome_threshold >= 0.0 && zpd.outcome_threshold < 1.0))
      throw ConfigError("zpd.outcome_threshold must be in [0, 1)");
    if (zpd.corpus_horizon_factor < 1) throw ConfigError("zpd.corpus_horizon_factor must be >= 1");
    if (zpd.cohort_size < 1) throw ConfigError("zpd.cohort_size must be >= 1");
    if (!(rewards.sigma > 0.0)) throw ConfigError("rewards.sigma must be > 0");
    if (rewards.tolerance < 0) throw ConfigError("rewards.tolerance must be >= 0");
    if (!(rewards.penalty > 0.0)) throw ConfigError("rewards.penalty must be > 0");
    if (rewards.ngram < 1) throw ConfigError("rewards.ngram must be >= 1");
    if (policy.hidden < 1) throw ConfigError("policy.hidden must be >= 1");
    if (!(policy.init_scale >= 0.0)) throw ConfigError("policy.init_scale must be >= 0");
    sft.validate();
    if (sft_source != "Rand" && sft_source != "GA" && sft_source != "RL" && sft_source != "GA+RL")
      throw ConfigError("sft.source: expected Rand, GA, RL or GA+RL, got '" + sft_source + "'");
    grpo.validate();
    if (eval.lengths.empty()) throw ConfigError("eval.lengths must not be empty");
    for (int l : eval.lengths)
      if (l != 5 && l != 10 && l != 20) throw ConfigError("eval.lengths: entries must be 5, 10 or 20");
    if (target_len != 5 && target_len != 10 && target_len != 20)
      throw ConfigError("target_len must be 5, 10 or 20");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    return 0;
  });
}

std::string ExperimentConfig::resolved_catalog_path() const {
  if (catalog_path.empty()) return {};
  fs::path p(catalog_path);
  if (p.is_relative()) p = fs::path(base_dir.empty() ? "." : base_dir) / p;
  return p.lexically_normal().string();
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["catalog_path"] = catalog_path;
  j["num_concepts"] = num_concepts;
  j["sim"] = {{"learn_rate", sim.learn_rate},
              {"zpd_width_sim", sim.zpd_width_sim},
              {"prereq_threshold", sim.prereq_threshold},
              {"gated_factor", sim.gated_factor},
              {"init",
               {{"kind", init_kind_name(sim.init.kind)},
                {"low", sim.init.low},
                {"high", sim.init.high},
                {"ability_low", sim.init.ability_low},
                {"ability_high", sim.init.ability_high},
                {"sharpness", sim.init.sharpness},
                {"noise", sim.init.noise}}}};
  j["students"] = {{"count", students.count}, {"eval_fraction", students.eval_fraction}};
  j["ga"] = {{"population_size", ga.population_size}, {"crossover_prob", ga.crossover_prob},
             {"mutation_prob", ga.mutation_prob},     {"generations", ga.generations},
             {"tournament_size", ga.tournament_size}, {"elitism_count", ga.elitism_count}};
  j["teacher"] = {{"episodes", teacher.episodes},
                  {"learning_rate", teacher.learning_rate},
                  {"discount", teacher.discount},
                  {"epsilon", teacher.epsilon},
                  {"proficiency_buckets", teacher.proficiency_buckets}};
  j["synthesis"] = {{"quality_threshold", synthesis.quality_threshold},
                    {"per_student_quota", synthesis.per_student_quota}};
  j["zpd"] = {{"num_bins", zpd.num_bins},
              {"outcome_threshold", zpd.outcome_threshold},
              {"corpus_horizon_factor", zpd.corpus_horizon_factor},
              {"difficulty_source", difficulty_source_name(zpd.difficulty_source)},
              {"cohort_size", zpd.cohort_size}};
  j["rewards"] = {{"sigma", rewards.sigma},     {"tolerance", rewards.tolerance},
                  {"penalty", rewards.penalty}, {"ngram", rewards.ngram},
                  {"kappa", rewards.kappa},     {"adv_eps", rewards.adv_eps}};
  j["policy"] = {{"hidden", policy.hidden}, {"init_scale", policy.init_scale}};
  j["sft"] = {{"learning_rate", sft.learning_rate}, {"epochs", sft.epochs},
              {"warmup_fraction", sft.warmup_fraction}, {"batch_size", sft.batch_size},
              {"optimizer", optimizer_name(sft.optimizer)}, {"source", sft_source}};
  j["grpo"] = {{"learning_rate", grpo.learning_rate},
               {"batch_size", grpo.batch_size},
               {"epochs", grpo.epochs},
               {"group_size", grpo.group_size},
               {"warmup_steps", grpo.warmup_steps},
               {"clip_low", grpo.clip_low},
               {"clip_high", grpo.clip_high},
               {"per_token_ratio", grpo.per_token_ratio},
               {"kl_coef", grpo.kl_coef},
               {"updates_per_batch", grpo.updates_per_batch},
               {"temperature", grpo.temperature},
               {"advantage", advantage_name(grpo.advantage)},
               {"scaling", scaling_name(grpo.scaling)},
               {"weights", grpo.weights},
               {"reward_mask", grpo.mask.to_list()},
               {"optimizer", optimizer_name(grpo.optimizer)}};
  j["eval"] = {{"lengths", eval.lengths}};
  j["target_len"] = target_len;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  Section root(j, "");
  root.get("catalog_path", c.catalog_path);
  root.get("num_concepts", c.num_concepts);
  with_section(root, "sim", "sim", [&](Section& s) {
    s.get("learn_rate", c.sim.learn_rate);
    s.get("zpd_width_sim", c.sim.zpd_width_sim);
    s.get("prereq_threshold", c.sim.prereq_threshold);
    s.get("gated_factor", c.sim.gated_factor);
    with_section(s, "init", "sim.init", [&](Section& i) {
      std::string kind = init_kind_name(c.sim.init.kind);
      i.get("kind", kind);
      c.sim.init.kind = parse_init_kind(kind);
      i.get("low", c.sim.init.low);
      i.get("high", c.sim.init.high);
      i.get("ability_low", c.sim.init.ability_low);
      i.get("ability_high", c.sim.init.ability_high);
      i.get("sharpness", c.sim.init.sharpness);
      i.get("noise", c.sim.init.noise);
    });
  });
  with_section(root, "students", "students", [&](Section& s) {
    s.get("count", c.students.count);
    s.get("eval_fraction", c.students.eval_fraction);
  });
  with_section(root, "ga", "ga", [&](Section& s) {
    s.get("population_size", c.ga.population_size);
    s.get("crossover_prob", c.ga.crossover_prob);
    s.get("mutation_prob", c.ga.mutation_prob);
    s.get("generations", c.ga.generations);
    s.get("tournament_size", c.ga.tournament_size);
    s.get("elitism_count", c.ga.elitism_count);
  });
  with_section(root, "teacher", "teacher", [&](Section& s) {
    s.get("episodes", c.teacher.episodes);
    s.get("learning_rate", c.teacher.learning_rate);
    s.get("discount", c.teacher.discount);
    s.get("epsilon", c.teacher.epsilon);
    s.get("proficiency_buckets", c.teacher.proficiency_buckets);
  });
  with_section(root, "synthesis", "synthesis", [&](Section& s) {
    s.get("quality_threshold", c.synthesis.quality_threshold);
    s.get("per_student_quota", c.synthesis.per_student_quota);
  });
  with_section(root, "zpd", "zpd", [&](Section& s) {
    s.get("num_bins", c.zpd.num_bins);
    s.get("outcome_threshold", c.zpd.outcome_threshold);
    s.get("corpus_horizon_factor", c.zpd.corpus_horizon_factor);
    std::string src = difficulty_source_name(c.zpd.difficulty_source);
    s.get("difficulty_source", src);
    c.zpd.difficulty_source = parse_difficulty_source(src);
    s.get("cohort_size", c.zpd.cohort_size);
  });
  with_section(root, "rewards", "rewards", [&](Section& s) {
    s.get("sigma", c.rewards.sigma);
    s.get("tolerance", c.rewards.tolerance);
    s.get("penalty", c.rewards.penalty);
    s.get("ngram", c.rewards.ngram);
    s.get("kappa", c.rewards.kappa);
    s.get("adv_eps", c.rewards.adv_eps);
  });
  with_section(root, "policy", "policy", [&](Section& s) {
    s.get("hidden", c.policy.hidden);
    s.get("init_scale", c.policy.init_scale);
  });
  with_section(root, "sft", "sft", [&](Section& s) {
    s.get("learning_rate", c.sft.learning_rate);
    s.get("epochs", c.sft.epochs);
    s.get("warmup_fraction", c.sft.warmup_fraction);
    s.get("batch_size", c.sft.batch_size);
    std::string opt = optimizer_name(c.sft.optimizer);
    s.get("optimizer", opt);
    c.sft.optimizer = rethrow_as_config([&] { return parse_optimizer(opt); });
    s.get("source", c.sft_source);
  });
  with_section(root, "grpo", "grpo", [&](Section& s) {
    s.get("learning_rate", c.grpo.learning_rate);
    s.get("batch_size", c.grpo.batch_size);
    s.get("epochs", c.grpo.epochs);
    s.get("group_size", c.grpo.group_size);
    s.get("warmup_steps", c.grpo.warmup_steps);
    s.get("clip_low", c.grpo.clip_low);
    s.get("clip_high", c.grpo.clip_high);
    s.get("per_token_ratio", c.grpo.per_token_ratio);
    s.get("kl_coef", c.grpo.kl_coef);
    s.get("updates_per_batch", c.grpo.updates_per_batch);
    s.get("temperature", c.grpo.temperature);
    std::string adv = advantage_name(c.grpo.advantage);
    s.get("advantage", adv);
    c.grpo.advantage = rethrow_as_config([&] { return parse_advantage(adv); });
    std::string scaling = scaling_name(c.grpo.scaling);
    s.get("scaling", scaling);
    c.grpo.scaling = rethrow_as_config([&] { return parse_scaling(scaling); });
    s.get("weights", c.grpo.weights);
    std::string mask = c.grpo.mask.to_list();
    s.get("reward_mask", mask);
    c.grpo.mask = rethrow_as_config([&] { return RewardMask::from_list(mask); });
    std::string opt = optimizer_name(c.grpo.optimizer);
    s.get("optimizer", opt);
    c.grpo.optimizer = rethrow_as_config([&] { return parse_optimizer(opt); });
  });
  with_section(root, "eval", "eval", [&](Section& s) { s.get("lengths", c.eval.lengths); });
  root.get("target_len", c.target_len);
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.finish();
  c.grpo.kappa = c.rewards.kappa;
  c.grpo.adv_eps = c.rewards.adv_eps;
  c.teacher.horizon = c.target_len;
  c.synthesis.length = c.target_len;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j, fs::path(path).parent_path().string());
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.to_json() == b.to_json();
}

}  // namespace ibgrpo

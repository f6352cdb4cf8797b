#include "ibgrpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace ibgrpo {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::vector<double>> normalize_columns(const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<double>> out = rows;
  if (rows.empty()) return out;
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols) throw std::invalid_argument("normalize_columns: ragged rows");
  for (std::size_t c = 0; c < cols; ++c) {
    double lo = rows.front()[c], hi = lo;
    for (const auto& r : rows) {
      lo = std::min(lo, r[c]);
      hi = std::max(hi, r[c]);
    }
    for (auto& r : out) r[c] = hi > lo ? (r[c] - lo) / (hi - lo) : 0.0;
  }
  return out;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// Creates an empty output directory, refusing to clobber earlier results.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw std::runtime_error(dir.string() + " already has outputs (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::string join_path(const std::vector<int>& path) {
  std::string s;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(path[i]);
  }
  return s;
}

std::vector<int> ids_of(const std::vector<StudentEntry>& v) {
  std::vector<int> ids;
  for (const auto& s : v) ids.push_back(s.id);
  return ids;
}

const char* pool_file(const std::string& source) {
  if (source == "Rand") return "demos_rand.jsonl";
  if (source == "GA") return "demos_ga.jsonl";
  if (source == "RL") return "demos_rl.jsonl";
  if (source == "GA+RL") return "demos_ga_rl.jsonl";
  throw std::invalid_argument("unknown demo source: " + source);
}

// Per-path diversity within each student's group of paths.
std::vector<double> per_path_diversity(const std::vector<int>& students,
                                       const std::vector<std::vector<int>>& paths, int n) {
  std::map<int, std::vector<std::size_t>> by_student;
  for (std::size_t i = 0; i < students.size(); ++i) by_student[students[i]].push_back(i);
  std::vector<double> out(paths.size(), 0.0);
  for (const auto& [id, idx] : by_student) {
    std::vector<std::vector<int>> group;
    for (std::size_t i : idx) group.push_back(paths[i]);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = score_diversity(k, group, n);
  }
  return out;
}

void append_scatter(std::string& csv, const std::string& source, const std::vector<int>& students,
                    const std::vector<std::vector<int>>& paths, const std::vector<double>& e_p,
                    int n) {
  const auto div = per_path_diversity(students, paths, n);
  for (std::size_t i = 0; i < paths.size(); ++i)
    csv += source + "," + std::to_string(students[i]) + "," + std::to_string(i) + "," + fmt6(e_p[i]) +
           "," + fmt6(div[i]) + "\n";
}

void append_pool_scatter(std::string& csv, const std::string& source, const DemoDataset& pool, int n) {
  std::vector<int> students;
  std::vector<std::vector<int>> paths;
  std::vector<double> e_p;
  for (const auto& r : pool.records) {
    students.push_back(r.student);
    paths.push_back(r.path);
    e_p.push_back(r.e_p);
  }
  append_scatter(csv, source, students, paths, e_p, n);
}

RewardContext reward_context_for(const SynthArtifacts& a, const ExperimentConfig& cfg, int length) {
  RewardContext rc = a.rewards;
  rc.length = LengthConstraint{length, cfg.rewards.tolerance, cfg.rewards.penalty};
  rc.ngram = cfg.rewards.ngram;
  return rc;
}

// Demonstrations must come from training students only.
void check_demos(const fs::path& synth, const ExperimentConfig& cfg, const StudentSplit& split) {
  const fs::path p = synth / pool_file(cfg.sft_source);
  if (!fs::exists(p)) return;
  std::set<int> held_out;
  for (const auto& s : split.eval) held_out.insert(s.id);
  for (const auto& r : DemoDataset::load(p.string()).records)
    if (held_out.count(r.student))
      throw SplitOverlapError("student " + std::to_string(r.student) +
                              " is in the evaluation split and in the demonstration data");
}

PolicyParams load_policy(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw std::runtime_error(std::string("missing ") + what + ": " + p.string());
  return PolicyParams::load(p.string());
}

}  // namespace

Environment make_environment(const ExperimentConfig& cfg) {
  ConceptCatalog catalog = cfg.catalog_path.empty() ? ConceptCatalog::desk_default(cfg.num_concepts)
                                                    : ConceptCatalog::load(cfg.resolved_catalog_path());
  return Environment{std::move(catalog), cfg.sim};
}

std::vector<StudentEntry> make_students(const ExperimentConfig& cfg, const Environment& env) {
  std::vector<StudentEntry> out;
  out.reserve(static_cast<std::size_t>(cfg.students.count));
  for (int i = 0; i < cfg.students.count; ++i)
    out.push_back({i, init_student(env.catalog, env.sim,
                                   derive_seed(cfg.seed, {seed_tag::kStudent, static_cast<std::uint64_t>(i)}))});
  return out;
}

StudentSplit split_students(std::vector<StudentEntry> students, double eval_fraction, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {seed_tag::kSplit}));
  rng.shuffle(students);
  const auto n_eval = static_cast<std::size_t>(std::lround(eval_fraction * static_cast<double>(students.size())));
  if (n_eval == 0 || n_eval >= students.size())
    throw std::invalid_argument("student split leaves an empty side");
  StudentSplit s;
  s.eval.assign(students.begin(), students.begin() + static_cast<std::ptrdiff_t>(n_eval));
  s.train.assign(students.begin() + static_cast<std::ptrdiff_t>(n_eval), students.end());
  auto by_id = [](const StudentEntry& a, const StudentEntry& b) { return a.id < b.id; };
  std::sort(s.train.begin(), s.train.end(), by_id);
  std::sort(s.eval.begin(), s.eval.end(), by_id);
  check_disjoint(ids_of(s.train), ids_of(s.eval));
  return s;
}

void check_disjoint(const std::vector<int>& train_ids, const std::vector<int>& eval_ids) {
  std::set<int> train(train_ids.begin(), train_ids.end());
  for (int id : eval_ids)
    if (train.count(id))
      throw SplitOverlapError("student " + std::to_string(id) + " appears in both train and eval splits");
}

std::string run_name(const ExperimentConfig& cfg, bool from_scratch) {
  std::string name = advantage_name(cfg.grpo.advantage);
  if (cfg.grpo.advantage == AdvantageMode::kWeightedSum) {
    name += "_w";
    for (std::size_t i = 0; i < cfg.grpo.weights.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", cfg.grpo.weights[i]);
      name += (i ? "-" : "") + std::string(buf);
    }
  }
  if (!cfg.grpo.mask.all_active()) {
    std::string m = cfg.grpo.mask.to_list();
    std::replace(m.begin(), m.end(), ',', '-');
    name += "_mask-" + m;
  }
  if (cfg.grpo.scaling != ObjectiveScaling::kRaw) name += std::string("_") + scaling_name(cfg.grpo.scaling);
  if (from_scratch) name += "_scratch";
  return name;
}

fs::path resolve_out_root(const ExperimentConfig& cfg, const std::string& cli_out) {
  if (!cli_out.empty()) return cli_out;
  if (const char* env = std::getenv("IBGRPO_OUT"); env && *env) return env;
  fs::path p(cfg.output_dir);
  if (p.is_relative() && !cfg.base_dir.empty()) p = fs::path(cfg.base_dir) / p;
  return p;
}

std::vector<PoolSummary> cmd_synth(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path dir = opt.out_root / "synth";
  prepare_dir(dir, opt.force);
  const int L = cfg.target_len;

  Environment env = make_environment(cfg);
  StudentSplit split = split_students(make_students(cfg, env), cfg.students.eval_fraction, cfg.seed);
  write_json(dir / "config.json", cfg.to_json());
  write_json(dir / "split.json", {{"seed", cfg.seed}, {"train", ids_of(split.train)}, {"eval", ids_of(split.eval)}});

  TeacherConfig tc = cfg.teacher;
  tc.horizon = L;
  tc.seed = cfg.seed;
  const TeacherPolicy teacher = train_teacher(env, tc);
  write_json(dir / "teacher.json", teacher.to_json());

  GaConfig ga = cfg.ga;
  ga.seed = cfg.seed;
  SynthesisConfig sc = cfg.synthesis;
  sc.length = L;
  sc.seed = cfg.seed;
  const ExpertPools pools = synthesize_pools(split.train, env, ga, teacher, sc);

  const std::vector<double> difficulty =
      cfg.zpd.difficulty_source == DifficultySource::kCatalog
          ? env.catalog.difficulties()
          : estimate_empirical_difficulty(env.catalog, env.sim, cfg.zpd.cohort_size,
                                          derive_seed(cfg.seed, {seed_tag::kCohort}));
  write_json(dir / "difficulty.json",
             {{"source", cfg.zpd.difficulty_source == DifficultySource::kCatalog ? "catalog" : "empirical"},
              {"difficulty", difficulty}});

  // High-outcome corpus for z(a).
  std::vector<TrajectoryRecord> corpus;
  std::vector<ZpdSample> samples;
  for (const auto& s : split.train) {
    auto path = greedy_gain_rollout(s.state, env, cfg.zpd.corpus_horizon_factor * L, cfg.zpd.outcome_threshold);
    corpus.push_back(make_trajectory_record(
        s.id, s.state, path, env, derive_seed(cfg.seed, {seed_tag::kRollout, static_cast<std::uint64_t>(s.id)})));
    samples.push_back({s.state.proficiency, path, corpus.back().e_p});
  }
  {
    std::ofstream out(dir / "zpd_corpus.jsonl", std::ios::binary);
    write_trajectories(out, corpus);
  }
  const ZpdReference zpd = estimate_zpd_reference(samples, difficulty, cfg.rewards.sigma, cfg.zpd.num_bins,
                                                  cfg.zpd.outcome_threshold);
  write_json(dir / "zpd_reference.json", zpd.to_json());

  const std::pair<const char*, const DemoDataset*> named[] = {
      {"Rand", &pools.rand}, {"GA", &pools.ga}, {"RL", &pools.rl}, {"GA+RL", &pools.ga_rl}};
  std::string scatter = "source,student,path_id,e_p,diversity\n";
  std::string summary_csv = "source,n,mean_e_p,diversity\n";
  std::vector<PoolSummary> summary;
  for (const auto& [tag, pool] : named) {
    pool->save((dir / pool_file(tag)).string());
    append_pool_scatter(scatter, tag, *pool, cfg.rewards.ngram);
    PoolSummary ps{tag, static_cast<int>(pool->records.size()), pool->mean_effect(),
                   pool_diversity(*pool, cfg.rewards.ngram)};
    summary_csv += ps.source + "," + std::to_string(ps.n) + "," + fmt6(ps.mean_e_p) + "," + fmt6(ps.diversity) + "\n";
    summary.push_back(ps);
  }
  write_text(dir / "pareto_scatter.csv", scatter);
  write_text(dir / "pools_summary.csv", summary_csv);
  return summary;
}

SynthArtifacts load_synth(const ExperimentConfig& cfg, const fs::path& out_root) {
  const fs::path dir = out_root / "synth";
  if (!fs::exists(dir / "split.json")) throw std::runtime_error("missing synth outputs in " + dir.string() + " (run synth first)");
  Environment env = make_environment(cfg);
  StudentSplit split = split_students(make_students(cfg, env), cfg.students.eval_fraction, cfg.seed);

  const json stored = read_json(dir / "split.json");
  const auto train_ids = stored.at("train").get<std::vector<int>>();
  const auto eval_ids = stored.at("eval").get<std::vector<int>>();
  check_disjoint(train_ids, eval_ids);
  if (train_ids != ids_of(split.train) || eval_ids != ids_of(split.eval))
    throw std::runtime_error("student split in " + dir.string() + " does not match the config (re-run synth)");

  RewardContext rc;
  rc.difficulty = read_json(dir / "difficulty.json").at("difficulty").get<std::vector<double>>();
  rc.zpd = ZpdReference::from_json(read_json(dir / "zpd_reference.json"));
  rc.ngram = cfg.rewards.ngram;
  return SynthArtifacts{std::move(env), std::move(split), std::move(rc)};
}

SftReport cmd_sft(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const SynthArtifacts a = load_synth(cfg, opt.out_root);
  const fs::path data_path = opt.out_root / "synth" / pool_file(cfg.sft_source);
  if (!fs::exists(data_path)) throw std::runtime_error("missing demo dataset: " + data_path.string());
  check_demos(opt.out_root / "synth", cfg, a.split);
  const DemoDataset data = DemoDataset::load(data_path.string());

  const fs::path dir = opt.out_root / "sft";
  prepare_dir(dir, opt.force);
  const auto init = PolicyParams::init_uniform(a.env.catalog.size(), cfg.policy.hidden, cfg.policy.init_scale, cfg.seed);
  SftConfig sc = cfg.sft;
  sc.seed = cfg.seed;
  const SftResult res = sft_train(init, data, sc);
  res.params.save((dir / "policy.json").string());

  // nll is measured after the epoch; running_nll averages the minibatches during it
  std::string csv = "epoch,nll,running_nll\n0," + fmt6(res.report.initial_nll) + "," + fmt6(res.report.initial_nll) + "\n";
  for (std::size_t e = 0; e < res.report.final_nll.size(); ++e)
    csv += std::to_string(e + 1) + "," + fmt6(res.report.final_nll[e]) + "," + fmt6(res.report.epoch_nll[e]) + "\n";
  write_text(dir / "nll_curve.csv", csv);
  return res.report;
}

TrainReport cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const SynthArtifacts a = load_synth(cfg, opt.out_root);
  const int L = cfg.target_len;
  PolicyParams init = opt.from_scratch
                          ? PolicyParams::init_uniform(a.env.catalog.size(), cfg.policy.hidden,
                                                       cfg.policy.init_scale, cfg.seed)
                          : load_policy(opt.out_root / "sft" / "policy.json", "SFT checkpoint (pass --from-scratch to skip SFT)");
  if (init.num_concepts() != a.env.catalog.size()) throw std::runtime_error("checkpoint does not match the catalog size");

  const fs::path dir = opt.out_root / "train" / run_name(cfg, opt.from_scratch);
  prepare_dir(dir, opt.force);

  const RewardContext rc = reward_context_for(a, cfg, L);
  const auto prompts = make_prompts(a.split.train, L);
  GrpoConfig gc = cfg.grpo;
  gc.seed = cfg.seed;
  EvalHook hook = [&](int, const PolicyParams& p) {
    return evaluate_policy(greedy_policy(p), "trained", a.split.eval, a.env, L, rc, cfg.seed).summary.e_p_mean;
  };
  const TrainResult res = train_loop(init, prompts, gc, a.env, rc, hook);
  res.params.save((dir / "policy.json").string());
  {
    std::ofstream out(dir / "train_report.csv", std::ios::binary);
    res.report.write_csv(out);
  }
  write_json(dir / "train_summary.json", res.report.summary());
  return res.report;
}

std::vector<MetricSummary> cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const SynthArtifacts a = load_synth(cfg, opt.out_root);
  check_demos(opt.out_root / "synth", cfg, a.split);
  const std::string run = run_name(cfg, opt.from_scratch);
  const fs::path ckpt = opt.checkpoint.empty() ? opt.out_root / "train" / run / "policy.json" : fs::path(opt.checkpoint);
  const PolicyParams trained = load_policy(ckpt, "checkpoint");
  if (trained.num_concepts() != a.env.catalog.size()) throw std::runtime_error("checkpoint does not match the catalog size");

  std::vector<std::pair<std::string, PathGenerator>> policies{{"trained", greedy_policy(trained)}};
  const fs::path sft_path = opt.out_root / "sft" / "policy.json";
  std::optional<PolicyParams> sft;
  if (fs::exists(sft_path)) {
    sft = PolicyParams::load(sft_path.string());
    policies.emplace_back("sft", greedy_policy(*sft));
  }
  policies.emplace_back("random", random_policy(a.env.catalog.size(), cfg.seed));

  const fs::path dir = opt.out_root / "eval" / run;
  prepare_dir(dir, opt.force);
  std::vector<MetricSummary> out;
  for (int L : cfg.eval.lengths) {
    const RewardContext rc = reward_context_for(a, cfg, L);
    std::string metrics =
        "policy,target_len,n,e_p_mean,e_p_std,s_zpd_mean,s_zpd_std,len_score_mean,len_score_std,"
        "div_path_mean,div_path_std,length_mean\n";
    std::string paths = "policy,student,length,e_p,s_zpd,len_score,div_path,path\n";
    for (const auto& [tag, gen] : policies) {
      const EvalResult r = evaluate_policy(gen, tag, a.split.eval, a.env, L, rc, cfg.seed);
      const MetricSummary& m = r.summary;
      metrics += m.policy + "," + std::to_string(L) + "," + std::to_string(m.n) + "," + fmt6(m.e_p_mean) + "," +
                 fmt6(m.e_p_std) + "," + fmt6(m.s_zpd_mean) + "," + fmt6(m.s_zpd_std) + "," +
                 fmt6(m.len_score_mean) + "," + fmt6(m.len_score_std) + "," + fmt6(m.div_path_mean) + "," +
                 fmt6(m.div_path_std) + "," + fmt6(m.length_mean) + "\n";
      for (const auto& row : r.rows)
        paths += tag + "," + std::to_string(row.student) + "," + std::to_string(row.path.size()) + "," +
                 fmt6(row.e_p) + "," + fmt6(row.s_zpd) + "," + fmt6(row.len_score) + "," + fmt6(row.div_path) +
                 "," + join_path(row.path) + "\n";
      out.push_back(m);
    }
    write_text(dir / ("metrics_L" + std::to_string(L) + ".csv"), metrics);
    write_text(dir / ("paths_L" + std::to_string(L) + ".csv"), paths);
  }

  // Sampled paths of the trained policy, comparable with the synth pools.
  std::vector<int> students;
  std::vector<std::vector<int>> sampled;
  std::vector<double> e_p;
  for (const auto& s : a.split.eval) {
    const auto ctx = PromptContext::from_student(s.state, cfg.target_len);
    const auto group = sample_group(trained, ctx, cfg.synthesis.per_student_quota,
                                    derive_seed(cfg.seed, {seed_tag::kEval, static_cast<std::uint64_t>(s.id)}),
                                    cfg.grpo.temperature);
    for (const auto& g : group) {
      students.push_back(s.id);
      sampled.push_back(g.path);
      e_p.push_back(path_effect(s.state, g.path, a.env.catalog, a.env.sim));
    }
  }
  std::string scatter = "source,student,path_id,e_p,diversity\n";
  append_scatter(scatter, "policy", students, sampled, e_p, cfg.rewards.ngram);
  write_text(dir / "pareto_scatter.csv", scatter);
  return out;
}

fs::path cmd_trace(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const SynthArtifacts a = load_synth(cfg, opt.out_root);
  const auto it = std::find_if(a.split.eval.begin(), a.split.eval.end(),
                               [&](const StudentEntry& s) { return s.id == opt.student; });
  if (it == a.split.eval.end())
    throw std::runtime_error("unknown student " + std::to_string(opt.student) + " (not in the evaluation split)");

  const std::string run = run_name(cfg, opt.from_scratch);
  const fs::path ckpt = opt.checkpoint.empty() ? opt.out_root / "train" / run / "policy.json" : fs::path(opt.checkpoint);
  const fs::path sft_path = opt.out_root / "sft" / "policy.json";
  const RewardContext rc = reward_context_for(a, cfg, cfg.target_len);

  std::vector<std::pair<std::string, PathGenerator>> policies;
  if (fs::exists(ckpt)) policies.emplace_back("trained", greedy_policy(PolicyParams::load(ckpt.string())));
  else if (!opt.checkpoint.empty()) throw std::runtime_error("missing checkpoint: " + ckpt.string());
  if (fs::exists(sft_path)) policies.emplace_back("sft", greedy_policy(PolicyParams::load(sft_path.string())));
  policies.emplace_back("random", random_policy(a.env.catalog.size(), cfg.seed));
  policies.emplace_back("nearest_zpd", nearest_zpd_policy(rc));

  const fs::path dir = opt.out_root / "trace" / run;
  fs::create_directories(dir);
  const fs::path file = dir / ("student_" + std::to_string(opt.student) + ".csv");
  if (fs::exists(file) && !opt.force) throw std::runtime_error(file.string() + " exists (use --force to overwrite)");

  const double a_s = it->state.proficiency;
  const double z = rc.zpd.center(a_s);
  const double sigma = rc.zpd.sigma;
  std::string csv = "policy,step,concept,difficulty,zpd_center,sigma,in_band\n";
  for (const auto& [tag, gen] : policies) {
    const auto path = gen(*it, cfg.target_len);
    for (std::size_t t = 0; t < path.size(); ++t) {
      const double d = rc.difficulty[static_cast<std::size_t>(path[t])];
      csv += tag + "," + std::to_string(t + 1) + "," + std::to_string(path[t]) + "," + fmt6(d) + "," + fmt6(z) +
             "," + fmt6(sigma) + "," + (std::abs(d - z) <= sigma ? "1" : "0") + "\n";
    }
  }
  write_text(file, csv);
  return file;
}

}  // namespace ibgrpo

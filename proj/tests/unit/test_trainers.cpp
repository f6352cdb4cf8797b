#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ibgrpo/expert_gen.hpp"
#include "ibgrpo/indicator.hpp"
#include "ibgrpo/trainers.hpp"

using namespace ibgrpo;

namespace {

Environment default_env() { return Environment{ConceptCatalog::desk_default(20), SimConfig{}}; }

std::vector<StudentEntry> students(const Environment& env, int n, std::uint64_t seed = 1) {
  std::vector<StudentEntry> out;
  for (int i = 0; i < n; ++i)
    out.push_back({i, init_student(env.catalog, env.sim, derive_seed(seed, {seed_tag::kStudent, static_cast<std::uint64_t>(i)}))});
  return out;
}

RewardContext reward_context(const Environment& env, int target) {
  RewardContext rc;
  rc.difficulty = env.catalog.difficulties();
  rc.zpd = ZpdReference{{0.3, 0.4, 0.5, 0.6, 0.7}, {1, 1, 1, 1, 1}, 0.1};
  rc.length = {target, 1, 0.1};
  return rc;
}

DemoRecord demo(const StudentEntry& s, std::vector<int> path, int target) {
  DemoRecord r;
  r.student = s.id;
  r.mastery = s.state.mastery;
  r.proficiency = s.state.proficiency;
  r.target_len = target;
  r.path = std::move(path);
  return r;
}

SampleGroup make_group(const PolicyParams& p, const PromptContext& ctx, const std::vector<std::vector<int>>& paths,
                       const std::vector<double>& adv) {
  SampleGroup g;
  g.ctx = ctx;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    GroupSample s;
    s.path = paths[i];
    auto f = forward_path(p, ctx, s.path);
    s.old_step_log_probs = f.step_log_probs;
    s.old_log_prob = f.log_prob;
    s.advantage = adv[i];
    g.samples.push_back(s);
  }
  return g;
}

}  // namespace

TEST_CASE("optimizers") {
  std::vector<double> theta{1.0, -2.0};
  std::vector<double> grad{0.5, -1.0};
  Optimizer sgd(OptimizerKind::kSgd, 2);
  sgd.step(theta, grad, 0.1);
  CHECK(theta[0] == doctest::Approx(0.95));
  CHECK(theta[1] == doctest::Approx(-1.9));

  std::vector<double> t2{0.0, 0.0};
  Optimizer adam(OptimizerKind::kAdam, 2);
  adam.step(t2, grad, 0.01);
  // bias-corrected first step moves every coordinate by ~lr against the gradient sign
  CHECK(t2[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(t2[1] == doctest::Approx(0.01).epsilon(1e-6));

  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
  CHECK(std::string(optimizer_name(OptimizerKind::kSgd)) == "sgd");
  CHECK_THROWS(parse_optimizer("rmsprop"));
}

TEST_CASE("warmup schedule") {
  CHECK(warmup_lr(1.0, 0, 10) == doctest::Approx(0.1));
  CHECK(warmup_lr(1.0, 4, 10) == doctest::Approx(0.5));
  CHECK(warmup_lr(1.0, 9, 10) == 1.0);
  CHECK(warmup_lr(1.0, 50, 10) == 1.0);
  CHECK(warmup_lr(1.0, 0, 0) == 1.0);
}

TEST_CASE("sft: zero learning rate") {
  auto env = default_env();
  auto ss = students(env, 3);
  DemoDataset d;
  for (const auto& s : ss) d.records.push_back(demo(s, {1, 2, 3, 4, 5}, 5));
  auto p = PolicyParams::init_uniform(20, 8, 0.05, 1);
  SftConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  auto r = sft_train(p, d, cfg);
  CHECK(r.params.theta == p.theta);
  for (double x : r.report.final_nll) CHECK(x == r.report.initial_nll);
}

TEST_CASE("sft: uniform policy NLL closed form") {
  auto env = default_env();
  auto s = students(env, 1)[0];
  DemoDataset d;
  d.records.push_back(demo(s, {0, 1, 2, 3}, 5));
  PolicyParams zero(20, 4);
  const double expected = std::log(20.0) + 4 * std::log(21.0);
  CHECK(dataset_nll(zero, d) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sft: overfit one example") {
  auto env = default_env();
  auto s = students(env, 1)[0];
  const std::vector<int> expert{3, 7, 7, 1, 12, 0};
  DemoDataset d;
  d.records.push_back(demo(s, expert, 5));
  SftConfig cfg;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  auto r = sft_train(PolicyParams::init_uniform(20, 16, 0.05, 2), d, cfg);
  CHECK(greedy_decode(r.params, demo_context(d.records[0])).path == expert);
  CHECK(r.report.final_nll.back() < r.report.initial_nll);
}

TEST_CASE("sft: diverged parameters abort") {
  auto env = default_env();
  auto s = students(env, 1)[0];
  DemoDataset d;
  d.records.push_back(demo(s, {1, 2}, 5));
  auto p = PolicyParams::init_uniform(20, 4, 0.05, 1);
  p.theta[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sft_train(p, d, SftConfig{}), std::runtime_error);
  CHECK_THROWS(sft_train(p, DemoDataset{}, SftConfig{}));
}

TEST_CASE("sft: NLL mostly decreases on synthesized demonstrations") {
  auto env = default_env();
  auto ss = students(env, 30, 4);
  TeacherConfig tc;
  tc.seed = 4;
  auto teacher = train_teacher(env, tc);
  GaConfig ga;
  ga.seed = 4;
  ga.generations = 100;
  SynthesisConfig sc;
  sc.seed = 4;
  auto data = build_sft_dataset(ss, env, ga, teacher, sc);
  SftConfig cfg;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.seed = 4;
  auto r = sft_train(PolicyParams::init_uniform(20, 32, 0.05, 4), data, cfg);
  REQUIRE(r.report.epoch_nll.size() == 10);
  int non_increasing = 0;
  for (std::size_t e = 1; e < 10; ++e) non_increasing += r.report.epoch_nll[e] <= r.report.epoch_nll[e - 1];
  CHECK(non_increasing >= 8);
  CHECK(r.report.final_nll.back() < r.report.initial_nll);
}

TEST_CASE("group fitness modes") {
  std::vector<RewardVector> rv{{1, 1, 1, 1}, {0.5, 0.5, 0.5, 0.5}};
  GrpoConfig cfg;
  auto f = group_fitness(rv, cfg);
  auto a = group_advantages(f, cfg.adv_eps);
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-6));

  cfg.advantage = AdvantageMode::kWeightedSum;
  cfg.weights = {1, 0, 0, 0};
  std::vector<RewardVector> mixed{{0.2, 0.9, 1, 0.3}, {0.6, 0.1, -0.4, 0.8}, {0.4, 0.5, 1, 0}};
  auto w = group_fitness(mixed, cfg);
  for (std::size_t i = 0; i < mixed.size(); ++i) CHECK(w[i] == mixed[i].e_p);

  // masked objective is invisible: groups differing only in S_ZPD tie
  GrpoConfig masked;
  masked.mask = RewardMask::from_list("zpd");
  std::vector<RewardVector> only_zpd{{0.5, 0.1, 1, 0.5}, {0.5, 0.9, 1, 0.5}};
  auto m = group_fitness(only_zpd, masked);
  CHECK(m[0] == m[1]);
  for (double x : group_advantages(m, 1e-8)) CHECK(x == 0.0);

  GrpoConfig hv;
  hv.advantage = AdvantageMode::kHvContribution;
  auto h = group_fitness(rv, hv);
  CHECK(h[0] > h[1]);

  GrpoConfig mm;
  mm.scaling = ObjectiveScaling::kGroupMinMax;
  mm.advantage = AdvantageMode::kWeightedSum;
  mm.weights = {1, 1, 1, 1};
  auto s = group_fitness(rv, mm);
  CHECK(s[0] == doctest::Approx(4.0));
  CHECK(s[1] == doctest::Approx(0.0));
}

TEST_CASE("clip semantics") {
  const double lo = 0.2, hi = 0.28;
  CHECK(clipped_term_slope(1.5, 1.0, lo, hi) == 0.0);
  CHECK(clipped_term_slope(0.5, -1.0, lo, hi) == 0.0);
  CHECK(clipped_term_slope(1.1, 1.0, lo, hi) == doctest::Approx(1.1));
  CHECK(clipped_term_slope(1.5, -1.0, lo, hi) == doctest::Approx(-1.5));
  CHECK(clipped_term_slope(0.5, 1.0, lo, hi) == doctest::Approx(0.5));
  CHECK(clipped_term(1.5, 1.0, lo, hi) == doctest::Approx(1.28));
  CHECK(clipped_term(0.5, -1.0, lo, hi) == doctest::Approx(-0.8));
  CHECK(clipped_term(1.5, -1.0, lo, hi) == doctest::Approx(-1.5));
}

TEST_CASE("surrogate: clipped samples contribute exactly zero gradient") {
  Rng rng(3);
  auto env = default_env();
  auto s = students(env, 1)[0];
  auto ctx = PromptContext::from_student(s.state, 5);
  auto p = PolicyParams::init_uniform(20, 8, 0.3, 1);
  GrpoConfig cfg;
  auto g = make_group(p, ctx, {{1, 2, 3}, {4, 5}}, {1.0, -1.0});
  g.samples[0].old_log_prob -= std::log(1.5);  // rho = 1.5 with A > 0
  g.samples[1].old_log_prob -= std::log(0.5);  // rho = 0.5 with A < 0
  std::vector<SampleGroup> groups{g};
  auto r = surrogate_gradient(p, groups, cfg);
  for (double x : r.grad) CHECK(x == 0.0);
  CHECK(r.clip_fraction == 1.0);
}

TEST_CASE("surrogate: ratio one right after the snapshot") {
  auto env = default_env();
  auto ss = students(env, 4, 2);
  auto p = PolicyParams::init_uniform(20, 8, 0.3, 1);
  GrpoConfig cfg;
  cfg.group_size = 6;
  auto prompts = make_prompts(ss, 5);
  auto groups = sample_groups(p, prompts, cfg, env, reward_context(env, 5), 0);
  auto r = surrogate_gradient(p, groups, cfg);
  CHECK(r.mean_ratio == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(r.objective) < 1e-9);

  // gradient reduces to the mean of A_i * grad log mu(pi_i)
  std::vector<double> expected(p.size(), 0.0);
  double n = 0;
  for (const auto& g : groups)
    for (const auto& s : g.samples) {
      auto gl = grad_log_prob(p, g.ctx, s.path);
      for (std::size_t i = 0; i < gl.size(); ++i) expected[i] += s.advantage * gl[i];
      n += 1;
    }
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(r.grad[i] == doctest::Approx(expected[i] / n).epsilon(1e-9));

  for (const auto& g : groups) {
    double sum = 0;
    for (const auto& s : g.samples) {
      sum += s.advantage;
      CHECK(s.old_log_prob == doctest::Approx(path_log_prob(p, g.ctx, s.path)).epsilon(1e-12));
      auto replay = run_path(StudentState{g.ctx.mastery, g.ctx.proficiency, {}}, s.path, env.catalog, env.sim, s.rollout_seed);
      CHECK(replay.e_p == s.reward.e_p);
    }
    CHECK(std::abs(sum) < 1e-9);
  }
}

TEST_CASE("surrogate: K = 2 micro-case moves probability the right way") {
  auto env = default_env();
  auto s = students(env, 1)[0];
  auto ctx = PromptContext::from_student(s.state, 5);
  auto p = PolicyParams::init_uniform(20, 8, 0.3, 5);
  std::vector<RewardVector> rv{{1, 1, 1, 1}, {0.5, 0.5, 0.5, 0.5}};
  GrpoConfig cfg;
  auto adv = group_advantages(group_fitness(rv, cfg), cfg.adv_eps);
  const std::vector<int> good{2, 4, 6, 8, 10}, bad{11, 13, 15};
  std::vector<SampleGroup> groups{make_group(p, ctx, std::vector<std::vector<int>>{good, bad}, adv)};
  auto r = surrogate_gradient(p, groups, cfg);
  auto q = p;
  for (std::size_t i = 0; i < q.size(); ++i) q.theta[i] += 1e-3 * r.grad[i];
  CHECK(path_log_prob(q, ctx, good) > path_log_prob(p, ctx, good));
  CHECK(path_log_prob(q, ctx, bad) < path_log_prob(p, ctx, bad));
}

TEST_CASE("surrogate: per-token variant agrees at ratio one") {
  auto env = default_env();
  auto s = students(env, 1)[0];
  auto ctx = PromptContext::from_student(s.state, 5);
  auto p = PolicyParams::init_uniform(20, 8, 0.3, 5);
  std::vector<SampleGroup> groups{make_group(p, ctx, {{1, 2}, {3, 4, 5}}, {1.0, -1.0})};
  GrpoConfig cfg;
  cfg.per_token_ratio = true;
  auto r = surrogate_gradient(p, groups, cfg);
  CHECK(r.mean_ratio == doctest::Approx(1.0));
  std::vector<double> expected(p.size(), 0.0);
  for (const auto& smp : groups[0].samples) {
    auto f = forward_path(p, ctx, smp.path);
    std::vector<double> w(f.actions.size(), smp.advantage / (2.0 * static_cast<double>(f.actions.size())));
    accumulate_gradient(p, ctx, f, w, expected);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(r.grad[i] == doctest::Approx(expected[i]).epsilon(1e-9));
}

TEST_CASE("train_loop: zero epochs and determinism") {
  auto env = default_env();
  auto ss = students(env, 12, 3);
  auto prompts = make_prompts(ss, 5);
  auto rc = reward_context(env, 5);
  auto p = PolicyParams::init_uniform(20, 8, 0.05, 1);
  GrpoConfig cfg;
  cfg.epochs = 0;
  auto none = train_loop(p, prompts, cfg, env, rc);
  CHECK(none.params.theta == p.theta);
  CHECK(none.report.steps.empty());

  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 7;
  auto a = train_loop(p, prompts, cfg, env, rc);
  auto b = train_loop(p, prompts, cfg, env, rc);
  CHECK(a.params.theta == b.params.theta);
  std::ostringstream ca, cb;
  a.report.write_csv(ca);
  b.report.write_csv(cb);
  CHECK(ca.str() == cb.str());
  CHECK(a.report.steps.size() == 6);
  for (const auto& r : a.report.steps) {
    CHECK(std::abs(r.adv_mean) < 1e-9);
    CHECK(r.adv_std <= 1.0 + 1e-6);
  }
  CHECK(a.report.summary()["num_steps"] == 6);
}

TEST_CASE("train_loop: eval hook runs once per epoch") {
  auto env = default_env();
  auto ss = students(env, 8, 3);
  auto prompts = make_prompts(ss, 5);
  GrpoConfig cfg;
  cfg.epochs = 3;
  int calls = 0;
  auto r = train_loop(PolicyParams::init_uniform(20, 8, 0.05, 1), prompts, cfg, env, reward_context(env, 5),
                      [&](int, const PolicyParams&) { return static_cast<double>(++calls); });
  CHECK(calls == 3);
  REQUIRE(r.report.evals.size() == 3);
  CHECK(r.report.evals.back().e_p == 3.0);
}

TEST_CASE("length-only training moves lengths toward the target") {
  auto env = default_env();
  auto ss = students(env, 32, 9);
  auto prompts = make_prompts(ss, 5);
  auto rc = reward_context(env, 5);
  auto p = PolicyParams::init_uniform(20, 16, 0.05, 3);
  GrpoConfig cfg;
  cfg.advantage = AdvantageMode::kWeightedSum;
  cfg.weights = {0, 0, 1, 0};
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 10;
  cfg.seed = 5;
  auto trained = train_loop(p, prompts, cfg, env, rc).params;
  auto gap = [&](const PolicyParams& q) {
    double total = 0;
    for (const auto& s : ss) {
      Rng rng(derive_seed(1, {static_cast<std::uint64_t>(s.id)}));
      for (int k = 0; k < 8; ++k)
        total += std::abs(static_cast<double>(sample_path(q, PromptContext::from_student(s.state, 5), rng).path.size()) - 5);
    }
    return total / (8.0 * ss.size());
  };
  CHECK(gap(trained) < gap(p));
}

TEST_CASE("evaluate_policy") {
  auto env = default_env();
  auto ss = students(env, 10, 5);
  auto rc = reward_context(env, 10);

  SUBCASE("replay reproduces stored E_p") {
    std::map<int, std::vector<int>> paths;
    std::map<int, double> stored;
    Rng rng(2);
    for (const auto& s : ss) {
      std::vector<int> p(10);
      for (auto& c : p) c = rng.index(20);
      paths[s.id] = p;
      stored[s.id] = run_path(s.state, p, env.catalog, env.sim, 1234).e_p;
    }
    auto r = evaluate_policy(replay_policy(paths), "replay", ss, env, 10, rc, 9);
    for (const auto& row : r.rows) {
      CHECK(row.e_p == stored[row.student]);
      CHECK(row.path == paths[row.student]);
    }
    CHECK(r.summary.len_score_mean == 1.0);
    CHECK(r.summary.n == 10);
  }
  SUBCASE("random baseline is reproducible and fixed-length") {
    auto a = evaluate_policy(random_policy(20, 3), "random", ss, env, 10, rc, 9);
    auto b = evaluate_policy(random_policy(20, 3), "random", ss, env, 10, rc, 9);
    CHECK(a.summary.e_p_mean == b.summary.e_p_mean);
    CHECK(a.summary.len_score_mean == 1.0);
    CHECK(a.summary.length_mean == 10.0);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].path == b.rows[i].path);
  }
  SUBCASE("nearest-z policy stays in the band") {
    auto r = evaluate_policy(nearest_zpd_policy(rc), "nearest_zpd", ss, env, 10, rc, 9);
    for (const auto& row : r.rows) {
      const double z = rc.zpd.center(ss[static_cast<std::size_t>(row.student)].state.proficiency);
      for (int c : row.path) CHECK(std::abs(rc.difficulty[static_cast<std::size_t>(c)] - z) <= rc.zpd.sigma);
    }
  }
  SUBCASE("no students") { CHECK_THROWS(evaluate_policy(random_policy(20, 3), "r", {}, env, 10, rc, 9)); }
}

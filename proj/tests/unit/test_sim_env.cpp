#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ibgrpo/sim_env.hpp"

using namespace ibgrpo;

namespace {

ConceptCatalog single(double d) { return ConceptCatalog({{0, d, {}}}, {0}); }

// Average ranks (ties shared), then Pearson on the ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("catalog invariants are enforced") {
  CHECK_THROWS(ConceptCatalog({}, {0}));
  CHECK_THROWS(ConceptCatalog({{0, 0.5, {}}, {2, 0.5, {}}}, {0}));
  CHECK_THROWS(ConceptCatalog({{0, 1.5, {}}}, {0}));
  CHECK_THROWS(ConceptCatalog({{0, 0.5, {1}}, {1, 0.5, {0}}}, {0}));
  CHECK_THROWS(ConceptCatalog({{0, 0.5, {}}}, {}));
  CHECK_THROWS(ConceptCatalog({{0, 0.5, {}}}, {3}));
  CHECK_NOTHROW(ConceptCatalog({{0, 0.5, {}}, {1, 0.6, {0}}}, {1}));
}

TEST_CASE("default catalog") {
  auto c = ConceptCatalog::desk_default(20);
  CHECK(c.size() == 20);
  CHECK(c.difficulty(0) == doctest::Approx(0.05));
  CHECK(c.difficulty(19) == doctest::Approx(0.95));
  CHECK(c.target_set().size() == 20);
  auto back = ConceptCatalog::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("init_student") {
  auto cat = ConceptCatalog::desk_default(20);
  SimConfig cfg;
  cfg.init.kind = InitKind::kUniform;
  cfg.init.low = 0.1;
  cfg.init.high = 0.4;
  auto s = init_student(cat, cfg, 0);
  for (double m : s.mastery) {
    CHECK(m >= 0.1);
    CHECK(m <= 0.4);
  }
  auto t = init_student(cat, cfg, 0);
  CHECK(s.mastery == t.mastery);

  SimConfig def;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto st = init_student(cat, def, seed);
    auto exam = administer_exam(st, cat);
    CHECK(st.proficiency == doctest::Approx(exam.score / exam.max_score).epsilon(1e-12));
    CHECK(st.proficiency >= 0.0);
    CHECK(st.proficiency <= 1.0);
    CHECK(st.history.empty());
  }
}

TEST_CASE("practice: saturated concept") {
  SimConfig cfg;
  Rng rng(1);
  // difficulty at or below proficiency: always correct
  StudentState easy{{1.0}, 0.6, {}};
  for (int i = 0; i < 50; ++i) {
    CHECK(practice_step(easy, single(0.6), cfg, 0, rng) == 1);
    CHECK(easy.mastery[0] == 1.0);
  }
  CHECK(easy.history.size() == 50);
  // harder concepts lower the odds but never move a saturated mastery
  StudentState hard{{1.0}, 0.2, {}};
  CHECK(success_probability(hard, single(0.9), 0) == doctest::Approx(1.0 - 0.5 * 0.7));
  for (int i = 0; i < 50; ++i) {
    practice_step(hard, single(0.9), cfg, 0, rng);
    CHECK(hard.mastery[0] == 1.0);
  }
}

TEST_CASE("practice: gain kernel peaks at d = a") {
  CHECK(gain_kernel(0.4, 0.4, 0.25) == 1.0);
  CHECK(gain_kernel(0.6, 0.4, 0.25) < 1.0);
  CHECK(gain_kernel(0.2, 0.4, 0.25) == doctest::Approx(gain_kernel(0.6, 0.4, 0.25)));
}

TEST_CASE("practice: hand-evaluated update") {
  auto cat = single(0.5);
  SimConfig cfg;
  cfg.learn_rate = 0.2;
  std::vector<double> m{0.5};
  apply_practice(m, 0.5, cat, cfg, 0);
  CHECK(m[0] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("practice: prerequisite gating") {
  ConceptCatalog cat({{0, 0.5, {}}, {1, 0.5, {0}}}, {0, 1});
  SimConfig cfg;
  cfg.learn_rate = 0.2;
  std::vector<double> low{0.1, 0.5}, high{0.9, 0.5};
  CHECK(prereq_factor(low, cat, cfg, 1) == cfg.gated_factor);
  CHECK(prereq_factor(high, cat, cfg, 1) == 1.0);
  apply_practice(low, 0.5, cat, cfg, 1);
  apply_practice(high, 0.5, cat, cfg, 1);
  CHECK(low[1] == doctest::Approx(0.5 + 0.2 * 0.3 * 0.5));
  CHECK(high[1] == doctest::Approx(0.6));
}

TEST_CASE("practice: invalid id") {
  auto cat = ConceptCatalog::desk_default(5);
  SimConfig cfg;
  StudentState s = init_student(cat, cfg, 3);
  Rng rng(0);
  CHECK_THROWS_AS(practice_step(s, cat, cfg, 5, rng), std::out_of_range);
  CHECK_THROWS_AS(practice_step(s, cat, cfg, -1, rng), std::out_of_range);
}

TEST_CASE("exam examples") {
  ConceptCatalog cat({{0, 0.1, {}}, {1, 0.2, {}}, {2, 0.3, {}}}, {0, 1});
  auto r = administer_exam(std::vector<double>{0.3, 0.7, 0.9}, cat);
  CHECK(r.score == doctest::Approx(1.0));
  CHECK(r.max_score == 2.0);
  CHECK(administer_exam(std::vector<double>{1, 1, 0}, cat).score == 2.0);
  CHECK(administer_exam(std::vector<double>{0, 0, 1}, cat).score == 0.0);
}

TEST_CASE("learning effect") {
  CHECK(learning_effect({2, 10}, {5, 10}) == doctest::Approx(0.375));
  CHECK(learning_effect({10, 10}, {10, 10}) == 0.0);
}

TEST_CASE("run_path") {
  auto cat = ConceptCatalog::desk_default(10);
  SimConfig cfg;
  auto s = init_student(cat, cfg, 11);

  SUBCASE("invalid id names its position") {
    std::vector<int> path{1, 2, 42, 3};
    try {
      run_path(s, path, cat, cfg, 0);
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("position 2") != std::string::npos);
    }
  }
  SUBCASE("already mastered") {
    StudentState full{std::vector<double>(10, 1.0), 1.0, {}};
    std::vector<int> path{0, 1, 2};
    CHECK(run_path(full, path, cat, cfg, 0).e_p == 0.0);
  }
  SUBCASE("determinism and seed independence of E_p") {
    std::vector<int> path{0, 3, 3, 5, 9, 1};
    auto a = run_path(s, path, cat, cfg, 77);
    auto b = run_path(s, path, cat, cfg, 77);
    CHECK(a.e_p == b.e_p);
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      CHECK(a.steps[i].correct == b.steps[i].correct);
      CHECK(a.steps[i].mastery == b.steps[i].mastery);
    }
    CHECK(run_path(s, path, cat, cfg, 78).e_p == a.e_p);
    CHECK(path_effect(s, path, cat, cfg) == a.e_p);
    CHECK(a.steps.size() == path.size());
    CHECK(a.final_state.history.size() == s.history.size() + path.size());
  }
}

TEST_CASE("property: mastery is monotone and bounded, E_p in [0,1]") {
  auto cat = ConceptCatalog::desk_default(20);
  SimConfig cfg;
  Rng pick(2024);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto s = init_student(cat, cfg, seed);
    Rng rng(seed);
    std::vector<int> path;
    for (int t = 0; t < 30; ++t) {
      auto before = s.mastery;
      int c = pick.index(20);
      path.push_back(c);
      practice_step(s, cat, cfg, c, rng);
      for (std::size_t k = 0; k < before.size(); ++k) {
        CHECK(s.mastery[k] >= before[k]);
        CHECK(s.mastery[k] <= 1.0);
      }
    }
    auto e = path_effect(init_student(cat, cfg, seed), path, cat, cfg);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("property: single-step gain is maximized at d = a") {
  SimConfig cfg;
  const double a = 0.43;
  double best_d = -1, best_gain = -1;
  for (int i = 0; i <= 100; ++i) {
    double d = i / 100.0;
    std::vector<double> m{0.3};
    apply_practice(m, a, single(d), cfg, 0);
    if (m[0] - 0.3 > best_gain) {
      best_gain = m[0] - 0.3;
      best_d = d;
    }
  }
  CHECK(std::abs(best_d - a) <= 0.005 + 1e-12);
}

TEST_CASE("empirical difficulty") {
  auto cat = ConceptCatalog::desk_default(20);
  SimConfig cfg;
  auto rates = estimate_empirical_difficulty(cat, cfg, 10000, 5);
  REQUIRE(rates.size() == 20);
  for (double r : rates) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
  CHECK(spearman(rates, cat.difficulties()) > 0.8);

  SimConfig mastered;
  mastered.init.kind = InitKind::kUniform;
  mastered.init.low = 0.999;
  mastered.init.high = 1.0;
  for (double r : estimate_empirical_difficulty(cat, mastered, 2000, 5)) CHECK(r < 0.01);
}

TEST_CASE("trajectory records round-trip and replay") {
  auto cat = ConceptCatalog::desk_default(8);
  SimConfig cfg;
  Environment env{cat, cfg};
  std::vector<TrajectoryRecord> recs;
  for (int i = 0; i < 5; ++i) {
    auto s = init_student(cat, cfg, static_cast<std::uint64_t>(i));
    std::vector<int> path{i, (i + 1) % 8, (i + 3) % 8};
    recs.push_back(make_trajectory_record(i, s, path, env, 100 + static_cast<std::uint64_t>(i)));
  }
  std::stringstream ss;
  write_trajectories(ss, recs);
  auto back = read_trajectories(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].path == recs[i].path);
    CHECK(back[i].correct == recs[i].correct);
    CHECK(back[i].e_p == recs[i].e_p);
    CHECK(back[i].seed == recs[i].seed);
    auto s = init_student(cat, cfg, i);
    auto replay = run_path(s, back[i].path, cat, cfg, back[i].seed);
    CHECK(replay.e_p == back[i].e_p);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ibgrpo/random.hpp"
#include "ibgrpo/rewards.hpp"

using namespace ibgrpo;

namespace {

ZpdReference fixed_ref(double z, double sigma = 0.1) { return ZpdReference{{z}, {1}, sigma}; }

const double kTol = 1e-9;

}  // namespace

TEST_CASE("zpd reference: examples") {
  std::vector<double> diff{0.2, 0.4, 0.5, 0.5};
  SUBCASE("mean of qualifying difficulties") {
    std::vector<ZpdSample> t{{0.5, {0, 1}, 0.95}};
    auto ref = estimate_zpd_reference(t, diff, 0.1, 1);
    CHECK(ref.z[0] == doctest::Approx(0.3).epsilon(kTol));
    CHECK(ref.support[0] == 1);
  }
  SUBCASE("E_p = 0.9 is excluded") {
    std::vector<ZpdSample> t{{0.5, {0, 1}, 0.9}};
    CHECK_THROWS_WITH(estimate_zpd_reference(t, diff, 0.1, 1), "insufficient high-outcome support");
    t.push_back({0.5, {2}, 0.91});
    CHECK(estimate_zpd_reference(t, diff, 0.1, 1).z[0] == doctest::Approx(0.5));
  }
  SUBCASE("constant difficulty fills every bin") {
    std::vector<ZpdSample> t{{0.1, {2, 3}, 0.95}, {0.7, {3}, 0.99}, {0.95, {2}, 0.92}};
    auto ref = estimate_zpd_reference(t, diff, 0.1, 5);
    for (double z : ref.z) CHECK(z == doctest::Approx(0.5).epsilon(kTol));
  }
  SUBCASE("empty bins interpolate, edges copy") {
    std::vector<double> d{0.2, 0.6};
    std::vector<ZpdSample> t{{0.3, {0}, 0.95}, {0.7, {1}, 0.95}};
    auto ref = estimate_zpd_reference(t, d, 0.1, 5);
    // supported bins 1 and 3
    CHECK(ref.z[0] == doctest::Approx(0.2));
    CHECK(ref.z[1] == doctest::Approx(0.2));
    CHECK(ref.z[2] == doctest::Approx(0.4));
    CHECK(ref.z[3] == doctest::Approx(0.6));
    CHECK(ref.z[4] == doctest::Approx(0.6));
    CHECK(ref.support == std::vector<int>{0, 1, 0, 1, 0});
  }
  SUBCASE("json round-trip") {
    ZpdReference r{{0.1, 0.2}, {3, 0}, 0.1};
    auto back = ZpdReference::from_json(r.to_json());
    CHECK(back.z == r.z);
    CHECK(back.support == r.support);
    CHECK(back.sigma == r.sigma);
  }
}

TEST_CASE("zpd reference: bin lookup") {
  ZpdReference r{{0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}, 0.1};
  CHECK(r.bin_of(0.0) == 0);
  CHECK(r.bin_of(0.19) == 0);
  CHECK(r.bin_of(0.2) == 1);
  CHECK(r.bin_of(0.99) == 4);
  CHECK(r.bin_of(1.0) == 4);
}

TEST_CASE("score_zpd examples") {
  std::vector<double> diff{0.5, 0.6, 0.4};
  auto ref = fixed_ref(0.5);
  std::vector<int> on{0, 0, 0};
  CHECK(score_zpd(on, diff, 0.3, ref) == doctest::Approx(1.0).epsilon(kTol));
  std::vector<int> one{1};
  CHECK(score_zpd(one, diff, 0.3, ref) == doctest::Approx(std::exp(-0.5)).epsilon(kTol));
  CHECK(std::exp(-0.5) == doctest::Approx(0.6065).epsilon(1e-4));
  std::vector<int> two{0, 1};
  CHECK(score_zpd(two, diff, 0.3, ref) == doctest::Approx((1 + std::exp(-0.5)) / 2).epsilon(kTol));
  CHECK(score_zpd(two, diff, 0.3, ref) == doctest::Approx(0.8033).epsilon(1e-4));
  CHECK_THROWS(score_zpd(std::vector<int>{}, diff, 0.3, ref));
}

TEST_CASE("property: score_zpd is permutation invariant") {
  Rng rng(3);
  std::vector<double> diff(10);
  for (auto& d : diff) d = rng.uniform();
  auto ref = fixed_ref(0.45);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> p(8);
    for (auto& c : p) c = rng.index(10);
    double base = score_zpd(p, diff, 0.5, ref);
    rng.shuffle(p);
    CHECK(score_zpd(p, diff, 0.5, ref) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
  }
}

TEST_CASE("score_length examples") {
  LengthConstraint lc{10, 1, 0.1};
  CHECK(score_length(10, lc) == 1.0);
  CHECK(score_length(14, lc) == doctest::Approx(-0.3).epsilon(kTol));
  CHECK(score_length(11, lc) == 1.0);
  CHECK(score_length(9, lc) == 1.0);
}

TEST_CASE("property: score_length band and strict decrease") {
  LengthConstraint lc{10, 1, 0.1};
  for (std::size_t n = 9; n <= 11; ++n) CHECK(score_length(n, lc) == 1.0);
  for (std::size_t n = 11; n < 30; ++n) CHECK(score_length(n + 1, lc) < score_length(n, lc));
  for (std::size_t n = 9; n > 0; --n) CHECK(score_length(n - 1, lc) < score_length(n, lc));
}

TEST_CASE("ngram_jaccard examples") {
  std::vector<int> a{0, 1, 2}, b{0, 1, 3}, c{5, 6, 7};
  CHECK(ngram_jaccard(a, a, 2) == 1.0);
  CHECK(ngram_jaccard(a, b, 2) == doctest::Approx(1.0 / 3.0).epsilon(kTol));
  CHECK(ngram_jaccard(a, c, 2) == 0.0);
  std::vector<int> s1{4}, s2{9};
  CHECK(ngram_jaccard(s1, s2, 2) == 1.0);
}

TEST_CASE("property: ngram_jaccard symmetric, bounded, 1 iff equal sets") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> a(static_cast<std::size_t>(2 + rng.index(6))), b(static_cast<std::size_t>(2 + rng.index(6)));
    for (auto& x : a) x = rng.index(4);
    for (auto& x : b) x = rng.index(4);
    double j = ngram_jaccard(a, b, 2);
    CHECK(j == ngram_jaccard(b, a, 2));
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    std::set<std::pair<int, int>> ga, gb;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) ga.insert({a[i], a[i + 1]});
    for (std::size_t i = 0; i + 1 < b.size(); ++i) gb.insert({b[i], b[i + 1]});
    CHECK((j == 1.0) == (ga == gb));
  }
}

TEST_CASE("score_diversity examples") {
  std::vector<std::vector<int>> same{{0, 1, 2}, {0, 1, 2}, {0, 1, 2}};
  for (std::size_t i = 0; i < 3; ++i) CHECK(score_diversity(i, same, 2) == 0.0);
  std::vector<std::vector<int>> disjoint{{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  for (std::size_t i = 0; i < 3; ++i) CHECK(score_diversity(i, disjoint, 2) == 1.0);
  std::vector<std::vector<int>> mixed{{0, 1, 2}, {0, 1, 3}, {7, 8, 9}};
  CHECK(score_diversity(0, mixed, 2) == doctest::Approx(5.0 / 6.0).epsilon(kTol));
  CHECK_THROWS_AS(score_diversity(3, mixed, 2), std::out_of_range);
  std::vector<std::vector<int>> lone{{1, 2}};
  CHECK(score_diversity(0, lone, 2) == 1.0);
}

TEST_CASE("property: copying a path weakly lowers diversity") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<int>> g(5);
    for (auto& p : g) {
      p.resize(static_cast<std::size_t>(3 + rng.index(4)));
      for (auto& c : p) c = rng.index(5);
    }
    std::size_t src = static_cast<std::size_t>(rng.index(5));
    std::size_t dst = (src + 1 + static_cast<std::size_t>(rng.index(4))) % 5;
    auto h = g;
    h[dst] = g[src];
    const double before = score_diversity(src, g, 2);
    CHECK(score_diversity(src, h, 2) <= before + 1e-12);
    CHECK(score_diversity(dst, h, 2) == doctest::Approx(score_diversity(src, h, 2)).epsilon(1e-12));
  }
}

TEST_CASE("len_score and div_path examples") {
  CHECK(len_score(10, 10) == 1.0);
  CHECK(len_score(15, 10) == doctest::Approx(0.5).epsilon(kTol));
  CHECK(len_score(20, 10) == 0.0);
  CHECK(len_score(31, 10) == 0.0);
  CHECK(div_path(std::vector<int>{0, 1, 2, 3}) == 1.0);
  CHECK(div_path(std::vector<int>{0, 0, 1, 1, 2}) == doctest::Approx(0.6).epsilon(kTol));
  CHECK(div_path(std::vector<int>(10, 4)) == doctest::Approx(0.1).epsilon(kTol));
}

TEST_CASE("compose_reward_vector") {
  RewardContext ctx;
  ctx.difficulty = {0.5, 0.5, 0.5, 0.9, 0.6};
  ctx.zpd = fixed_ref(0.5);
  ctx.length = {3, 0, 0.1};

  SUBCASE("component maxima") {
    std::vector<std::vector<int>> group{{0, 1, 2}, {3, 3, 4}};
    auto r = compose_reward_vector(group[0], 1.0, 0.4, ctx, group, 0);
    CHECK(r.e_p == 1.0);
    CHECK(r.s_zpd == doctest::Approx(1.0));
    CHECK(r.r_len == 1.0);
    CHECK(r.d_div == 1.0);
  }
  SUBCASE("floors") {
    std::vector<std::vector<int>> group{{3, 3, 3, 3, 3}, {3, 3, 3, 3, 3}};
    auto r = compose_reward_vector(group[0], 0.0, 0.4, ctx, group, 0);
    CHECK(r.e_p == 0.0);
    CHECK(r.s_zpd == doctest::Approx(std::exp(-8.0)));
    CHECK(r.r_len == doctest::Approx(-0.2));
    CHECK(r.d_div == 0.0);
  }
  SUBCASE("mixed") {
    std::vector<std::vector<int>> group{{0, 4, 2}, {0, 4, 1}, {3, 3, 3}};
    auto r = compose_reward_vector(group[0], 0.375, 0.4, ctx, group, 0);
    CHECK(r.e_p == 0.375);
    CHECK(r.s_zpd == doctest::Approx((2 + std::exp(-0.5)) / 3).epsilon(kTol));
    CHECK(r.r_len == 1.0);
    CHECK(r.d_div == doctest::Approx(1.0 - (1.0 / 3.0 + 0.0) / 2.0).epsilon(kTol));
    CHECK(r[RewardVector::kZpd] == r.s_zpd);
  }
}

TEST_CASE("reward mask") {
  auto m = RewardMask::from_list("zpd");
  CHECK(m.dim() == 3);
  CHECK(!m.all_active());
  RewardVector r{0.1, 0.2, 0.3, 0.4};
  CHECK(m.apply(r) == std::vector<double>{0.1, 0.3, 0.4});
  CHECK(RewardMask::from_list(m.to_list()).active == m.active);
  auto two = RewardMask::from_list("zpd,div");
  CHECK(two.apply(r) == std::vector<double>{0.1, 0.3});
  CHECK(RewardMask::from_list("").all_active());
  CHECK(RewardMask::from_list("none").all_active());
  CHECK_THROWS(RewardMask::from_list("e_p,zpd,len,div"));
  CHECK_THROWS(RewardMask::from_list("bogus"));
}

#include "ibgrpo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ibgrpo {

namespace {

constexpr const char* kNames[RewardVector::kDim] = {"e_p", "zpd", "len", "div"};

}  // namespace

const char* component_name(int m) {
  if (m < 0 || m >= RewardVector::kDim) throw std::out_of_range("component index");
  return kNames[m];
}

int parse_component(const std::string& name) {
  if (name == "e_p" || name == "ep" || name == "effect") return RewardVector::kLearningEffect;
  if (name == "zpd" || name == "s_zpd") return RewardVector::kZpd;
  if (name == "len" || name == "length" || name == "r_len") return RewardVector::kLength;
  if (name == "div" || name == "diversity" || name == "d_div") return RewardVector::kDiversity;
  throw std::invalid_argument("unknown reward component: " + name);
}

RewardMask RewardMask::from_list(const std::string& list) {
  RewardMask mask;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty() || item == "none") continue;
    mask.active[static_cast<std::size_t>(parse_component(item))] = false;
  }
  if (mask.dim() == 0) throw std::invalid_argument("reward mask removes every objective");
  return mask;
}

std::string RewardMask::to_list() const {
  std::string out;
  for (int m = 0; m < RewardVector::kDim; ++m) {
    if (active[static_cast<std::size_t>(m)]) continue;
    if (!out.empty()) out += ',';
    out += kNames[m];
  }
  return out;
}

std::vector<double> RewardMask::apply(const RewardVector& r) const {
  std::vector<double> out;
  const auto v = r.values();
  for (int m = 0; m < RewardVector::kDim; ++m)
    if (active[static_cast<std::size_t>(m)]) out.push_back(v[static_cast<std::size_t>(m)]);
  return out;
}

int RewardMask::dim() const {
  return static_cast<int>(std::count(active.begin(), active.end(), true));
}

int ZpdReference::bin_of(double proficiency) const {
  const int b = static_cast<int>(std::floor(proficiency * num_bins()));
  return std::clamp(b, 0, num_bins() - 1);
}

nlohmann::json ZpdReference::to_json() const {
  std::vector<double> edges;
  for (int b = 0; b <= num_bins(); ++b) edges.push_back(static_cast<double>(b) / num_bins());
  return {{"bins", edges}, {"z", z}, {"sigma", sigma}, {"support", support}};
}

ZpdReference ZpdReference::from_json(const nlohmann::json& j) {
  ZpdReference r;
  r.z = j.at("z").get<std::vector<double>>();
  r.sigma = j.at("sigma").get<double>();
  r.support = j.value("support", std::vector<int>(r.z.size(), 0));
  if (r.z.empty() || r.support.size() != r.z.size())
    throw std::invalid_argument("zpd reference: malformed bins");
  if (!(r.sigma > 0.0)) throw std::invalid_argument("zpd reference: sigma must be > 0");
  return r;
}

ZpdReference estimate_zpd_reference(std::span<const ZpdSample> trajectories,
                                    std::span<const double> difficulty, double sigma,
                                    int num_bins, double outcome_threshold) {
  if (trajectories.empty()) throw std::invalid_argument("estimate_zpd_reference: no trajectories");
  if (num_bins < 1) throw std::invalid_argument("estimate_zpd_reference: num_bins < 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("estimate_zpd_reference: sigma must be > 0");

  ZpdReference ref;
  ref.sigma = sigma;
  ref.z.assign(static_cast<std::size_t>(num_bins), 0.0);
  ref.support.assign(static_cast<std::size_t>(num_bins), 0);
  std::vector<double> sum(static_cast<std::size_t>(num_bins), 0.0);
  std::vector<long> steps(static_cast<std::size_t>(num_bins), 0);

  for (const ZpdSample& t : trajectories) {
    if (!(t.e_p > outcome_threshold)) continue;
    const auto b = static_cast<std::size_t>(ref.bin_of(t.proficiency));
    ++ref.support[b];
    for (int c : t.path) {
      sum[b] += difficulty[static_cast<std::size_t>(c)];
      ++steps[b];
    }
  }

  std::vector<int> filled;
  for (int b = 0; b < num_bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    if (steps[i] > 0) {
      ref.z[i] = sum[i] / static_cast<double>(steps[i]);
      filled.push_back(b);
    }
  }
  if (filled.empty()) throw std::runtime_error("insufficient high-outcome support");

  for (int b = 0; b < num_bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    if (steps[i] > 0) continue;
    auto hi = std::lower_bound(filled.begin(), filled.end(), b);
    if (hi == filled.begin()) {
      ref.z[i] = ref.z[static_cast<std::size_t>(*hi)];
    } else if (hi == filled.end()) {
      ref.z[i] = ref.z[static_cast<std::size_t>(filled.back())];
    } else {
      const int lo = *(hi - 1);
      const double w = static_cast<double>(b - lo) / static_cast<double>(*hi - lo);
      ref.z[i] = (1.0 - w) * ref.z[static_cast<std::size_t>(lo)] + w * ref.z[static_cast<std::size_t>(*hi)];
    }
  }
  return ref;
}

double score_zpd(std::span<const int> path, std::span<const double> difficulty,
                 double proficiency, const ZpdReference& ref) {
  if (path.empty()) throw std::invalid_argument("score_zpd: empty path");
  const double z = ref.center(proficiency);
  const double two_var = 2.0 * ref.sigma * ref.sigma;
  double total = 0.0;
  for (int c : path) {
    const double dev = difficulty[static_cast<std::size_t>(c)] - z;
    total += std::exp(-dev * dev / two_var);
  }
  return total / static_cast<double>(path.size());
}

double score_length(std::size_t path_length, const LengthConstraint& lc) {
  const long delta = std::labs(static_cast<long>(path_length) - lc.target);
  if (delta <= lc.tolerance) return 1.0;
  return -lc.penalty * static_cast<double>(delta - lc.tolerance);
}

namespace {

std::set<std::vector<int>> ngrams(std::span<const int> path, int n) {
  std::set<std::vector<int>> out;
  const auto len = static_cast<std::size_t>(n);
  if (path.size() < len) return out;
  for (std::size_t i = 0; i + len <= path.size(); ++i)
    out.emplace(path.begin() + static_cast<std::ptrdiff_t>(i),
                path.begin() + static_cast<std::ptrdiff_t>(i + len));
  return out;
}

}  // namespace

double ngram_jaccard(std::span<const int> a, std::span<const int> b, int n) {
  if (n < 1) throw std::invalid_argument("ngram_jaccard: n must be >= 1");
  const auto ga = ngrams(a, n);
  const auto gb = ngrams(b, n);
  if (ga.empty() && gb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : ga) inter += gb.count(g);
  const std::size_t uni = ga.size() + gb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double score_diversity(std::size_t index, std::span<const std::vector<int>> group, int n) {
  if (index >= group.size()) throw std::out_of_range("score_diversity: index out of range");
  if (group.size() == 1) return 1.0;
  double sim = 0.0;
  for (std::size_t j = 0; j < group.size(); ++j)
    if (j != index) sim += ngram_jaccard(group[index], group[j], n);
  return 1.0 - sim / static_cast<double>(group.size() - 1);
}

double len_score(std::size_t path_length, int target) {
  if (target < 1) throw std::invalid_argument("len_score: target must be >= 1");
  const double delta = std::fabs(static_cast<double>(path_length) - target);
  return std::max(0.0, 1.0 - delta / target);
}

double div_path(std::span<const int> path) {
  if (path.empty()) throw std::invalid_argument("div_path: empty path");
  const std::set<int> uniq(path.begin(), path.end());
  return static_cast<double>(uniq.size()) / static_cast<double>(path.size());
}

RewardVector compose_reward_vector(std::span<const int> path, double e_p, double proficiency,
                                   const RewardContext& ctx,
                                   std::span<const std::vector<int>> group, std::size_t index) {
  RewardVector r;
  r.e_p = e_p;
  r.s_zpd = score_zpd(path, ctx.difficulty, proficiency, ctx.zpd);
  r.r_len = score_length(path.size(), ctx.length);
  r.d_div = score_diversity(index, group, ctx.ngram);
  return r;
}

}  // namespace ibgrpo

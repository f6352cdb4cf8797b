#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ibgrpo {

// The four training objectives, in fixed order [E_p, S_ZPD, R_Len, D_Div].
struct RewardVector {
  static constexpr int kDim = 4;
  enum Component { kLearningEffect = 0, kZpd = 1, kLength = 2, kDiversity = 3 };

  double e_p = 0.0;
  double s_zpd = 0.0;
  double r_len = 0.0;
  double d_div = 0.0;

  std::array<double, kDim> values() const { return {e_p, s_zpd, r_len, d_div}; }
  double operator[](int m) const { return values()[static_cast<std::size_t>(m)]; }
};

const char* component_name(int m);
// Parses "e_p", "zpd", "len", "div" (and the long names) into a component index.
int parse_component(const std::string& name);

// Which objectives are visible to the fitness computation. A masked
// objective is dropped from the vector, not zeroed.
struct RewardMask {
  std::array<bool, RewardVector::kDim> active{true, true, true, true};

  // Comma-separated component names to mask out, e.g. "zpd" or "zpd,div".
  static RewardMask from_list(const std::string& list);
  std::string to_list() const;
  std::vector<double> apply(const RewardVector& r) const;
  int dim() const;
  bool all_active() const { return dim() == RewardVector::kDim; }
};

// Per-bin center z(a) of the empirical optimal challenge distribution.
struct ZpdReference {
  std::vector<double> z;        // one entry per equal-width bin over [0,1]
  std::vector<int> support;     // qualifying trajectories per bin
  double sigma = 0.1;

  int num_bins() const { return static_cast<int>(z.size()); }
  int bin_of(double proficiency) const;
  double center(double proficiency) const { return z[static_cast<std::size_t>(bin_of(proficiency))]; }

  nlohmann::json to_json() const;
  static ZpdReference from_json(const nlohmann::json& j);
};

struct LengthConstraint {
  int target = 10;
  int tolerance = 1;
  double penalty = 0.1;
};

// Offline trajectory summary used to estimate z(a).
struct ZpdSample {
  double proficiency = 0.0;
  std::vector<int> path;
  double e_p = 0.0;
};

// z(a) = mean difficulty of every step of every trajectory with E_p strictly
// above `outcome_threshold` whose proficiency falls in the bin. Empty bins are
// filled by linear interpolation between the nearest supported bins on both
// sides, or copied from the nearest supported bin at the edges.
// Throws std::runtime_error("insufficient high-outcome support") when no
// trajectory qualifies.
ZpdReference estimate_zpd_reference(std::span<const ZpdSample> trajectories,
                                    std::span<const double> difficulty, double sigma,
                                    int num_bins, double outcome_threshold = 0.9);

double score_zpd(std::span<const int> path, std::span<const double> difficulty,
                 double proficiency, const ZpdReference& ref);

double score_length(std::size_t path_length, const LengthConstraint& lc);

double ngram_jaccard(std::span<const int> a, std::span<const int> b, int n);

// 1 - mean Jaccard similarity of group[index] to every other member; 1 for a
// singleton group.
double score_diversity(std::size_t index, std::span<const std::vector<int>> group, int n);

// Evaluation-only diagnostics.
double len_score(std::size_t path_length, int target);
double div_path(std::span<const int> path);

// Everything besides the path needed to score a group.
struct RewardContext {
  std::vector<double> difficulty;  // d(c) table used by S_ZPD
  ZpdReference zpd;
  LengthConstraint length;
  int ngram = 2;
};

RewardVector compose_reward_vector(std::span<const int> path, double e_p, double proficiency,
                                   const RewardContext& ctx,
                                   std::span<const std::vector<int>> group, std::size_t index);

}  // namespace ibgrpo

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibgrpo/random.hpp"
#include "ibgrpo/sim_env.hpp"

namespace ibgrpo {

// What the policy conditions on: the session-start state and the length
// constraint. Fixed for a whole generation episode.
struct PromptContext {
  std::vector<double> mastery;
  double proficiency = 0.0;
  int target_len = 10;

  int max_len() const { return 2 * target_len; }
  static PromptContext from_student(const StudentState& s, int target_len);
};

// Two-layer tanh network mapping step features to logits over |C| concepts
// plus END (the last action). Input layout, version 2:
//   [mastery (|C|) | a | t / L_max | (L_target - t) / L_target | one-hot previous action (|C|)
//    | visited-in-prefix indicators (|C|)]
class PolicyParams {
 public:
  static constexpr int kLayoutVersion = 2;

  PolicyParams(int num_concepts, int hidden);

  // Weights uniform in [-scale, scale], biases zero.
  static PolicyParams init_uniform(int num_concepts, int hidden, double scale, std::uint64_t seed);

  int num_concepts() const { return num_concepts_; }
  int hidden() const { return hidden_; }
  int input_dim() const { return 3 * num_concepts_ + 3; }
  int num_actions() const { return num_concepts_ + 1; }
  int end_action() const { return num_concepts_; }
  std::size_t size() const { return theta.size(); }

  // Offsets of each block inside theta.
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return static_cast<std::size_t>(hidden_ * input_dim()); }
  std::size_t w2_offset() const { return b1_offset() + static_cast<std::size_t>(hidden_); }
  std::size_t b2_offset() const { return w2_offset() + static_cast<std::size_t>(num_actions() * hidden_); }

  bool all_finite() const;

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static PolicyParams load(const std::string& path);

  std::vector<double> theta;

 private:
  int num_concepts_;
  int hidden_;
};

struct PathSample {
  std::vector<int> path;                // concepts, END excluded
  std::vector<double> step_log_probs;   // one per scored step (END included unless forced)
  double log_prob = 0.0;
  std::uint64_t seed = 0;
};

// Logits for the next action given the concepts emitted so far. END is -inf
// at step 0. Requires prefix.size() < ctx.max_len().
std::vector<double> step_logits(const PolicyParams& params, const PromptContext& ctx,
                                std::span<const int> prefix);

PathSample sample_path(const PolicyParams& params, const PromptContext& ctx, Rng& rng,
                       double temperature = 1.0);

// K ancestral samples, sample k seeded with derive_seed(seed, {kSample, k}).
std::vector<PathSample> sample_group(const PolicyParams& params, const PromptContext& ctx, int k,
                                     std::uint64_t seed, double temperature = 1.0);

PathSample greedy_decode(const PolicyParams& params, const PromptContext& ctx);

// Throws std::invalid_argument for inadmissible paths (empty, too long or
// invalid ids). A path of length L_max ends by a forced stop that
// contributes no log-probability.
double path_log_prob(const PolicyParams& params, const PromptContext& ctx,
                     std::span<const int> path);

std::vector<double> grad_log_prob(const PolicyParams& params, const PromptContext& ctx,
                                  std::span<const int> path);

// Cached forward pass over a path, for weighted per-step backprop.
struct PathForward {
  std::vector<int> actions;                 // scored actions, END included
  std::vector<std::vector<double>> hidden;  // tanh activations per step
  std::vector<std::vector<double>> probs;   // softmax per step
  std::vector<double> step_log_probs;
  double log_prob = 0.0;
};

PathForward forward_path(const PolicyParams& params, const PromptContext& ctx,
                         std::span<const int> path);

// grad += sum_t weights[t] * d log mu(a_t) / d theta.
void accumulate_gradient(const PolicyParams& params, const PromptContext& ctx,
                         const PathForward& fwd, std::span<const double> weights,
                         std::span<double> grad);

}  // namespace ibgrpo

#include "ibgrpo/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ibgrpo/indicator.hpp"

namespace ibgrpo {

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& std) {
  mean = 0.0;
  std = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) std += (x - mean) * (x - mean);
  std = std::sqrt(std / static_cast<double>(v.size()));
}

StudentState state_of(const PromptContext& ctx) {
  StudentState s;
  s.mastery = ctx.mastery;
  s.proficiency = ctx.proficiency;
  return s;
}

}  // namespace

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t size, double beta1, double beta2, double eps)
    : kind_(kind), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (kind_ == OptimizerKind::kAdam) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

void Optimizer::step(std::vector<double>& theta, std::span<const double> grad, double lr) {
  if (grad.size() != theta.size()) throw std::invalid_argument("optimizer: gradient size");
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double warmup_lr(double lr, long step, long warmup) {
  if (warmup <= 0 || step >= warmup) return lr;
  return lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

// ---------------------------------------------------------------------------

void SftConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("sft.learning_rate must be >= 0");
  if (epochs < 0) throw std::invalid_argument("sft.epochs must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw std::invalid_argument("sft.warmup_fraction must be in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("sft.batch_size must be >= 1");
}

PromptContext demo_context(const DemoRecord& r) { return {r.mastery, r.proficiency, r.target_len}; }

double dataset_nll(const PolicyParams& params, const DemoDataset& data) {
  if (data.records.empty()) throw std::invalid_argument("dataset_nll: empty dataset");
  double total = 0.0;
  for (const DemoRecord& r : data.records) total -= path_log_prob(params, demo_context(r), r.path);
  return total / static_cast<double>(data.records.size());
}

SftResult sft_train(const PolicyParams& params, const DemoDataset& data, const SftConfig& cfg) {
  cfg.validate();
  if (data.records.empty()) throw std::invalid_argument("sft_train: empty dataset");
  SftResult out{params, {}};
  out.report.initial_nll = dataset_nll(params, data);

  const std::size_t n = data.records.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const long batches = static_cast<long>((n + bs - 1) / bs);
  const long warmup = static_cast<long>(std::ceil(cfg.warmup_fraction * cfg.epochs * batches));
  Optimizer opt(cfg.optimizer, params.size());
  std::vector<std::size_t> order(n);
  std::vector<double> grad(params.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const DemoRecord& r = data.records[order[i]];
        const PromptContext ctx = demo_context(r);
        const PathForward f = forward_path(out.params, ctx, r.path);
        loss -= f.log_prob;
        // Descent direction of the NLL: weights of -1 per scored step.
        const std::vector<double> w(f.actions.size(), -1.0);
        accumulate_gradient(out.params, ctx, f, w, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= scale;
      if (!std::isfinite(loss))
        throw std::runtime_error("sft_train: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      opt.step(out.params.theta, grad, warmup_lr(cfg.learning_rate, step, warmup));
      ++step;
    }
    if (!out.params.all_finite())
      throw std::runtime_error("sft_train: parameters diverged at epoch " + std::to_string(epoch));
    out.report.epoch_nll.push_back(epoch_loss / static_cast<double>(n));
    out.report.final_nll.push_back(dataset_nll(out.params, data));
  }
  return out;
}

// ---------------------------------------------------------------------------

const char* advantage_name(AdvantageMode m) {
  switch (m) {
    case AdvantageMode::kIndicator: return "indicator";
    case AdvantageMode::kWeightedSum: return "weighted_sum";
    case AdvantageMode::kHvContribution: return "hv_contribution";
  }
  return "?";
}

AdvantageMode parse_advantage(const std::string& name) {
  if (name == "indicator") return AdvantageMode::kIndicator;
  if (name == "weighted_sum") return AdvantageMode::kWeightedSum;
  if (name == "hv_contribution") return AdvantageMode::kHvContribution;
  throw std::invalid_argument("unknown advantage mode '" + name +
                              "' (expected indicator, weighted_sum or hv_contribution)");
}

const char* scaling_name(ObjectiveScaling s) {
  return s == ObjectiveScaling::kGroupMinMax ? "group_minmax" : "raw";
}

ObjectiveScaling parse_scaling(const std::string& name) {
  if (name == "raw") return ObjectiveScaling::kRaw;
  if (name == "group_minmax") return ObjectiveScaling::kGroupMinMax;
  throw std::invalid_argument("unknown objective scaling '" + name + "' (expected raw or group_minmax)");
}

void GrpoConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("grpo.learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("grpo.batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("grpo.epochs must be >= 0");
  if (group_size < 2) throw std::invalid_argument("grpo.group_size must be >= 2");
  if (warmup_steps < 0) throw std::invalid_argument("grpo.warmup_steps must be >= 0");
  if (!(clip_low > 0.0 && clip_low < 1.0)) throw std::invalid_argument("grpo.clip_low must be in (0, 1)");
  if (!(clip_high > 0.0 && clip_high < 1.0))
    throw std::invalid_argument("grpo.clip_high must be in (0, 1)");
  if (!(kappa > 0.0)) throw std::invalid_argument("grpo.kappa must be > 0");
  if (!(adv_eps > 0.0)) throw std::invalid_argument("grpo.adv_eps must be > 0");
  if (!(kl_coef >= 0.0)) throw std::invalid_argument("grpo.kl_coef must be >= 0");
  if (updates_per_batch < 1) throw std::invalid_argument("grpo.updates_per_batch must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("grpo.temperature must be > 0");
  if (weights.size() != static_cast<std::size_t>(RewardVector::kDim))
    throw std::invalid_argument("grpo.weights must have 4 entries");
  for (double w : weights)
    if (!(w >= 0.0)) throw std::invalid_argument("grpo.weights must be non-negative");
  if (mask.dim() == 0) throw std::invalid_argument("grpo.reward_mask masks every objective");
}

std::vector<TrainPrompt> make_prompts(std::span<const StudentEntry> students, int target_len) {
  std::vector<TrainPrompt> prompts;
  prompts.reserve(students.size());
  for (const StudentEntry& s : students)
    prompts.push_back({s.id, PromptContext::from_student(s.state, target_len)});
  return prompts;
}

std::vector<double> group_fitness(std::span<const RewardVector> rewards, const GrpoConfig& cfg) {
  std::vector<Objectives> objs;
  objs.reserve(rewards.size());
  for (const RewardVector& r : rewards) objs.push_back(cfg.mask.apply(r));
  if (cfg.scaling == ObjectiveScaling::kGroupMinMax && !objs.empty()) {
    for (std::size_t m = 0; m < objs.front().size(); ++m) {
      double lo = objs.front()[m], hi = lo;
      for (const Objectives& o : objs) {
        lo = std::min(lo, o[m]);
        hi = std::max(hi, o[m]);
      }
      for (Objectives& o : objs) o[m] = hi > lo ? (o[m] - lo) / (hi - lo) : 0.0;
    }
  }
  switch (cfg.advantage) {
    case AdvantageMode::kIndicator: return pareto_fitness(objs, cfg.kappa);
    case AdvantageMode::kHvContribution: return hv_contribution_fitness(objs);
    case AdvantageMode::kWeightedSum: {
      std::vector<double> w;
      for (int m = 0; m < RewardVector::kDim; ++m)
        if (cfg.mask.active[static_cast<std::size_t>(m)]) w.push_back(cfg.weights[static_cast<std::size_t>(m)]);
      return weighted_sum_fitness(objs, w);
    }
  }
  throw std::logic_error("group_fitness: bad mode");
}

std::vector<SampleGroup> sample_groups(const PolicyParams& params_old,
                                       std::span<const TrainPrompt> prompts,
                                       const GrpoConfig& cfg, const Environment& env,
                                       const RewardContext& rewards, int epoch) {
  if (prompts.empty()) throw std::invalid_argument("ib_grpo: empty prompt batch");
  std::vector<SampleGroup> groups;
  groups.reserve(prompts.size());
  const auto ep = static_cast<std::uint64_t>(epoch);
  for (const TrainPrompt& p : prompts) {
    SampleGroup g;
    g.prompt_id = p.id;
    g.ctx = p.ctx;
    const auto pid = static_cast<std::uint64_t>(p.id);
    const StudentState start = state_of(p.ctx);
    std::vector<std::vector<int>> paths;
    for (int k = 0; k < cfg.group_size; ++k) {
      const auto kk = static_cast<std::uint64_t>(k);
      Rng rng(derive_seed(cfg.seed, {seed_tag::kSample, pid, kk, ep}));
      PathSample ps = sample_path(params_old, p.ctx, rng, cfg.temperature);
      GroupSample s;
      s.path = std::move(ps.path);
      s.old_step_log_probs = std::move(ps.step_log_probs);
      s.old_log_prob = ps.log_prob;
      s.rollout_seed = derive_seed(cfg.seed, {seed_tag::kRollout, pid, kk, ep});
      paths.push_back(s.path);
      g.samples.push_back(std::move(s));
    }
    std::vector<RewardVector> rv;
    for (std::size_t k = 0; k < g.samples.size(); ++k) {
      GroupSample& s = g.samples[k];
      const double e_p = run_path(start, s.path, env.catalog, env.sim, s.rollout_seed).e_p;
      s.reward = compose_reward_vector(s.path, e_p, p.ctx.proficiency, rewards, paths, k);
      rv.push_back(s.reward);
    }
    const std::vector<double> fit = group_fitness(rv, cfg);
    const std::vector<double> adv = group_advantages(fit, cfg.adv_eps);
    for (std::size_t k = 0; k < g.samples.size(); ++k) {
      g.samples[k].fitness = fit[k];
      g.samples[k].advantage = adv[k];
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

double clipped_term(double rho, double advantage, double clip_low, double clip_high) {
  const double clipped = std::clamp(rho, 1.0 - clip_low, 1.0 + clip_high);
  return std::min(rho * advantage, clipped * advantage);
}

double clipped_term_slope(double rho, double advantage, double clip_low, double clip_high) {
  if (advantage > 0.0 && rho > 1.0 + clip_high) return 0.0;
  if (advantage < 0.0 && rho < 1.0 - clip_low) return 0.0;
  return rho * advantage;
}

SurrogateResult surrogate_gradient(const PolicyParams& params, std::span<const SampleGroup> groups,
                                   const GrpoConfig& cfg, const PolicyParams* reference) {
  SurrogateResult out;
  out.grad.assign(params.size(), 0.0);
  std::size_t count = 0, clipped = 0, terms = 0;
  for (const SampleGroup& g : groups) count += g.samples.size();
  if (count == 0) return out;
  const double norm = 1.0 / static_cast<double>(count);
  std::vector<double> w;
  for (const SampleGroup& g : groups) {
    for (const GroupSample& s : g.samples) {
      const PathForward f = forward_path(params, g.ctx, s.path);
      w.assign(f.actions.size(), 0.0);
      const double a = s.advantage;
      if (!cfg.per_token_ratio) {
        const double rho = std::exp(f.log_prob - s.old_log_prob);
        out.objective += clipped_term(rho, a, cfg.clip_low, cfg.clip_high) * norm;
        out.mean_ratio += rho * norm;
        const double slope = clipped_term_slope(rho, a, cfg.clip_low, cfg.clip_high);
        if (slope == 0.0 && a != 0.0) ++clipped;
        ++terms;
        std::fill(w.begin(), w.end(), slope * norm);
      } else {
        if (s.old_step_log_probs.size() != f.actions.size())
          throw std::invalid_argument("surrogate: stored step log-probs do not match the path");
        const double t_norm = norm / static_cast<double>(f.actions.size());
        double mean_rho = 0.0;
        for (std::size_t t = 0; t < f.actions.size(); ++t) {
          const double rho = std::exp(f.step_log_probs[t] - s.old_step_log_probs[t]);
          mean_rho += rho;
          out.objective += clipped_term(rho, a, cfg.clip_low, cfg.clip_high) * t_norm;
          const double slope = clipped_term_slope(rho, a, cfg.clip_low, cfg.clip_high);
          if (slope == 0.0 && a != 0.0) ++clipped;
          ++terms;
          w[t] = slope * t_norm;
        }
        out.mean_ratio += mean_rho / static_cast<double>(f.actions.size()) * norm;
      }
      if (reference != nullptr && cfg.kl_coef > 0.0) {
        // Score-function estimate of the gradient of KL(mu_theta || mu_ref).
        const double log_ratio = f.log_prob - path_log_prob(*reference, g.ctx, s.path);
        out.objective -= cfg.kl_coef * log_ratio * norm;
        for (double& x : w) x -= cfg.kl_coef * log_ratio * norm;
      }
      accumulate_gradient(params, g.ctx, f, w, out.grad);
    }
  }
  out.clip_fraction = terms == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(terms);
  return out;
}

namespace {

void fill_reward_stats(TrainStepRecord& rec, std::span<const SampleGroup> groups, int target_len) {
  std::vector<double> adv;
  double n = 0.0;
  for (const SampleGroup& g : groups)
    for (const GroupSample& s : g.samples) {
      rec.e_p += s.reward.e_p;
      rec.s_zpd += s.reward.s_zpd;
      rec.r_len += s.reward.r_len;
      rec.d_div += s.reward.d_div;
      rec.len_score += len_score(s.path.size(), target_len > 0 ? target_len : g.ctx.target_len);
      rec.div_path += div_path(s.path);
      adv.push_back(s.advantage);
      n += 1.0;
    }
  if (n == 0.0) return;
  rec.e_p /= n;
  rec.s_zpd /= n;
  rec.r_len /= n;
  rec.d_div /= n;
  rec.len_score /= n;
  rec.div_path /= n;
  mean_std(adv, rec.adv_mean, rec.adv_std);
  rec.adv_min = *std::min_element(adv.begin(), adv.end());
  rec.adv_max = *std::max_element(adv.begin(), adv.end());
}

TrainStepRecord update_on_groups(PolicyParams& params, std::span<const SampleGroup> groups,
                                 const GrpoConfig& cfg, Optimizer& opt, double lr,
                                 const PolicyParams* reference) {
  TrainStepRecord rec;
  rec.lr = lr;
  fill_reward_stats(rec, groups, 0);
  SurrogateResult sr = surrogate_gradient(params, groups, cfg, reference);
  rec.loss = -sr.objective;
  rec.clip_fraction = sr.clip_fraction;
  for (double& g : sr.grad) g = -g;
  opt.step(params.theta, sr.grad, lr);
  if (!params.all_finite()) throw std::runtime_error("ib_grpo: parameters diverged");
  return rec;
}

}  // namespace

TrainStepRecord ib_grpo_step(PolicyParams& params, const PolicyParams& params_old,
                             std::span<const TrainPrompt> prompts, const GrpoConfig& cfg,
                             const Environment& env, const RewardContext& rewards, int epoch,
                             Optimizer& opt, double lr) {
  const std::vector<SampleGroup> groups = sample_groups(params_old, prompts, cfg, env, rewards, epoch);
  TrainStepRecord rec = update_on_groups(params, groups, cfg, opt, lr, nullptr);
  rec.epoch = epoch;
  return rec;
}

TrainResult train_loop(const PolicyParams& init, std::span<const TrainPrompt> prompts,
                       const GrpoConfig& cfg, const Environment& env,
                       const RewardContext& rewards, const EvalHook& eval_hook) {
  cfg.validate();
  TrainResult out{init, {}};
  if (cfg.epochs == 0) return out;
  if (prompts.empty()) throw std::invalid_argument("train_loop: no training prompts");
  const PolicyParams reference = init;
  Optimizer opt(cfg.optimizer, init.size());
  std::vector<std::size_t> order(prompts.size());
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<TrainPrompt> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i)
        batch.push_back(prompts[order[i]]);
      const PolicyParams snapshot = out.params;
      const std::vector<SampleGroup> groups =
          sample_groups(snapshot, batch, cfg, env, rewards, epoch);
      for (int u = 0; u < cfg.updates_per_batch; ++u) {
        const double lr = warmup_lr(cfg.learning_rate, step, cfg.warmup_steps);
        TrainStepRecord rec = update_on_groups(out.params, groups, cfg, opt, lr,
                                               cfg.kl_coef > 0.0 ? &reference : nullptr);
        rec.step = static_cast<int>(step);
        rec.epoch = epoch;
        out.report.steps.push_back(rec);
        ++step;
      }
    }
    if (eval_hook) out.report.evals.push_back({static_cast<int>(step), eval_hook(epoch, out.params)});
  }
  return out;
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "step,epoch,lr,loss,e_p,s_zpd,r_len,d_div,len_score,div_path,adv_mean,adv_std,adv_min,"
         "adv_max,clip_fraction\n";
  char buf[512];
  for (const TrainStepRecord& r : steps) {
    std::snprintf(buf, sizeof buf,
                  "%d,%d,%.6e,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.step,
                  r.epoch, r.lr, r.loss, r.e_p, r.s_zpd, r.r_len, r.d_div, r.len_score, r.div_path,
                  r.adv_mean, r.adv_std, r.adv_min, r.adv_max, r.clip_fraction);
    out << buf;
  }
}

nlohmann::json TrainReport::summary() const {
  nlohmann::json j;
  j["num_steps"] = steps.size();
  if (!steps.empty()) {
    const TrainStepRecord& first = steps.front();
    const TrainStepRecord& last = steps.back();
    j["first"] = {{"e_p", first.e_p}, {"s_zpd", first.s_zpd}, {"r_len", first.r_len},
                  {"d_div", first.d_div}};
    j["last"] = {{"e_p", last.e_p}, {"s_zpd", last.s_zpd}, {"r_len", last.r_len},
                 {"d_div", last.d_div}};
    double clip = 0.0;
    for (const TrainStepRecord& r : steps) clip += r.clip_fraction;
    j["mean_clip_fraction"] = clip / static_cast<double>(steps.size());
  }
  nlohmann::json ev = nlohmann::json::array();
  for (const EvalPoint& e : evals) ev.push_back({{"step", e.step}, {"e_p", e.e_p}});
  j["evals"] = ev;
  return j;
}

// ---------------------------------------------------------------------------

PathGenerator greedy_policy(const PolicyParams& params) {
  return [params](const StudentEntry& s, int target_len) {
    return greedy_decode(params, PromptContext::from_student(s.state, target_len)).path;
  };
}

PathGenerator sampled_policy(const PolicyParams& params, std::uint64_t seed) {
  return [params, seed](const StudentEntry& s, int target_len) {
    Rng rng(derive_seed(seed, {seed_tag::kSample, static_cast<std::uint64_t>(s.id),
                               static_cast<std::uint64_t>(target_len)}));
    return sample_path(params, PromptContext::from_student(s.state, target_len), rng).path;
  };
}

PathGenerator random_policy(int num_concepts, std::uint64_t seed) {
  if (num_concepts < 1) throw std::invalid_argument("random_policy: no concepts");
  return [num_concepts, seed](const StudentEntry& s, int target_len) {
    Rng rng(derive_seed(seed, {seed_tag::kRandomPolicy, static_cast<std::uint64_t>(s.id),
                               static_cast<std::uint64_t>(target_len)}));
    std::vector<int> path(static_cast<std::size_t>(target_len));
    for (int& c : path) c = rng.index(num_concepts);
    return path;
  };
}

PathGenerator nearest_zpd_policy(const RewardContext& rewards) {
  return [rewards](const StudentEntry& s, int target_len) {
    const double z = rewards.zpd.center(s.state.proficiency);
    int best = 0;
    for (std::size_t c = 1; c < rewards.difficulty.size(); ++c)
      if (std::abs(rewards.difficulty[c] - z) <
          std::abs(rewards.difficulty[static_cast<std::size_t>(best)] - z))
        best = static_cast<int>(c);
    return std::vector<int>(static_cast<std::size_t>(target_len), best);
  };
}

PathGenerator replay_policy(std::map<int, std::vector<int>> paths) {
  return [paths = std::move(paths)](const StudentEntry& s, int) {
    auto it = paths.find(s.id);
    if (it == paths.end())
      throw std::invalid_argument("replay_policy: no stored path for student " + std::to_string(s.id));
    return it->second;
  };
}

EvalResult evaluate_policy(const PathGenerator& policy, const std::string& tag,
                           std::span<const StudentEntry> students, const Environment& env,
                           int target_len, const RewardContext& rewards, std::uint64_t seed) {
  if (students.empty()) throw std::invalid_argument("evaluate_policy: no students");
  EvalResult out;
  std::vector<double> ep, zpd, ls, dp;
  double length = 0.0;
  for (const StudentEntry& s : students) {
    EvalRow row;
    row.student = s.id;
    row.path = policy(s, target_len);
    const std::uint64_t rs = derive_seed(seed, {seed_tag::kEval, static_cast<std::uint64_t>(s.id)});
    row.e_p = run_path(s.state, row.path, env.catalog, env.sim, rs).e_p;
    row.s_zpd = score_zpd(row.path, rewards.difficulty, s.state.proficiency, rewards.zpd);
    row.len_score = len_score(row.path.size(), target_len);
    row.div_path = div_path(row.path);
    ep.push_back(row.e_p);
    zpd.push_back(row.s_zpd);
    ls.push_back(row.len_score);
    dp.push_back(row.div_path);
    length += static_cast<double>(row.path.size());
    out.rows.push_back(std::move(row));
  }
  MetricSummary& m = out.summary;
  m.policy = tag;
  m.target_len = target_len;
  m.n = static_cast<int>(students.size());
  mean_std(ep, m.e_p_mean, m.e_p_std);
  mean_std(zpd, m.s_zpd_mean, m.s_zpd_std);
  mean_std(ls, m.len_score_mean, m.len_score_std);
  mean_std(dp, m.div_path_mean, m.div_path_std);
  m.length_mean = length / static_cast<double>(students.size());
  return out;
}

}  // namespace ibgrpo

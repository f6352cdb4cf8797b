#include "ibgrpo/policy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ibgrpo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void fill_input(const PromptContext& ctx, std::span<const int> prefix, int num_concepts,
                std::vector<double>& x) {
  const auto n = static_cast<std::size_t>(num_concepts);
  const int step = static_cast<int>(prefix.size());
  x.assign(3 * n + 3, 0.0);
  std::copy(ctx.mastery.begin(), ctx.mastery.end(), x.begin());
  x[n] = ctx.proficiency;
  x[n + 1] = static_cast<double>(step) / ctx.max_len();
  x[n + 2] = static_cast<double>(ctx.target_len - step) / ctx.target_len;
  if (!prefix.empty()) x[n + 3 + static_cast<std::size_t>(prefix.back())] = 1.0;
  for (int c : prefix) x[2 * n + 3 + static_cast<std::size_t>(c)] = 1.0;
}

// One decoder step: hidden activations and masked logits.
void eval_step(const PolicyParams& p, const PromptContext& ctx, std::span<const int> prefix,
               std::vector<double>& x, std::vector<double>& h, std::vector<double>& logits) {
  fill_input(ctx, prefix, p.num_concepts(), x);
  const auto in = static_cast<std::size_t>(p.input_dim());
  const auto hid = static_cast<std::size_t>(p.hidden());
  const auto na = static_cast<std::size_t>(p.num_actions());
  const double* w1 = p.theta.data() + p.w1_offset();
  const double* b1 = p.theta.data() + p.b1_offset();
  const double* w2 = p.theta.data() + p.w2_offset();
  const double* b2 = p.theta.data() + p.b2_offset();
  h.resize(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    double s = b1[i];
    const double* row = w1 + i * in;
    for (std::size_t j = 0; j < in; ++j) s += row[j] * x[j];
    h[i] = std::tanh(s);
  }
  logits.resize(na);
  for (std::size_t a = 0; a < na; ++a) {
    double s = b2[a];
    const double* row = w2 + a * hid;
    for (std::size_t i = 0; i < hid; ++i) s += row[i] * h[i];
    logits[a] = s;
  }
  if (prefix.empty()) logits[static_cast<std::size_t>(p.end_action())] = kNegInf;
}

// Softmax of logits / temperature; returns log-normalizer of the scaled logits.
double softmax(const std::vector<double>& logits, double temperature, std::vector<double>& probs) {
  double mx = kNegInf;
  for (double l : logits) mx = std::max(mx, l / temperature);
  double z = 0.0;
  probs.resize(logits.size());
  for (std::size_t a = 0; a < logits.size(); ++a) {
    probs[a] = std::exp(logits[a] / temperature - mx);
    z += probs[a];
  }
  for (double& q : probs) q /= z;
  return mx + std::log(z);
}

void check_context(const PolicyParams& p, const PromptContext& ctx) {
  if (static_cast<int>(ctx.mastery.size()) != p.num_concepts())
    throw std::invalid_argument("policy: context mastery size does not match the policy");
  if (ctx.target_len < 1) throw std::invalid_argument("policy: target_len must be >= 1");
}

void check_path(const PolicyParams& p, const PromptContext& ctx, std::span<const int> path) {
  if (path.empty()) throw std::invalid_argument("policy: empty path is not admissible");
  if (static_cast<int>(path.size()) > ctx.max_len())
    throw std::invalid_argument("policy: path longer than L_max");
  for (int c : path)
    if (c < 0 || c >= p.num_concepts())
      throw std::invalid_argument("policy: invalid concept id " + std::to_string(c));
}

}  // namespace

PromptContext PromptContext::from_student(const StudentState& s, int target_len) {
  return {s.mastery, s.proficiency, target_len};
}

PolicyParams::PolicyParams(int num_concepts, int hidden)
    : num_concepts_(num_concepts), hidden_(hidden) {
  if (num_concepts < 1 || hidden < 1) throw std::invalid_argument("PolicyParams: invalid shape");
  theta.assign(b2_offset() + static_cast<std::size_t>(num_actions()), 0.0);
}

PolicyParams PolicyParams::init_uniform(int num_concepts, int hidden, double scale,
                                        std::uint64_t seed) {
  PolicyParams p(num_concepts, hidden);
  Rng rng(derive_seed(seed, {seed_tag::kInit}));
  for (std::size_t i = p.w1_offset(); i < p.b1_offset(); ++i) p.theta[i] = rng.uniform(-scale, scale);
  for (std::size_t i = p.w2_offset(); i < p.b2_offset(); ++i) p.theta[i] = rng.uniform(-scale, scale);
  return p;
}

bool PolicyParams::all_finite() const {
  return std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); });
}

nlohmann::json PolicyParams::to_json() const {
  return {{"format", "ibgrpo-policy"},
          {"layout_version", kLayoutVersion},
          {"num_concepts", num_concepts_},
          {"hidden", hidden_},
          {"input_dim", input_dim()},
          {"theta", theta}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "ibgrpo-policy")
    throw std::invalid_argument("not a policy checkpoint");
  if (j.at("layout_version").get<int>() != kLayoutVersion)
    throw std::invalid_argument("unsupported policy layout version");
  PolicyParams p(j.at("num_concepts").get<int>(), j.at("hidden").get<int>());
  if (j.at("input_dim").get<int>() != p.input_dim())
    throw std::invalid_argument("policy checkpoint: input_dim mismatch");
  auto theta = j.at("theta").get<std::vector<double>>();
  if (theta.size() != p.theta.size()) throw std::invalid_argument("policy checkpoint: size mismatch");
  p.theta = std::move(theta);
  return p;
}

void PolicyParams::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return from_json(nlohmann::json::parse(in));
}

std::vector<double> step_logits(const PolicyParams& params, const PromptContext& ctx,
                                std::span<const int> prefix) {
  check_context(params, ctx);
  if (static_cast<int>(prefix.size()) >= ctx.max_len())
    throw std::invalid_argument("step_logits: prefix already at L_max");
  std::vector<double> x, h, logits;
  eval_step(params, ctx, prefix, x, h, logits);
  return logits;
}

PathSample sample_path(const PolicyParams& params, const PromptContext& ctx, Rng& rng,
                       double temperature) {
  check_context(params, ctx);
  PathSample out;
  std::vector<double> x, h, logits, probs, model_probs;
  const int end = params.end_action();
  for (int t = 0; t < ctx.max_len(); ++t) {
    eval_step(params, ctx, out.path, x, h, logits);
    const double lse = softmax(logits, 1.0, model_probs);
    const std::vector<double>* dist = &model_probs;
    if (temperature != 1.0) {
      softmax(logits, temperature, probs);
      dist = &probs;
    }
    const int a = rng.categorical(*dist);
    const double lp = logits[static_cast<std::size_t>(a)] - lse;
    out.step_log_probs.push_back(lp);
    out.log_prob += lp;
    if (a == end) break;
    out.path.push_back(a);
  }
  return out;
}

std::vector<PathSample> sample_group(const PolicyParams& params, const PromptContext& ctx, int k,
                                     std::uint64_t seed, double temperature) {
  if (k < 1) throw std::invalid_argument("sample_group: K must be >= 1");
  std::vector<PathSample> group;
  group.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const std::uint64_t s = derive_seed(seed, {seed_tag::kSample, static_cast<std::uint64_t>(i)});
    Rng rng(s);
    PathSample ps = sample_path(params, ctx, rng, temperature);
    ps.seed = s;
    group.push_back(std::move(ps));
  }
  return group;
}

PathSample greedy_decode(const PolicyParams& params, const PromptContext& ctx) {
  check_context(params, ctx);
  PathSample out;
  std::vector<double> x, h, logits, probs;
  for (int t = 0; t < ctx.max_len(); ++t) {
    eval_step(params, ctx, out.path, x, h, logits);
    const double lse = softmax(logits, 1.0, probs);
    const int a = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const double lp = logits[static_cast<std::size_t>(a)] - lse;
    out.step_log_probs.push_back(lp);
    out.log_prob += lp;
    if (a == params.end_action()) break;
    out.path.push_back(a);
  }
  return out;
}

PathForward forward_path(const PolicyParams& params, const PromptContext& ctx,
                         std::span<const int> path) {
  check_context(params, ctx);
  check_path(params, ctx, path);
  PathForward f;
  const int len = static_cast<int>(path.size());
  const int scored = len < ctx.max_len() ? len + 1 : len;
  std::vector<double> x, logits;
  for (int t = 0; t < scored; ++t) {
    const int a = t < len ? path[static_cast<std::size_t>(t)] : params.end_action();
    std::vector<double> h, probs;
    eval_step(params, ctx, path.first(static_cast<std::size_t>(t)), x, h, logits);
    const double lse = softmax(logits, 1.0, probs);
    const double lp = logits[static_cast<std::size_t>(a)] - lse;
    f.actions.push_back(a);
    f.hidden.push_back(std::move(h));
    f.probs.push_back(std::move(probs));
    f.step_log_probs.push_back(lp);
    f.log_prob += lp;
  }
  return f;
}

void accumulate_gradient(const PolicyParams& params, const PromptContext& ctx,
                         const PathForward& fwd, std::span<const double> weights,
                         std::span<double> grad) {
  if (weights.size() != fwd.actions.size())
    throw std::invalid_argument("accumulate_gradient: one weight per scored step required");
  if (grad.size() != params.size()) throw std::invalid_argument("accumulate_gradient: grad size");
  const auto in = static_cast<std::size_t>(params.input_dim());
  const auto hid = static_cast<std::size_t>(params.hidden());
  const auto na = static_cast<std::size_t>(params.num_actions());
  const double* w2 = params.theta.data() + params.w2_offset();
  double* gw1 = grad.data() + params.w1_offset();
  double* gb1 = grad.data() + params.b1_offset();
  double* gw2 = grad.data() + params.w2_offset();
  double* gb2 = grad.data() + params.b2_offset();
  std::vector<double> x, delta(na), dpre(hid);
  for (std::size_t t = 0; t < fwd.actions.size(); ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const std::vector<double>& h = fwd.hidden[t];
    const std::vector<double>& p = fwd.probs[t];
    // d log softmax_a / d logits = onehot(a) - p; masked entries have p = 0.
    for (std::size_t a = 0; a < na; ++a) delta[a] = -p[a] * w;
    delta[static_cast<std::size_t>(fwd.actions[t])] += w;
    std::fill(dpre.begin(), dpre.end(), 0.0);
    for (std::size_t a = 0; a < na; ++a) {
      if (delta[a] == 0.0) continue;
      gb2[a] += delta[a];
      double* grow = gw2 + a * hid;
      const double* wrow = w2 + a * hid;
      for (std::size_t i = 0; i < hid; ++i) {
        grow[i] += delta[a] * h[i];
        dpre[i] += delta[a] * wrow[i];
      }
    }
    fill_input(ctx, std::span<const int>(fwd.actions).first(t), params.num_concepts(), x);
    for (std::size_t i = 0; i < hid; ++i) {
      const double d = dpre[i] * (1.0 - h[i] * h[i]);
      gb1[i] += d;
      double* grow = gw1 + i * in;
      for (std::size_t j = 0; j < in; ++j)
        if (x[j] != 0.0) grow[j] += d * x[j];
    }
  }
}

double path_log_prob(const PolicyParams& params, const PromptContext& ctx,
                     std::span<const int> path) {
  return forward_path(params, ctx, path).log_prob;
}

std::vector<double> grad_log_prob(const PolicyParams& params, const PromptContext& ctx,
                                  std::span<const int> path) {
  const PathForward f = forward_path(params, ctx, path);
  std::vector<double> grad(params.size(), 0.0);
  const std::vector<double> ones(f.actions.size(), 1.0);
  accumulate_gradient(params, ctx, f, ones, grad);
  return grad;
}

}  // namespace ibgrpo

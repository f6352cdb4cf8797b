#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ibgrpo/config.hpp"
#include "ibgrpo/harness.hpp"

using namespace ibgrpo;

namespace {

std::vector<double> parse_weights(const std::string& s) {
  std::vector<double> w;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      w.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--weights: not a number: '" + item + "'");
    }
  }
  return w;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IB-GRPO learning-path recommendation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out, advantage, mask, weights, checkpoint;
  std::uint64_t seed = 0;
  bool force = false, from_scratch = false;
  int student = -1;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "experiment config (JSON)")->required();
    c->add_option("--seed", seed, "override the master seed");
    c->add_option("--out", out, "output root (default: $IBGRPO_OUT, then output_dir)");
    c->add_option("--advantage", advantage, "indicator | weighted_sum | hv_contribution");
    c->add_option("--reward-mask", mask, "objectives hidden from training, e.g. zpd or zpd,div");
    c->add_option("--weights", weights, "weighted_sum weights, e.g. 1,0,0,0");
    c->add_flag("--force", force, "overwrite existing outputs");
  };
  CLI::App* synth = app.add_subcommand("synth", "build demonstration pools and the ZPD reference");
  CLI::App* sft = app.add_subcommand("sft", "supervised fine-tuning on the demonstrations");
  CLI::App* train = app.add_subcommand("train", "IB-GRPO training");
  CLI::App* eval = app.add_subcommand("eval", "held-out evaluation tables");
  CLI::App* trace = app.add_subcommand("trace", "per-step difficulty trace for one student");
  for (CLI::App* c : {synth, sft, train, eval, trace}) add_common(c);
  for (CLI::App* c : {train, eval, trace}) c->add_flag("--from-scratch", from_scratch, "start from a fresh policy");
  for (CLI::App* c : {eval, trace}) c->add_option("--checkpoint", checkpoint, "policy checkpoint");
  trace->add_option("--student", student, "evaluation-split student id")->required();

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg;
  CommandOptions opt;
  try {
    cfg = ExperimentConfig::load(config_path);
    for (CLI::App* c : {synth, sft, train, eval, trace})
      if (c->parsed() && c->count("--seed")) cfg.seed = seed;
    if (!advantage.empty()) cfg.grpo.advantage = parse_advantage(advantage);
    if (!mask.empty()) cfg.grpo.mask = RewardMask::from_list(mask);
    if (!weights.empty()) cfg.grpo.weights = parse_weights(weights);
    cfg.validate();
    opt.out_root = resolve_out_root(cfg, out);
    opt.force = force;
    opt.from_scratch = from_scratch;
    opt.checkpoint = checkpoint;
    opt.student = student;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      for (const auto& p : cmd_synth(cfg, opt))
        std::printf("%-6s n=%d mean_e_p=%s diversity=%s\n", p.source.c_str(), p.n, fmt6(p.mean_e_p).c_str(),
                    fmt6(p.diversity).c_str());
    } else if (sft->parsed()) {
      const SftReport r = cmd_sft(cfg, opt);
      std::printf("nll %s -> %s\n", fmt6(r.initial_nll).c_str(), fmt6(r.final_nll.empty() ? r.initial_nll : r.final_nll.back()).c_str());
    } else if (train->parsed()) {
      const TrainReport r = cmd_train(cfg, opt);
      std::printf("%s: %zu steps\n", run_name(cfg, from_scratch).c_str(), r.steps.size());
      for (const auto& e : r.evals) std::printf("  step %d held-out e_p %s\n", e.step, fmt6(e.e_p).c_str());
    } else if (eval->parsed()) {
      for (const auto& m : cmd_eval(cfg, opt))
        std::printf("L=%-2d %-8s e_p=%s s_zpd=%s len_score=%s div_path=%s\n", m.target_len, m.policy.c_str(),
                    fmt6(m.e_p_mean).c_str(), fmt6(m.s_zpd_mean).c_str(), fmt6(m.len_score_mean).c_str(),
                    fmt6(m.div_path_mean).c_str());
    } else if (trace->parsed()) {
      std::printf("%s\n", cmd_trace(cfg, opt).string().c_str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

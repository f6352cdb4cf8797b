#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibgrpo/config.hpp"
#include "ibgrpo/expert_gen.hpp"
#include "ibgrpo/rewards.hpp"
#include "ibgrpo/sim_env.hpp"
#include "ibgrpo/trainers.hpp"

namespace ibgrpo {

// Output layout under the output root:
//
//   synth/   config.json split.json teacher.json difficulty.json
//            zpd_corpus.jsonl zpd_reference.json
//            demos_{rand,ga,rl,ga_rl}.jsonl pareto_scatter.csv pools_summary.csv
//   sft/     policy.json nll_curve.csv
//   train/<run>/  policy.json train_report.csv train_summary.json
//   eval/<run>/   metrics_L{5,10,20}.csv paths_L{5,10,20}.csv pareto_scatter.csv
//   trace/<run>/  student_<id>.csv
//
// <run> is run_name(config, from_scratch).

// Raised when held-out students also appear in training data.
class SplitOverlapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StudentSplit {
  std::vector<StudentEntry> train;
  std::vector<StudentEntry> eval;
};

Environment make_environment(const ExperimentConfig& cfg);
// Student i is init_student(..., derive_seed(seed, {kStudent, i})).
std::vector<StudentEntry> make_students(const ExperimentConfig& cfg, const Environment& env);
// Seeded shuffle by id; the first round(n * eval_fraction) ids are held out.
StudentSplit split_students(std::vector<StudentEntry> students, double eval_fraction,
                            std::uint64_t seed);
void check_disjoint(const std::vector<int>& train_ids, const std::vector<int>& eval_ids);

std::string run_name(const ExperimentConfig& cfg, bool from_scratch = false);

struct CommandOptions {
  std::filesystem::path out_root;
  bool force = false;
  bool from_scratch = false;
  std::string checkpoint;  // cmd_eval / cmd_trace; default is the run's policy.json
  int student = -1;        // cmd_trace
};

// Output root: --out, then IBGRPO_OUT, then config output_dir.
std::filesystem::path resolve_out_root(const ExperimentConfig& cfg, const std::string& cli_out);

struct PoolSummary {
  std::string source;
  int n = 0;
  double mean_e_p = 0.0;
  double diversity = 0.0;
};

std::vector<PoolSummary> cmd_synth(const ExperimentConfig& cfg, const CommandOptions& opt);
SftReport cmd_sft(const ExperimentConfig& cfg, const CommandOptions& opt);
TrainReport cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt);
// One summary per (length, policy), lengths in config order, policies trained/sft/random.
std::vector<MetricSummary> cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt);
// Returns the trace file path.
std::filesystem::path cmd_trace(const ExperimentConfig& cfg, const CommandOptions& opt);

// Pieces of the synth outputs that later commands read back.
struct SynthArtifacts {
  Environment env;
  StudentSplit split;
  RewardContext rewards;  // length target unset
};

SynthArtifacts load_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_root);

// Min-max scales each column to [0, 1] across rows, for plotting methods on
// shared axes. Constant columns map to 0.
std::vector<std::vector<double>> normalize_columns(const std::vector<std::vector<double>>& rows);

// Fixed 6-decimal formatting used in every CSV.
std::string fmt6(double v);

}  // namespace ibgrpo

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnq/dp_oracle.hpp"
#include "stnq/env_sampling.hpp"
#include "stnq/policy_nets.hpp"
#include "stnq/ppo.hpp"

namespace stnq {

// Harness for the two studies (per-environment training comparison and
// zero-shot generalization) plus the DP demonstration. Everything funnels
// into CSV files so repeated runs with the same config are byte-identical.

enum class StudyKind { SingleEnv, Generalization, DpDemo };

std::string to_string(StudyKind kind);
StudyKind study_from_string(const std::string& s);

// Study-default first-layer init scale for the STN. Raw queue lengths reach
// the hundreds during early training while the other coordinates stay O(1);
// without a scale hint on q the first ReLU-N layer starts saturated on every
// crowded queue, which both erases the logit ordering and zeroes the
// gradient. The multi-path encodings lead with -q, which saturates at the
// harmless end (empty queues), so they keep the all-ones default.
Vector default_input_scale(EncodingScheme enc);
// StnConfig{} with input_scale = default_input_scale(enc).
StnConfig default_stn_config(EncodingScheme enc);

struct ExperimentConfig {
  StudyKind study = StudyKind::SingleEnv;
  EnvKind env_kind = EnvKind::SingleHop;
  int num_envs = 5;
  // Generalization: the first train_split envs of the set are the training
  // split; the rest are held out. The single-env study trains on every env
  // individually (train_split is ignored and reported as num_envs).
  int train_split = 5;
  std::uint64_t master_seed = 1;
  CheckConfig check;

  EncodingScheme encoding = EncodingScheme::SingleHopFull;
  StnConfig stn = default_stn_config(EncodingScheme::SingleHopFull);
  MlpConfig mlp;
  // Per-architecture learning rates; studies collect episodically (reset each batch).
  PpoConfig ppo_stn = {.learning_rate = 3e-3, .episodic_resets = true};
  PpoConfig ppo_mlp = {.learning_rate = 3e-4, .episodic_resets = true};
  long long train_steps_per_env = 1000000;

  int eval_num_traj = 3;
  long long eval_traj_len = 50000;
  std::uint64_t eval_seed = 0;  // 0: derived from master_seed

  double outlier_threshold = 5.0;
  double histogram_bin_width = 0.25;
  std::string output_dir = "out";
  int jobs = 1;

  // DP demonstration knobs.
  DpSpec dp_spec = DpSpec::symmetric_default();
  int dp_region_bound = 20;
  std::vector<int> dp_schedule = default_dp_schedule();

  void validate() const;
  std::uint64_t effective_eval_seed() const;
};

std::string serialize_experiment_config(const ExperimentConfig& cfg);
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

// Deterministic stream derivation shared by the studies and the CLI: each
// (architecture, env slot) pair owns a parameter-init stream, each env slot
// one rollout stream reused by both architectures. Joint training is slot 0.
// arch is "stn" or "mlp".
std::uint64_t policy_init_seed(std::uint64_t master_seed, const std::string& arch, int env_slot);
std::uint64_t rollout_seed(std::uint64_t master_seed, int env_slot);

// One evaluated (environment, policy) pair: J averaged over eval_num_traj
// argmax trajectories; J0 = J / J_baseline. An overflowing trajectory
// contributes the queue-cap cost so means stay finite.
struct EvalRecord {
  int env_id = 0;
  std::string policy;
  double j = 0.0;
  double j0 = 0.0;
  bool in_train_split = false;
  bool overflowed = false;
  bool diverged = false;  // training diverged before this policy was frozen
};

std::string eval_records_to_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> eval_records_from_csv(const std::string& csv);

// Argmax evaluation. Trajectory t of env e uses the stream
// mix_seed(mix_seed(eval_seed, e), t), so every architecture sees identical
// arrivals and capacities.
EvalRecord evaluate_policy_on_env(PolicyNet& policy, const EnvParams& params,
                                  double baseline_cost, int env_id, bool in_train_split,
                                  int num_traj, long long traj_len, std::uint64_t eval_seed);

// Same protocol for the env kind's baseline rule; sanity-checks normalization
// (J0 of the baseline on its own env stays near 1).
EvalRecord evaluate_baseline_on_env(const EnvParams& params, double baseline_cost,
                                    int env_id, bool in_train_split, int num_traj,
                                    long long traj_len, std::uint64_t eval_seed);

struct SummaryRow {
  std::string policy;
  std::string split;  // train | test | all
  int count = 0;
  double mean_j0 = 0.0;
  double std_j0 = 0.0;
  // Outlier-rejected statistics: records with J0 > threshold omitted.
  double rejected_mean_j0 = 0.0;
  double rejected_std_j0 = 0.0;
  int omitted = 0;
};

// Per (policy, split) means/stds plus outlier-rejected variants; splits with
// no records are skipped, and an "all" row per policy aggregates both splits.
// Throws if records is empty.
std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records,
                                  double outlier_threshold);
std::string summary_to_csv(const std::vector<SummaryRow>& rows);

// Fixed-width J0 bins up to the outlier threshold plus one open-ended bin
// above it (the axis-break convention), per policy over all records.
std::string histogram_to_csv(const std::vector<EvalRecord>& records,
                             double outlier_threshold, double bin_width);

// A training log annotated for curve emission: log env indices map to the
// study-level env ids and baseline costs they trained on.
struct CurveSeries {
  std::string policy;
  std::vector<TrainLogRow> log;
  std::vector<int> env_ids;
  std::vector<double> baselines;
};

// ln(moving_avg_cost / J_baseline) training curves, one row per logged batch.
std::string curves_to_csv(const std::vector<CurveSeries>& series);

struct StudyOutput {
  EnvSet envs;
  std::vector<EvalRecord> records;
  std::vector<std::string> files_written;
};

// Trains STN and MLP policies per environment, evaluates them with argmax
// rollouts, and writes envs.csv, train_log_{stn,mlp}.csv, curves.csv,
// eval_records.csv and summary.csv into cfg.output_dir.
StudyOutput run_single_env_study(const ExperimentConfig& cfg);

// Trains one policy per architecture on the training split simultaneously,
// evaluates on every env, and writes envs.csv, train_log_{stn,mlp}.csv,
// eval_records.csv, summary.csv and histogram.csv.
StudyOutput run_generalization_study(const ExperimentConfig& cfg);

// Runs the approximate-MDP sequence on cfg.dp_spec and writes one
// regions_y<y1><y2>.csv per capacity slice plus dp_report.txt.
StudyOutput run_dp_demo(const ExperimentConfig& cfg);

}  // namespace stnq

#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "stnq/env.hpp"
#include "stnq/matrix.hpp"
#include "stnq/policy_nets.hpp"

namespace stnq {

// Core hyperparameters plus the standard-default knobs the runs record.
struct PpoConfig {
  double learning_rate = 3e-4;
  int batch_size = 2000;  // steps collected per environment per update
  int minibatch_size = 100;
  int epochs_per_batch = 3;
  double gae_lambda = 0.95;
  double clip_eps = 0.1;
  double entropy_coef = 0.01;
  double gamma = 0.99;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  long long total_steps = 1000000;  // across all environments
  int moving_avg_window = 5000;
  // Restart every env from the empty state before each batch (T_eps-style
  // episodic collection). The value bootstrap still closes each segment, so
  // this truncates trajectories rather than marking terminals.
  bool episodic_resets = false;
  std::uint64_t seed = 0;

  void validate(int num_envs) const;
};

// Env-major rollout storage: row e*steps_per_env + t holds step t of env e,
// so per-env segments are contiguous for GAE.
struct RolloutBatch {
  int num_envs = 0;
  int steps_per_env = 0;
  Matrix obs;  // size() x (K*n)
  std::vector<int> actions;
  Vector log_probs_old;
  Vector costs;
  Vector values_old;
  std::vector<unsigned char> dones;  // continuing task: all zero
  std::vector<int> env_ids;
  Vector bootstrap_values;  // per env, V of the state after the last step
  bool overflowed = false;

  int size() const { return num_envs * steps_per_env; }
};

// Environments persist their state and rng across calls; jobs > 1 fans the
// per-env loops over threads (disjoint row ranges, so results are identical
// to the serial order).
RolloutBatch collect_rollout(std::vector<QueueEnv>& envs, PolicyNet& policy,
                             Critic& critic, int steps_per_env, int jobs = 1);

struct GaeResult {
  Vector advantages;
  Vector value_targets;
};

// A_t = sum_l (gamma*lambda)^l delta_{t+l} per env segment, with the
// critic bootstrap closing the final step; reward = -cost.
GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda);

// Exact mean 0 / population std 1 (no-op on degenerate or single-element input).
void normalize_advantages(Vector& adv);

struct Minibatch {
  Matrix obs;
  std::vector<int> actions;
  Vector log_probs_old;
  Vector advantages;
  Vector value_targets;
};

Minibatch gather_minibatch(const RolloutBatch& batch, const GaeResult& gae,
                           const std::vector<int>& indices);

struct PpoDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

// Computes the clipped-surrogate loss and, when accumulate_grads, backprops
// it into the policy and critic gradient buffers. Throws std::runtime_error
// on a non-finite loss.
PpoDiagnostics ppo_loss_and_grad(PolicyNet& policy, Critic& critic,
                                 const Minibatch& mb, const PpoConfig& cfg,
                                 bool accumulate_grads = true);

struct TrainLogRow {
  long long step = 0;  // per-env steps consumed so far
  int env_id = 0;
  double moving_avg_cost = 0.0;
  double loss = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  double learning_rate = 0.0;
};

struct TrainOutcome {
  std::vector<TrainLogRow> log;
  bool diverged = false;
  bool overflowed = false;
  long long steps_per_env = 0;
};

// Alternates rollout collection and minibatch updates until total_steps are
// consumed. Divergence (non-finite loss or parameters) restores the last
// good parameters and halts. Deterministic in cfg.seed for any jobs value.
TrainOutcome train_ppo(PolicyNet& policy, Critic& critic,
                       const std::vector<EnvParams>& env_params,
                       const PpoConfig& cfg, int jobs = 1);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log);

class MovingAverage {
 public:
  explicit MovingAverage(int window) : window_(window) {}
  void push(double v);
  double value() const;  // mean of the last min(window, count) entries
  bool empty() const { return buf_.empty(); }

 private:
  int window_;
  std::deque<double> buf_;
  double sum_ = 0.0;
};

}  // namespace stnq

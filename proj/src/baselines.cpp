#include "stnq/baselines.hpp"

#include <future>
#include <stdexcept>

namespace stnq {

int maxweight_action(const NetworkState& s) {
  int best = 0;
  long long best_w = s.q[0] * s.y[0];
  for (int i = 1; i < static_cast<int>(s.q.size()); ++i) {
    long long w = s.q[i] * s.y[i];
    if (w > best_w) {
      best_w = w;
      best = i;
    }
  }
  return best;
}

int shortest_queue_action(const NetworkState& s) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(s.q.size()); ++i) {
    if (s.q[i] < s.q[best]) best = i;
  }
  return best;
}

ActionFn baseline_policy(EnvKind kind) {
  if (kind == EnvKind::SingleHop) return maxweight_action;
  return shortest_queue_action;
}

namespace {

struct TrajResult {
  double avg_cost;
  bool overflowed;
};

TrajResult run_trajectory(const EnvParams& params, const ActionFn& policy,
                          long long traj_len, std::uint64_t seed) {
  QueueEnv env(params, seed);
  double acc = 0.0;
  for (long long t = 0; t < traj_len; ++t) {
    acc += env.step(policy(env.state()));
  }
  return {acc / static_cast<double>(traj_len), env.overflowed()};
}

}  // namespace

RolloutStats estimate_avg_cost(const EnvParams& params, const ActionFn& policy,
                               int num_traj, long long traj_len,
                               const std::vector<std::uint64_t>& seeds, int jobs) {
  if (num_traj < 1 || traj_len < 1) {
    throw std::invalid_argument("estimate_avg_cost: need num_traj, traj_len >= 1");
  }
  if (static_cast<int>(seeds.size()) < num_traj) {
    throw std::invalid_argument("estimate_avg_cost: not enough seeds");
  }
  std::vector<TrajResult> results(num_traj);
  if (jobs <= 1) {
    for (int i = 0; i < num_traj; ++i) {
      results[i] = run_trajectory(params, policy, traj_len, seeds[i]);
    }
  } else {
    std::vector<std::future<TrajResult>> futs;
    futs.reserve(num_traj);
    for (int i = 0; i < num_traj; ++i) {
      futs.push_back(std::async(std::launch::async, run_trajectory, params,
                                policy, traj_len, seeds[i]));
    }
    for (int i = 0; i < num_traj; ++i) results[i] = futs[i].get();
  }

  RolloutStats stats;
  stats.steps = traj_len;
  for (const TrajResult& r : results) {
    stats.trajectory_costs.push_back(r.avg_cost);
    stats.overflowed = stats.overflowed || r.overflowed;
  }
  double total = 0.0;
  for (double c : stats.trajectory_costs) total += c;
  stats.avg_cost = total / static_cast<double>(num_traj);
  return stats;
}

}  // namespace stnq

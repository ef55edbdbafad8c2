#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stnq/env.hpp"

namespace stnq {

// argmax_k q_k * y_k, ties to the lowest index
int maxweight_action(const NetworkState& s);

// argmin_k q_k, ties to the lowest index
int shortest_queue_action(const NetworkState& s);

using ActionFn = std::function<int(const NetworkState&)>;

ActionFn baseline_policy(EnvKind kind);

struct RolloutStats {
  double avg_cost = 0.0;
  std::vector<double> trajectory_costs;
  long long steps = 0;  // per trajectory
  bool overflowed = false;
};

// Time-averaged cost over seeded trajectories; the mean across trajectories
// estimates J(policy, env). jobs > 1 fans trajectories out over threads,
// results merge in trajectory order.
RolloutStats estimate_avg_cost(const EnvParams& params, const ActionFn& policy,
                               int num_traj, long long traj_len,
                               const std::vector<std::uint64_t>& seeds,
                               int jobs = 1);

}  // namespace stnq

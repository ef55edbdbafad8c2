#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnq/env.hpp"

namespace stnq {

struct CheckConfig {
  int num_traj = 3;
  long long traj_len = 50000;
  double threshold = 200.0;
  int max_rejects = 1000;  // consecutive rejections before giving up
  int jobs = 1;
};

// A batch of accepted environments plus the baseline cost recorded for each
// at acceptance time (used later for normalization).
struct EnvSet {
  EnvKind kind = EnvKind::SingleHop;
  std::uint64_t master_seed = 0;
  std::vector<EnvParams> envs;
  std::vector<double> baseline_costs;
};

// K=4, all rates Uniform(0,3); the env's own stream seed is drawn from the
// same rng so the whole set replays from one master seed.
EnvParams sample_singlehop_env(RngStream& rng);

// K=8, mu Uniform(0,1), no arrival rates.
EnvParams sample_multipath_env(RngStream& rng);

struct CheckResult {
  bool accepted = false;
  double baseline_cost = 0.0;
};

// Runs the kind's baseline policy (MaxWeight or Shortest-Queue) over
// num_traj seeded trajectories and accepts iff the mean time-averaged cost
// stays at or below the threshold. Trajectory seeds derive from
// (params.seed, trajectory index).
CheckResult stabilizability_check(const EnvParams& params,
                                  const CheckConfig& cfg = {});

// Resample-until-accepted loop producing exactly `count` environments.
EnvSet build_env_set(EnvKind kind, int count, std::uint64_t master_seed,
                     const CheckConfig& cfg = {});

// env_id, kind, K, lambda_1..K, mu_1..K, J_baseline, seed
std::string env_set_to_csv(const EnvSet& set);
EnvSet env_set_from_csv(const std::string& text);
void save_env_set(const EnvSet& set, const std::string& path);
EnvSet load_env_set(const std::string& path);

}  // namespace stnq

#include "doctest.h"

#include <vector>

#include "stnq/baselines.hpp"
#include "stnq/env.hpp"
#include "stnq/rng.hpp"

using namespace stnq;

namespace {

NetworkState make_state(std::vector<long long> q, std::vector<long long> y) {
  NetworkState s;
  s.q = std::move(q);
  s.y = std::move(y);
  return s;
}

}  // namespace

TEST_CASE("maxweight picks the largest q*y, ties to the lowest index") {
  CHECK(maxweight_action(make_state({3, 2}, {1, 2})) == 1);   // weights (3,4)
  CHECK(maxweight_action(make_state({0, 0}, {1, 1})) == 0);   // tie
  CHECK(maxweight_action(make_state({5, 1, 1, 1}, {0, 9, 0, 0})) == 1);
  CHECK(maxweight_action(make_state({2, 2}, {3, 3})) == 0);   // equal weights
}

TEST_CASE("shortest queue picks the smallest q, ties to the lowest index") {
  CHECK(shortest_queue_action(make_state({3, 1, 2}, {1, 1, 1})) == 1);
  CHECK(shortest_queue_action(make_state({2, 2}, {1, 1})) == 0);
  CHECK(shortest_queue_action(make_state({0, 0, 0, 0}, {1, 1, 1, 1})) == 0);
}

TEST_CASE("baseline_policy dispatches by kind") {
  NetworkState s = make_state({3, 1}, {1, 9});
  CHECK(baseline_policy(EnvKind::SingleHop)(s) == 1);  // maxweight: 3 vs 9
  CHECK(baseline_policy(EnvKind::MultiPath)(s) == 1);  // shortest queue
}

TEST_CASE("no arrivals means zero cost forever") {
  EnvParams p;
  p.kind = EnvKind::SingleHop;
  p.num_queues = 2;
  p.arrival_rates = {0.0, 0.0};
  p.service_rates = {1.0, 1.0};
  p.seed = 3;
  RolloutStats st = estimate_avg_cost(p, baseline_policy(p.kind), 2, 1000,
                                      {mix_seed(3, 0), mix_seed(3, 1)});
  CHECK(st.avg_cost == 0.0);
  CHECK(st.trajectory_costs == std::vector<double>{0.0, 0.0});
  CHECK_FALSE(st.overflowed);
}

// Deterministic single queue: one arrival and one service per step keeps the
// backlog pinned at 1, so the time-averaged cost is exactly 1.
TEST_CASE("deterministic unit-rate queue has average cost 1") {
  EnvParams p;
  p.kind = EnvKind::SingleHop;
  p.num_queues = 1;
  p.arrival_rates = {1.0};
  p.service_rates = {1.0};
  p.seed = 3;
  QueueEnv env(p, 12);
  env.set_arrival_dists({DiscreteDist::finite({1}, {1.0})});
  env.set_capacity_dists({DiscreteDist::finite({1}, {1.0})});
  env.reset();
  double acc = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) acc += env.step(0);
  CHECK(acc / n == 1.0);
}

TEST_CASE("rollout estimate is deterministic in the seeds") {
  EnvParams p;
  p.kind = EnvKind::SingleHop;
  p.num_queues = 2;
  p.arrival_rates = {0.6, 0.3};
  p.service_rates = {1.0, 0.8};
  p.seed = 17;
  std::vector<std::uint64_t> seeds = {mix_seed(17, 0), mix_seed(17, 1), mix_seed(17, 2)};
  RolloutStats a = estimate_avg_cost(p, baseline_policy(p.kind), 3, 5000, seeds);
  RolloutStats b = estimate_avg_cost(p, baseline_policy(p.kind), 3, 5000, seeds);
  CHECK(a.avg_cost == b.avg_cost);
  CHECK(a.trajectory_costs == b.trajectory_costs);
}

TEST_CASE("parallel rollout merges in trajectory order, bitwise equal to serial") {
  EnvParams p;
  p.kind = EnvKind::MultiPath;
  p.num_queues = 4;
  p.service_rates = {0.4, 0.6, 0.5, 0.7};
  p.seed = 29;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < 6; ++i) seeds.push_back(mix_seed(29, i));
  RolloutStats serial = estimate_avg_cost(p, baseline_policy(p.kind), 6, 3000, seeds, 1);
  RolloutStats par = estimate_avg_cost(p, baseline_policy(p.kind), 6, 3000, seeds, 3);
  CHECK(serial.avg_cost == par.avg_cost);
  CHECK(serial.trajectory_costs == par.trajectory_costs);
}

TEST_CASE("rollout rejects malformed arguments") {
  EnvParams p;
  p.kind = EnvKind::SingleHop;
  p.num_queues = 1;
  p.arrival_rates = {0.5};
  p.service_rates = {1.0};
  p.seed = 1;
  CHECK_THROWS(estimate_avg_cost(p, baseline_policy(p.kind), 2, 100, {1}));   // too few seeds
  CHECK_THROWS(estimate_avg_cost(p, baseline_policy(p.kind), 0, 100, {}));
  CHECK_THROWS(estimate_avg_cost(p, baseline_policy(p.kind), 1, 0, {1}));
}

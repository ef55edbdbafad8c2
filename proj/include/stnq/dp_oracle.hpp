#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stnq/env.hpp"

namespace stnq {

// Exact solver for small two-queue single-hop scheduling MDPs: explicit finite
// arrival/capacity distributions, truncated state space, average-cost policy
// iteration, and the sequence-of-approximate-MDPs scheme for the unbounded
// original problem. Also houses the switch-type checker used on arbitrary
// tabulated policies.

// Finite-distribution problem description. Arrival and capacity distributions
// must have finite support (Finite or Bernoulli); Poisson is rejected.
struct DpSpec {
  std::array<DiscreteDist, 2> arrivals;
  std::array<DiscreteDist, 2> capacities;

  void validate() const;

  // Bernoulli(0.4) arrivals on both queues; capacities {0,1,2} with
  // probabilities (0.5, 0.3, 0.2) on both queues.
  static DpSpec symmetric_default();
};

// key = value text mirroring the EnvParams format (kind, K, lambda, mu are the
// distribution means) plus the explicit finite distributions.
std::string serialize_dp_spec(const DpSpec& spec);
DpSpec parse_dp_spec(const std::string& text);
DpSpec load_dp_spec(const std::string& path);
void save_dp_spec(const DpSpec& spec, const std::string& path);

// Enumeration of (q1, q2, y1, y2) states with q_k in [0..bound] and y_k
// ranging over the per-queue capacity supports:
//   index = ((q1*(bound+1) + q2)*ny1 + iy1)*ny2 + iy2.
struct GridShape {
  int bound = 0;
  int ny1 = 0;
  int ny2 = 0;

  std::size_t num_states() const;
  std::size_t index(int q1, int q2, int iy1, int iy2) const;
  void unpack(std::size_t idx, int& q1, int& q2, int& iy1, int& iy2) const;
};

// Finite truncation of the two-queue MDP. Transition rows are exact
// product-form probabilities; arrival mass that would push a queue beyond the
// bound is reassigned to q = bound. Cost is the total backlog of the state.
struct TruncatedMdp {
  DpSpec spec;
  GridShape grid;
  std::vector<long long> y1_values;
  std::vector<long long> y2_values;
  std::vector<double> cost;

  struct Entry {
    std::uint32_t state;
    double prob;
  };
  // CSR rows indexed r = state*2 + action.
  std::vector<Entry> entries;
  std::vector<std::size_t> row_begin;

  std::size_t num_states() const { return cost.size(); }
  const Entry* row_data(std::size_t state, int action) const;
  std::size_t row_size(std::size_t state, int action) const;
  double row_sum(std::size_t state, int action) const;
};

TruncatedMdp build_truncated_mdp(const DpSpec& spec, int bound);

// Total action map over a truncated grid. Actions are 0-based internally
// (action k serves queue k+1); region CSV export is 1-based.
struct PolicyTable {
  DpSpec spec;
  GridShape grid;
  std::vector<long long> y1_values;
  std::vector<long long> y2_values;
  std::vector<std::uint8_t> actions;

  std::size_t num_states() const { return actions.size(); }
  int action_at(int q1, int q2, int iy1, int iy2) const;
};

// Tabulates fn(q1, q2, y1, y2) -> 0-based action over the grid.
PolicyTable make_policy_table(
    const DpSpec& spec, int bound,
    const std::function<int(int, int, long long, long long)>& fn);

// Copy of the table restricted to q1, q2 <= new_bound.
PolicyTable restrict_table(const PolicyTable& table, int new_bound);

struct DpSolveConfig {
  // Policy evaluation stops when the span of successive value-iteration
  // differences bounds the average cost this tightly.
  double gain_tol = 1e-12;
  long long max_eval_sweeps = 1000000;
  int max_improve_iters = 200;
  // |Q(s,0) - Q(s,1)| at or below this is a tie and resolves to action 0.
  double tie_tol = 1e-9;
  std::size_t reference_state = 0;
  // Initial policy for the improvement loop; empty means MaxWeight.
  std::vector<std::uint8_t> initial_policy;
};

struct PolicyIterationResult {
  PolicyTable table;
  std::vector<double> gains;  // average cost of each evaluated policy
  std::vector<double> h;      // final relative values, h[reference] = 0
  int improvement_steps = 0;
  double final_gain = 0.0;
};

// Average-cost (relative value) policy iteration, Howard variant for unichain
// problems. Evaluation solves the relative-value system iteratively with a
// reference state; improvement is greedy with ties to the lowest action;
// terminates when the policy is stable. Gains are checked non-increasing to
// 1e-10 and evaluation failure raises a diagnostic.
PolicyIterationResult policy_iteration(const TruncatedMdp& mdp,
                                       const DpSolveConfig& cfg = {});

inline std::vector<int> default_dp_schedule() { return {25, 30, 35, 40, 45, 50}; }

struct SequenceResult {
  PolicyTable table;             // converged policy restricted to the region
  std::vector<int> bounds_tried;
  int converged_bound = -1;      // larger bound of the first agreeing pair
  std::vector<double> gains;     // final gain per solved bound
};

// Solves the truncated MDP at increasing bounds until two consecutive
// solutions agree on every state with q1, q2 <= region_bound, and returns that
// converged restriction. Distinct bounds may solve in parallel (jobs > 1);
// the result is identical to the serial run. Throws with the disagreement set
// if the schedule is exhausted.
SequenceResult approximate_mdp_sequence(const DpSpec& spec, int region_bound = 20,
                                        const std::vector<int>& schedule = default_dp_schedule(),
                                        const DpSolveConfig& cfg = {}, int jobs = 1);

struct SwitchTypeViolation {
  int q1, q2, iy1, iy2;      // state, with its chosen action
  int nq1, nq2, niy1, niy2;  // neighbor raising the chosen component
  int action_state;          // 0-based
  int action_neighbor;
};

struct SwitchTypeReport {
  bool ok = true;
  std::vector<SwitchTypeViolation> violations;
};

// Deterministic switch-type check over the whole grid: wherever the table picks component
// i, every neighbor that raises q_i and/or y_i (other component unchanged)
// must also pick i. Returns all violations.
SwitchTypeReport is_switch_type(const PolicyTable& table);

// CSV "q1,q2,y1,y2,action" over the (q1, q2) grid for one capacity slice,
// action written 1-based.
std::string export_decision_regions(const PolicyTable& table, int iy1, int iy2);

}  // namespace stnq

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnq/matrix.hpp"
#include "stnq/rng.hpp"

namespace stnq {

enum class EnvKind { SingleHop, MultiPath };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& s);

// Rates defining one sampled environment instance. MultiPath carries no
// arrival rates: exactly one packet arrives per step.
struct EnvParams {
  EnvKind kind = EnvKind::SingleHop;
  int num_queues = 0;
  std::vector<double> arrival_rates;
  std::vector<double> service_rates;
  std::uint64_t seed = 0;

  void validate() const;
};

// key = value text, fields: kind, K, lambda, mu, seed
std::string serialize_env_params(const EnvParams& p);
EnvParams parse_env_params(const std::string& text);
EnvParams load_env_params(const std::string& path);
void save_env_params(const EnvParams& p, const std::string& path);

// Per-queue (length, capacity) pairs; y holds the capacities visible at the
// current step, sampled before the agent acts.
struct NetworkState {
  std::vector<long long> q;
  std::vector<long long> y;
  long long t = 0;
};

// Safety cap on queue lengths; the simulator flags overflow instead of
// letting unstable runs grow without bound.
inline constexpr long long kQueueCap = 1'000'000'000LL;

// One transition of the scheduling dynamics with randomness injected, so the
// update itself is a pure function. The returned state carries the capacities
// observable at t+1.
NetworkState singlehop_step(const NetworkState& s, int action,
                            const std::vector<long long>& arrivals,
                            const std::vector<long long>& capacities);

// Routing dynamics: every queue drains by its capacity, the chosen queue
// receives the single arriving packet.
NetworkState multipath_step(const NetworkState& s, int action,
                            const std::vector<long long>& capacities);

// Total backlog. Per-queue costs other than q_k plug in via QueueEnv.
double total_cost(const NetworkState& s);

enum class EncodingScheme {
  SingleHopFull,   // (q, y, lambda, -mu)
  MultiPathFull,   // (-q, y, mu)
  SingleHopBare,   // (q, y)
  MultiPathBare,   // (-q, y)
};

int encoding_width(EncodingScheme scheme);
std::string to_string(EncodingScheme scheme);
EncodingScheme encoding_from_string(const std::string& s);
EncodingScheme default_encoding(EnvKind kind, bool with_params);

// K x n matrix, one row per queue.
Matrix encode_observation(const NetworkState& s, const EnvParams& p,
                          EncodingScheme scheme);

// Exogenous per-queue distribution. Sampled environments use Poisson;
// Bernoulli and explicit finite supports exist for the exact-solver
// environment and deterministic tests.
struct DiscreteDist {
  enum class Kind { Poisson, Bernoulli, Finite };
  Kind kind = Kind::Poisson;
  double rate = 0.0;  // Poisson mean or Bernoulli p
  std::vector<long long> values;
  std::vector<double> probs;

  long long sample(RngStream& rng) const;
  double mean() const;
  void validate() const;

  static DiscreteDist poisson(double rate);
  static DiscreteDist bernoulli(double p);
  static DiscreteDist finite(std::vector<long long> values, std::vector<double> probs);
};

struct Exogenous {
  std::vector<long long> arrivals;    // empty for MultiPath
  std::vector<long long> capacities;
};

// i.i.d. Poisson draws per the environment's rates.
Exogenous sample_exogenous(const EnvParams& p, RngStream& rng);

// Discrete-time simulator owning a single rng stream. Action sampling for a
// stochastic policy should draw from the same stream via rng().
class QueueEnv {
 public:
  QueueEnv(const EnvParams& params, std::uint64_t stream_seed);
  explicit QueueEnv(const EnvParams& params);

  // Override the exogenous distributions (one per queue).
  void set_arrival_dists(std::vector<DiscreteDist> dists);
  void set_capacity_dists(std::vector<DiscreteDist> dists);

  // Empty queues, freshly sampled capacities, t = 0.
  void reset();

  // Applies the action, samples next arrivals/capacities, returns the cost
  // of the resulting state. Queue lengths clamp at kQueueCap.
  double step(int action);

  const NetworkState& state() const { return state_; }
  const EnvParams& params() const { return params_; }
  bool overflowed() const { return overflowed_; }
  RngStream& rng() { return rng_; }

 private:
  std::vector<long long> sample_caps();

  EnvParams params_;
  std::vector<DiscreteDist> arrival_dists_;
  std::vector<DiscreteDist> capacity_dists_;
  NetworkState state_;
  RngStream rng_;
  bool overflowed_ = false;
};

}  // namespace stnq

#pragma once

#include <memory>
#include <string>

#include "stnq/autodiff.hpp"
#include "stnq/env.hpp"
#include "stnq/matrix.hpp"

namespace stnq {

// Common interface for the two policy architectures. Observations travel
// flattened: one row of width K*n per state (rows of the K x n observation
// matrix concatenated), so a batch is B x (K*n).
class PolicyNet {
 public:
  virtual ~PolicyNet() = default;

  virtual std::string kind() const = 0;
  virtual int num_actions() const = 0;
  virtual int row_width() const = 0;
  virtual EncodingScheme encoding() const = 0;

  int obs_width() const { return num_actions() * row_width(); }

  // B x (K*n) -> B x K action logits.
  virtual Matrix logits(const Matrix& flat_obs, bool train) = 0;
  // dlogits is B x K from the last train forward; accumulates parameter
  // gradients, returns gradient w.r.t. the flat observation.
  virtual Matrix backward(const Matrix& dlogits) = 0;

  virtual FeedForwardNet& net() = 0;
  virtual const FeedForwardNet& net() const = 0;
  virtual std::unique_ptr<PolicyNet> clone() const = 0;

  std::string to_json() const;
};

struct StnConfig {
  int hidden_width = 32;
  int hidden_layers = 4;
  double relu_bound = 1.0;
  double init_noise_sd = 0.1;
  // Optional per-coordinate scale hints for the first layer's init; empty
  // means all ones. Entry s_j shifts W_:,j by -ln(s_j) so the initial
  // effective weight is ~1/(fan_in * s_j). Initialization only; the
  // monotone structure is unaffected.
  Vector input_scale;
};

// Switch-type network: one shared monotone scalar net f applied to each of
// the K component rows, batched as a (B*K) x n forward.
class StnPolicy final : public PolicyNet {
 public:
  StnPolicy(EncodingScheme enc, int num_actions, const StnConfig& cfg,
            RngStream& rng);
  StnPolicy(EncodingScheme enc, int num_actions, FeedForwardNet net);

  std::string kind() const override { return "stn"; }
  int num_actions() const override { return k_; }
  int row_width() const override { return net_.in_width(); }
  EncodingScheme encoding() const override { return enc_; }
  Matrix logits(const Matrix& flat_obs, bool train) override;
  Matrix backward(const Matrix& dlogits) override;
  FeedForwardNet& net() override { return net_; }
  const FeedForwardNet& net() const override { return net_; }
  std::unique_ptr<PolicyNet> clone() const override;

 private:
  EncodingScheme enc_;
  int k_;
  FeedForwardNet net_;
};

struct MlpConfig {
  int hidden_width = 64;
  int hidden_layers = 2;
  // ReLU rather than tanh: raw queue lengths are unbounded, and tanh units
  // saturate (zero gradient) whenever a queue grows past a handful of
  // packets, which freezes the net exactly when it most needs to adapt.
  Activation activation = Activation::Relu;
};

class MlpPolicy final : public PolicyNet {
 public:
  MlpPolicy(EncodingScheme enc, int num_actions, int row_width,
            const MlpConfig& cfg, RngStream& rng);
  MlpPolicy(EncodingScheme enc, int num_actions, int row_width,
            FeedForwardNet net);

  std::string kind() const override { return "mlp"; }
  int num_actions() const override { return k_; }
  int row_width() const override { return n_; }
  EncodingScheme encoding() const override { return enc_; }
  Matrix logits(const Matrix& flat_obs, bool train) override;
  Matrix backward(const Matrix& dlogits) override;
  FeedForwardNet& net() override { return net_; }
  const FeedForwardNet& net() const override { return net_; }
  std::unique_ptr<PolicyNet> clone() const override;

 private:
  EncodingScheme enc_;
  int k_;
  int n_;
  FeedForwardNet net_;
};

std::unique_ptr<PolicyNet> policy_from_json(const std::string& text);
std::unique_ptr<PolicyNet> load_policy(const std::string& path);
void save_policy(const PolicyNet& policy, const std::string& path);

// Value network over the same flattened observation; 2x64 ReLU MLP.
class Critic {
 public:
  Critic(EncodingScheme enc, int num_actions, int row_width, RngStream& rng);
  Critic(EncodingScheme enc, FeedForwardNet net);

  // B x (K*n) -> B values.
  Vector values(const Matrix& flat_obs, bool train);
  double value_one(const Matrix& obs);
  // dvalues is length B; accumulates gradients.
  void backward(const Vector& dvalues);

  FeedForwardNet& net() { return net_; }
  const FeedForwardNet& net() const { return net_; }
  EncodingScheme encoding() const { return enc_; }

  std::string to_json() const;
  static Critic from_json(const std::string& text);

 private:
  EncodingScheme enc_;
  FeedForwardNet net_;
};

struct ActSample {
  int action = 0;
  double log_prob = 0.0;
};

Vector policy_logits_one(PolicyNet& policy, const Matrix& obs);
ActSample act_stochastic(PolicyNet& policy, const Matrix& obs, RngStream& rng);
int act_deterministic(PolicyNet& policy, const Matrix& obs);  // ties to lowest
double policy_entropy(PolicyNet& policy, const Matrix& obs);

// Flattens a K x n observation into one row of width K*n.
Matrix flatten_observation(const Matrix& obs);

}  // namespace stnq

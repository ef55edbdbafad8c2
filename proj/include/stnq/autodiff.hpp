#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnq/matrix.hpp"
#include "stnq/rng.hpp"

namespace stnq {

enum class WeightMode { Standard, Exponentiated };
enum class Activation { Identity, Relu, ReluN, Tanh };

std::string to_string(WeightMode m);
std::string to_string(Activation a);
WeightMode weight_mode_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

// One dense layer. Exponentiated mode multiplies by exp(W) elementwise, so
// every effective weight is positive and the map is monotone; exp(W) is
// cached and recomputed only after the weights change.
class DenseLayer {
 public:
  DenseLayer(int in, int out, WeightMode mode, Activation act,
             double relu_bound = 1.0);

  // x is batch_size x in. train=true records the caches backward() needs.
  Matrix forward(const Matrix& x, bool train);

  // dy is batch_size x out (gradient at this layer's output); accumulates
  // into grad_W/grad_b and returns the gradient at the input.
  Matrix backward(const Matrix& dy);

  void zero_grad();
  void mark_dirty();  // call after mutating W through params()

  const Matrix& effective_weights() const;

  int in_width() const { return in_; }
  int out_width() const { return out_; }
  WeightMode mode() const { return mode_; }
  Activation activation() const { return act_; }
  double relu_bound() const { return relu_bound_; }

  Matrix W;  // out x in
  Vector b;
  Matrix grad_W;
  Vector grad_b;

 private:
  int in_;
  int out_;
  WeightMode mode_;
  Activation act_;
  double relu_bound_;
  mutable Matrix eff_;
  mutable bool eff_dirty_ = true;
  Matrix in_cache_;
  Matrix pre_cache_;
  bool have_cache_ = false;
};

// Mutable slice of a network's parameters with the matching grad buffer.
struct ParamView {
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

class FeedForwardNet {
 public:
  FeedForwardNet() = default;
  explicit FeedForwardNet(std::vector<DenseLayer> layers);

  Matrix forward(const Matrix& x, bool train = false);
  // dy matches the final layer's output shape from the last train forward.
  Matrix backward(const Matrix& dy);

  void zero_grad();
  void mark_dirty();
  std::vector<ParamView> params();
  long long num_params() const;

  int in_width() const;
  int out_width() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::string to_json() const;
  static FeedForwardNet from_json(const std::string& text);

 private:
  std::vector<DenseLayer> layers_;
};

Vector relu_n(const Vector& z, double bound);
Vector softmax(const Vector& z);
Vector log_softmax(const Vector& z);
double entropy_from_logits(const Vector& z);

// Semi-orthogonal rows/columns scaled by gain (Gram-Schmidt on the smaller
// dimension), the usual small-net policy/value initialization.
void orthogonal_init(Matrix& w, double gain, RngStream& rng);

// W_ij = -ln(in) + noise, so exp(W) averages 1/fan_in and the layer starts
// near a mean over its inputs.
void exponentiated_init(Matrix& w, double noise_sd, RngStream& rng);

DenseLayer make_standard_layer(int in, int out, Activation act, double gain,
                               RngStream& rng);
DenseLayer make_exponentiated_layer(int in, int out, Activation act,
                                    double relu_bound, RngStream& rng);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update from the accumulated gradients; lazily sizes the moment
  // buffers on first use. Views must enumerate the same parameters in the
  // same order every call.
  void step(std::vector<ParamView> params);

  AdamConfig& config() { return cfg_; }
  long long step_count() const { return t_; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
};

// Scales gradients in place so their joint L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_grad_norm(std::vector<ParamView> params, double max_norm);

}  // namespace stnq

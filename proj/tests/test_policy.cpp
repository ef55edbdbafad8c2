#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stnq/policy_nets.hpp"
#include "stnq/rng.hpp"

using namespace stnq;

namespace {

Matrix random_obs(int k, int n, RngStream& rng, double lo = -5.0, double hi = 5.0) {
  Matrix o(k, n);
  for (double& v : o.data) v = rng.uniform_range(lo, hi);
  return o;
}

// True when every ReLU-N pre-activation sits clear of its kinks for this
// input, so a finite-difference probe cannot step across one.
bool clear_of_kinks(FeedForwardNet& net, const Matrix& x, double margin) {
  Matrix h = x;
  for (DenseLayer& l : net.layers()) {
    Matrix pre = matmul_nt(h, l.effective_weights());
    for (int i = 0; i < pre.rows; ++i) {
      for (int j = 0; j < l.out_width(); ++j) pre(i, j) += l.b[j];
    }
    if (l.activation() == Activation::Relu || l.activation() == Activation::ReluN) {
      for (double p : pre.data) {
        if (std::abs(p) < margin) return false;
        if (l.activation() == Activation::ReluN && std::abs(p - l.relu_bound()) < margin) {
          return false;
        }
      }
    }
    h = l.forward(h, false);
  }
  return true;
}

}  // namespace

TEST_CASE("stn logits: identical rows give identical logits") {
  RngStream rng(1);
  StnPolicy stn(EncodingScheme::SingleHopFull, 4, StnConfig{}, rng);
  Matrix obs(4, 4);
  for (int k = 0; k < 4; ++k) {
    obs(k, 0) = 2.0;
    obs(k, 1) = 1.0;
    obs(k, 2) = 0.5;
    obs(k, 3) = -0.7;
  }
  Vector z = policy_logits_one(stn, obs);
  for (int k = 1; k < 4; ++k) CHECK(z[k] == z[0]);
}

TEST_CASE("stn logits: bumping row i moves only logit i, upward") {
  RngStream rng(2);
  StnPolicy stn(EncodingScheme::SingleHopFull, 3, StnConfig{}, rng);
  RngStream draws(3);
  for (int trial = 0; trial < 300; ++trial) {
    Matrix obs = random_obs(3, 4, draws);
    Vector z = policy_logits_one(stn, obs);
    int i = trial % 3;
    Matrix obs2 = obs;
    for (int c = 0; c < 4; ++c) obs2(i, c) += draws.uniform_range(0.0, 3.0);
    Vector z2 = policy_logits_one(stn, obs2);
    CHECK(z2[i] >= z[i]);
    for (int k = 0; k < 3; ++k) {
      if (k != i) CHECK(z2[k] == z[k]);
    }
  }
}

TEST_CASE("stn with one action always picks it with probability 1") {
  RngStream rng(4);
  StnPolicy stn(EncodingScheme::SingleHopFull, 1, StnConfig{}, rng);
  Matrix obs = random_obs(1, 4, rng);
  Vector p = softmax(policy_logits_one(stn, obs));
  CHECK(p.size() == 1);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(act_deterministic(stn, obs) == 0);
}

TEST_CASE("stn logits are permutation-equivariant") {
  RngStream rng(5);
  StnPolicy stn(EncodingScheme::MultiPathFull, 5, StnConfig{}, rng);
  RngStream draws(6);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  for (int trial = 0; trial < 50; ++trial) {
    Matrix obs = random_obs(5, 3, draws);
    Matrix pobs(5, 3);
    for (int k = 0; k < 5; ++k) {
      for (int c = 0; c < 3; ++c) pobs(k, c) = obs(perm[k], c);
    }
    Vector z = policy_logits_one(stn, obs);
    Vector pz = policy_logits_one(stn, pobs);
    for (int k = 0; k < 5; ++k) CHECK(pz[k] == z[perm[k]]);
  }
}

// Stochastic switch-type property: for any parameters and any strictly
// positive perturbation of row i, the probability of action i never drops
// (beyond fp roundoff).
TEST_CASE("stn satisfies the stochastic switch-type property") {
  const int kParams = 100;
  const int kTriples = 1000;
  RngStream draws(7);
  for (int pi = 0; pi < kParams; ++pi) {
    RngStream prng(mix_seed(1234, pi));
    StnConfig cfg;
    cfg.init_noise_sd = draws.uniform_range(0.05, 1.0);  // spread of parameterizations
    StnPolicy stn(EncodingScheme::SingleHopFull, 4, cfg, prng);
    // extra parameter diversity: random post-init jitter
    for (ParamView& pv : stn.net().params()) {
      for (std::size_t k = 0; k < pv.size; ++k) {
        pv.value[k] += draws.uniform_range(-0.5, 0.5);
      }
    }
    stn.net().mark_dirty();
    // batched evaluation: rows 2t and 2t+1 hold the base/bumped pair
    Matrix base(kTriples, 16), bumped(kTriples, 16);
    std::vector<int> comp(kTriples);
    for (int t = 0; t < kTriples; ++t) {
      Matrix obs = random_obs(4, 4, draws);
      comp[t] = static_cast<int>(draws.uniform_range(0.0, 4.0)) % 4;
      Matrix obs2 = obs;
      for (int c = 0; c < 4; ++c) {
        obs2(comp[t], c) += draws.uniform_range(1e-3, 4.0);
      }
      Matrix fo = flatten_observation(obs);
      Matrix fo2 = flatten_observation(obs2);
      for (int c = 0; c < 16; ++c) {
        base(t, c) = fo(0, c);
        bumped(t, c) = fo2(0, c);
      }
    }
    Matrix zb = stn.logits(base, false);
    Matrix za = stn.logits(bumped, false);
    for (int t = 0; t < kTriples; ++t) {
      Vector pb = softmax({zb(t, 0), zb(t, 1), zb(t, 2), zb(t, 3)});
      Vector pa = softmax({za(t, 0), za(t, 1), za(t, 2), za(t, 3)});
      CHECK(pa[comp[t]] >= pb[comp[t]] - 1e-9);
    }
  }
}

// The property is not vacuous: a plain MLP violates it.
TEST_CASE("mlp policy violates the switch-type inequality somewhere") {
  RngStream rng(8);
  MlpPolicy mlp(EncodingScheme::SingleHopFull, 4, 4, MlpConfig{}, rng);
  RngStream draws(9);
  bool violated = false;
  for (int t = 0; t < 20000 && !violated; ++t) {
    Matrix obs = random_obs(4, 4, draws);
    int i = static_cast<int>(draws.uniform_range(0.0, 4.0)) % 4;
    Matrix obs2 = obs;
    for (int c = 0; c < 4; ++c) obs2(i, c) += draws.uniform_range(1e-3, 4.0);
    Vector pb = softmax(policy_logits_one(mlp, obs));
    Vector pa = softmax(policy_logits_one(mlp, obs2));
    if (pa[i] < pb[i] - 1e-9) violated = true;
  }
  CHECK(violated);
}

TEST_CASE("act_stochastic matches the softmax distribution") {
  RngStream rng(10);
  StnPolicy stn(EncodingScheme::SingleHopFull, 4, StnConfig{}, rng);
  Matrix obs(4, 4);
  for (int k = 0; k < 4; ++k) {
    obs(k, 0) = 1.0;
    obs(k, 1) = 1.0;
    obs(k, 2) = 0.5;
    obs(k, 3) = -0.5;
  }
  // symmetric rows -> uniform distribution
  RngStream actrng(11);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  for (int t = 0; t < n; ++t) ++counts[act_stochastic(stn, obs, actrng).action];
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(counts[k] / static_cast<double>(n) - 0.25) <= 3.0 * sigma);
  }
}

TEST_CASE("act_stochastic log_prob matches ln softmax of the logits") {
  RngStream rng(12);
  MlpPolicy mlp(EncodingScheme::MultiPathFull, 3, 3, MlpConfig{}, rng);
  RngStream actrng(13);
  for (int t = 0; t < 200; ++t) {
    Matrix obs = random_obs(3, 3, actrng);
    ActSample s = act_stochastic(mlp, obs, actrng);
    Vector lp = log_softmax(policy_logits_one(mlp, obs));
    CHECK(std::abs(s.log_prob - lp[s.action]) <= 1e-12);
  }
}

TEST_CASE("a dominant logit is sampled essentially always") {
  RngStream rng(14);
  // Hand-built STN equivalent: use MLP-free direct check through softmax
  Vector p = softmax({50.0, 0.0, 0.0, 0.0});
  CHECK(p[0] > 1.0 - 1e-9);
}

TEST_CASE("act_deterministic takes the argmax with ties to the lowest index") {
  // direct argmax semantics probed through a tiny hand-weighted STN
  RngStream rng(15);
  StnPolicy stn(EncodingScheme::SingleHopBare, 3, StnConfig{}, rng);
  Matrix equal_obs(3, 2);
  for (int k = 0; k < 3; ++k) {
    equal_obs(k, 0) = 1.0;
    equal_obs(k, 1) = 1.0;
  }
  CHECK(act_deterministic(stn, equal_obs) == 0);  // identical rows tie

  // multipath bare encoding (-q, y): emptier queue wins under monotone f
  StnPolicy mp(EncodingScheme::MultiPathBare, 2, StnConfig{}, rng);
  Matrix obs(2, 2);
  obs(0, 0) = -5.0;  // q = (5, 0)
  obs(0, 1) = 1.0;
  obs(1, 0) = 0.0;
  obs(1, 1) = 1.0;
  Vector z = policy_logits_one(mp, obs);
  CHECK(z[1] >= z[0]);
  CHECK(act_deterministic(mp, obs) == 1);
}

TEST_CASE("policy entropy matches brute force") {
  RngStream rng(16);
  MlpPolicy mlp(EncodingScheme::SingleHopFull, 4, 4, MlpConfig{}, rng);
  RngStream draws(17);
  for (int t = 0; t < 100; ++t) {
    Matrix obs = random_obs(4, 4, draws);
    Vector p = softmax(policy_logits_one(mlp, obs));
    double brute = 0.0;
    for (double v : p) brute -= v * std::log(v);
    CHECK(policy_entropy(mlp, obs) == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("critic produces finite, input-deterministic values") {
  RngStream rng(18);
  Critic critic(EncodingScheme::SingleHopFull, 4, 4, rng);
  RngStream draws(19);
  for (int t = 0; t < 50; ++t) {
    Matrix obs = random_obs(4, 4, draws);
    double v1 = critic.value_one(obs);
    double v2 = critic.value_one(obs);
    CHECK(std::isfinite(v1));
    CHECK(v1 == v2);
  }
}

TEST_CASE("critic gradient matches finite differences") {
  RngStream rng(20);
  Critic critic(EncodingScheme::SingleHopFull, 2, 4, rng);
  RngStream draws(21);
  Matrix obs(3, 8);
  for (double& v : obs.data) v = draws.uniform_range(-2.0, 2.0);
  Vector coeffs = {0.7, -1.3, 0.4};
  critic.net().zero_grad();
  critic.values(obs, true);
  critic.backward(coeffs);
  auto loss = [&] {
    Vector v = critic.values(obs, false);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += coeffs[i] * v[i];
    return acc;
  };
  const double h = 1e-5;
  for (ParamView& pv : critic.net().params()) {
    for (std::size_t k = 0; k < pv.size; ++k) {
      double saved = pv.value[k];
      pv.value[k] = saved + h;
      double up = loss();
      pv.value[k] = saved - h;
      double dn = loss();
      pv.value[k] = saved;
      double fd = (up - dn) / (2.0 * h);
      double an = pv.grad[k];
      CHECK(std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}) <= 1e-4);
    }
  }
}

TEST_CASE("stn policy gradient flows through the shared net") {
  RngStream rng(22);
  StnPolicy stn(EncodingScheme::MultiPathBare, 3, StnConfig{}, rng);
  RngStream draws(23);
  Matrix obs(2, 6);
  do {
    for (double& v : obs.data) v = draws.uniform_range(-1.0, 1.0);
    Matrix rows = reshape(obs, 6, 2);
    if (clear_of_kinks(stn.net(), rows, 1e-3)) break;
  } while (true);
  Matrix coeffs(2, 3);
  for (double& v : coeffs.data) v = draws.uniform_range(-1.0, 1.0);
  stn.net().zero_grad();
  stn.logits(obs, true);
  stn.backward(coeffs);
  auto loss = [&] {
    Matrix z = stn.logits(obs, false);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i) acc += coeffs.data[i] * z.data[i];
    return acc;
  };
  const double h = 1e-5;
  int nonzero = 0;
  for (ParamView& pv : stn.net().params()) {
    for (std::size_t k = 0; k < pv.size; ++k) {
      double saved = pv.value[k];
      pv.value[k] = saved + h;
      stn.net().mark_dirty();
      double up = loss();
      pv.value[k] = saved - h;
      stn.net().mark_dirty();
      double dn = loss();
      pv.value[k] = saved;
      stn.net().mark_dirty();
      double fd = (up - dn) / (2.0 * h);
      double an = pv.grad[k];
      CHECK(std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}) <= 1e-4);
      if (an != 0.0) ++nonzero;
    }
  }
  CHECK(nonzero > 0);
}

TEST_CASE("policy checkpoints round-trip through json") {
  RngStream rng(24);
  StnPolicy stn(EncodingScheme::MultiPathFull, 8, StnConfig{}, rng);
  std::string blob = stn.to_json();
  std::unique_ptr<PolicyNet> back = policy_from_json(blob);
  CHECK(back->kind() == "stn");
  CHECK(back->encoding() == EncodingScheme::MultiPathFull);
  CHECK(back->num_actions() == 8);
  RngStream draws(25);
  Matrix obs = random_obs(8, 3, draws);
  CHECK(policy_logits_one(*back, obs) == policy_logits_one(stn, obs));

  MlpPolicy mlp(EncodingScheme::SingleHopFull, 4, 4, MlpConfig{}, rng);
  std::unique_ptr<PolicyNet> mback = policy_from_json(mlp.to_json());
  CHECK(mback->kind() == "mlp");
  Matrix obs2 = random_obs(4, 4, draws);
  CHECK(policy_logits_one(*mback, obs2) == policy_logits_one(mlp, obs2));

  Critic critic(EncodingScheme::SingleHopFull, 4, 4, rng);
  Critic cback = Critic::from_json(critic.to_json());
  CHECK(cback.value_one(obs2) == critic.value_one(obs2));
}

TEST_CASE("clone detaches parameters") {
  RngStream rng(26);
  StnPolicy stn(EncodingScheme::SingleHopFull, 4, StnConfig{}, rng);
  std::unique_ptr<PolicyNet> copy = stn.clone();
  RngStream draws(27);
  Matrix obs = random_obs(4, 4, draws);
  Vector before = policy_logits_one(*copy, obs);
  for (ParamView& pv : stn.net().params()) {
    for (std::size_t k = 0; k < pv.size; ++k) pv.value[k] += 1.0;
  }
  stn.net().mark_dirty();
  CHECK(policy_logits_one(*copy, obs) == before);
  CHECK(policy_logits_one(stn, obs) != before);
}

#include "stnq/policy_nets.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "stnq/textio.hpp"

namespace stnq {

namespace {

FeedForwardNet build_stn_net(int row_width, const StnConfig& cfg, RngStream& rng) {
  if (cfg.hidden_layers < 4) {
    throw std::invalid_argument("StnPolicy: needs at least 4 hidden layers");
  }
  if (!cfg.input_scale.empty() &&
      cfg.input_scale.size() != static_cast<std::size_t>(row_width)) {
    throw std::invalid_argument("StnPolicy: input_scale width mismatch");
  }
  std::vector<DenseLayer> layers;
  int in = row_width;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    DenseLayer l(in, cfg.hidden_width, WeightMode::Exponentiated, Activation::ReluN,
                 cfg.relu_bound);
    exponentiated_init(l.W, cfg.init_noise_sd, rng);
    if (i == 0 && !cfg.input_scale.empty()) {
      for (int r = 0; r < l.W.rows; ++r) {
        for (int c = 0; c < l.W.cols; ++c) l.W(r, c) -= std::log(cfg.input_scale[c]);
      }
    }
    l.mark_dirty();
    layers.push_back(std::move(l));
    in = cfg.hidden_width;
  }
  DenseLayer head(in, 1, WeightMode::Exponentiated, Activation::Identity);
  exponentiated_init(head.W, cfg.init_noise_sd, rng);
  head.mark_dirty();
  layers.push_back(std::move(head));
  return FeedForwardNet(std::move(layers));
}

FeedForwardNet build_mlp_net(int in_width, int out_width, const MlpConfig& cfg,
                             double head_gain, RngStream& rng) {
  std::vector<DenseLayer> layers;
  int in = in_width;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    layers.push_back(make_standard_layer(in, cfg.hidden_width, cfg.activation,
                                         std::sqrt(2.0), rng));
    in = cfg.hidden_width;
  }
  layers.push_back(make_standard_layer(in, out_width, Activation::Identity,
                                       head_gain, rng));
  return FeedForwardNet(std::move(layers));
}

nlohmann::json net_json_obj(const FeedForwardNet& net) {
  return nlohmann::json::parse(net.to_json());
}

}  // namespace

std::string PolicyNet::to_json() const {
  nlohmann::json j;
  j["kind"] = kind();
  j["encoding"] = stnq::to_string(encoding());
  j["num_actions"] = num_actions();
  j["row_width"] = row_width();
  j["net"] = net_json_obj(net());
  return j.dump(2);
}

StnPolicy::StnPolicy(EncodingScheme enc, int num_actions, const StnConfig& cfg,
                     RngStream& rng)
    : enc_(enc),
      k_(num_actions),
      net_(build_stn_net(encoding_width(enc), cfg, rng)) {
  if (num_actions < 1) throw std::invalid_argument("StnPolicy: bad action count");
}

StnPolicy::StnPolicy(EncodingScheme enc, int num_actions, FeedForwardNet net)
    : enc_(enc), k_(num_actions), net_(std::move(net)) {
  if (net_.out_width() != 1) throw std::invalid_argument("StnPolicy: net must be scalar");
}

Matrix StnPolicy::logits(const Matrix& flat_obs, bool train) {
  if (flat_obs.cols != obs_width()) {
    throw std::invalid_argument("StnPolicy::logits: observation width mismatch");
  }
  Matrix rows = reshape(flat_obs, flat_obs.rows * k_, row_width());
  Matrix z = net_.forward(rows, train);
  return reshape(z, flat_obs.rows, k_);
}

Matrix StnPolicy::backward(const Matrix& dlogits) {
  Matrix dz = reshape(dlogits, dlogits.rows * k_, 1);
  Matrix drows = net_.backward(dz);
  return reshape(drows, dlogits.rows, obs_width());
}

std::unique_ptr<PolicyNet> StnPolicy::clone() const {
  return std::make_unique<StnPolicy>(*this);
}

MlpPolicy::MlpPolicy(EncodingScheme enc, int num_actions, int row_width,
                     const MlpConfig& cfg, RngStream& rng)
    : enc_(enc),
      k_(num_actions),
      n_(row_width),
      net_(build_mlp_net(num_actions * row_width, num_actions, cfg, 0.01, rng)) {}

MlpPolicy::MlpPolicy(EncodingScheme enc, int num_actions, int row_width,
                     FeedForwardNet net)
    : enc_(enc), k_(num_actions), n_(row_width), net_(std::move(net)) {
  if (net_.in_width() != k_ * n_ || net_.out_width() != k_) {
    throw std::invalid_argument("MlpPolicy: net shape mismatch");
  }
}

Matrix MlpPolicy::logits(const Matrix& flat_obs, bool train) {
  if (flat_obs.cols != obs_width()) {
    throw std::invalid_argument("MlpPolicy::logits: observation width mismatch");
  }
  return net_.forward(flat_obs, train);
}

Matrix MlpPolicy::backward(const Matrix& dlogits) { return net_.backward(dlogits); }

std::unique_ptr<PolicyNet> MlpPolicy::clone() const {
  return std::make_unique<MlpPolicy>(*this);
}

std::unique_ptr<PolicyNet> policy_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const std::string kind = j.at("kind").get<std::string>();
  EncodingScheme enc = encoding_from_string(j.at("encoding").get<std::string>());
  int k = j.at("num_actions").get<int>();
  int n = j.at("row_width").get<int>();
  FeedForwardNet net = FeedForwardNet::from_json(j.at("net").dump());
  if (kind == "stn") return std::make_unique<StnPolicy>(enc, k, std::move(net));
  if (kind == "mlp") return std::make_unique<MlpPolicy>(enc, k, n, std::move(net));
  throw std::invalid_argument("unknown policy kind: " + kind);
}

std::unique_ptr<PolicyNet> load_policy(const std::string& path) {
  return policy_from_json(read_text_file(path));
}

void save_policy(const PolicyNet& policy, const std::string& path) {
  write_text_file(path, policy.to_json());
}

Critic::Critic(EncodingScheme enc, int num_actions, int row_width, RngStream& rng)
    : enc_(enc),
      net_(build_mlp_net(num_actions * row_width, 1, MlpConfig{}, 1.0, rng)) {}

Critic::Critic(EncodingScheme enc, FeedForwardNet net)
    : enc_(enc), net_(std::move(net)) {
  if (net_.out_width() != 1) throw std::invalid_argument("Critic: net must be scalar");
}

Vector Critic::values(const Matrix& flat_obs, bool train) {
  Matrix v = net_.forward(flat_obs, train);
  return v.data;
}

double Critic::value_one(const Matrix& obs) {
  return values(flatten_observation(obs), false)[0];
}

void Critic::backward(const Vector& dvalues) {
  Matrix dv(static_cast<int>(dvalues.size()), 1);
  dv.data = dvalues;
  net_.backward(dv);
}

std::string Critic::to_json() const {
  nlohmann::json j;
  j["kind"] = "critic";
  j["encoding"] = stnq::to_string(enc_);
  j["net"] = net_json_obj(net_);
  return j.dump(2);
}

Critic Critic::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("kind").get<std::string>() != "critic") {
    throw std::invalid_argument("not a critic checkpoint");
  }
  EncodingScheme enc = encoding_from_string(j.at("encoding").get<std::string>());
  return Critic(enc, FeedForwardNet::from_json(j.at("net").dump()));
}

Matrix flatten_observation(const Matrix& obs) {
  return reshape(obs, 1, obs.rows * obs.cols);
}

Vector policy_logits_one(PolicyNet& policy, const Matrix& obs) {
  return policy.logits(flatten_observation(obs), false).data;
}

ActSample act_stochastic(PolicyNet& policy, const Matrix& obs, RngStream& rng) {
  Vector lp = log_softmax(policy_logits_one(policy, obs));
  Vector p(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) p[i] = std::exp(lp[i]);
  ActSample out;
  out.action = rng.categorical(p);
  out.log_prob = lp[out.action];
  return out;
}

int act_deterministic(PolicyNet& policy, const Matrix& obs) {
  Vector z = policy_logits_one(policy, obs);
  int best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = static_cast<int>(i);
  }
  return best;
}

double policy_entropy(PolicyNet& policy, const Matrix& obs) {
  return entropy_from_logits(policy_logits_one(policy, obs));
}

}  // namespace stnq

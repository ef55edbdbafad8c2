#include "stnq/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <stdexcept>

#include "stnq/autodiff.hpp"
#include "stnq/textio.hpp"

namespace stnq {

void PpoConfig::validate(int num_envs) const {
  if (num_envs < 1) throw std::invalid_argument("ppo: need at least one env");
  if (learning_rate <= 0.0) throw std::invalid_argument("ppo: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("ppo: batch_size must be >= 1");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("ppo: gae_lambda must be in (0,1]");
  }
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw std::invalid_argument("ppo: clip_eps must be in (0,1)");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must be in (0,1]");
  if (minibatch_size < 1 || (static_cast<long long>(batch_size) * num_envs) % minibatch_size != 0) {
    throw std::invalid_argument("ppo: minibatch_size must divide the combined batch");
  }
  if (epochs_per_batch < 1) throw std::invalid_argument("ppo: epochs_per_batch must be >= 1");
  if (total_steps < 1) throw std::invalid_argument("ppo: total_steps must be >= 1");
  const long long combined = static_cast<long long>(batch_size) * num_envs;
  if (total_steps % combined != 0) {
    throw std::invalid_argument("ppo: total_steps must be a multiple of batch_size * num_envs");
  }
  if (moving_avg_window < 1) throw std::invalid_argument("ppo: moving_avg_window must be >= 1");
}

namespace {

void check_policy_compat(const std::vector<QueueEnv>& envs, PolicyNet& policy,
                         Critic& critic) {
  if (envs.empty()) throw std::invalid_argument("collect_rollout: no envs");
  for (const QueueEnv& env : envs) {
    const EnvParams& p = env.params();
    if (p.num_queues != policy.num_actions()) {
      throw std::invalid_argument("collect_rollout: action count != queue count");
    }
    if (encoding_width(policy.encoding()) != policy.row_width()) {
      throw std::invalid_argument("collect_rollout: encoding width mismatch");
    }
  }
  if (critic.encoding() != policy.encoding()) {
    throw std::invalid_argument("collect_rollout: critic/policy encoding mismatch");
  }
}

void rollout_one_env(QueueEnv& env, PolicyNet& policy, Critic& critic,
                     int steps, int env_index, RolloutBatch& out) {
  const EnvParams& p = env.params();
  const int base = env_index * steps;
  for (int t = 0; t < steps; ++t) {
    Matrix obs = encode_observation(env.state(), p, policy.encoding());
    Matrix flat = flatten_observation(obs);
    const int row = base + t;
    std::copy(flat.data.begin(), flat.data.end(), out.obs.row(row));
    out.values_old[row] = critic.values(flat, false)[0];
    ActSample a = act_stochastic(policy, obs, env.rng());
    double cost = env.step(a.action);
    out.actions[row] = a.action;
    out.log_probs_old[row] = a.log_prob;
    out.costs[row] = cost;
    out.env_ids[row] = env_index;
  }
  Matrix last = encode_observation(env.state(), p, policy.encoding());
  out.bootstrap_values[env_index] = critic.values(flatten_observation(last), false)[0];
}

}  // namespace

RolloutBatch collect_rollout(std::vector<QueueEnv>& envs, PolicyNet& policy,
                             Critic& critic, int steps_per_env, int jobs) {
  check_policy_compat(envs, policy, critic);
  if (steps_per_env < 1) throw std::invalid_argument("collect_rollout: steps must be >= 1");
  const int num_envs = static_cast<int>(envs.size());
  RolloutBatch batch;
  batch.num_envs = num_envs;
  batch.steps_per_env = steps_per_env;
  batch.obs = Matrix(num_envs * steps_per_env, policy.obs_width());
  batch.actions.assign(batch.size(), 0);
  batch.log_probs_old.assign(batch.size(), 0.0);
  batch.costs.assign(batch.size(), 0.0);
  batch.values_old.assign(batch.size(), 0.0);
  batch.dones.assign(batch.size(), 0);
  batch.env_ids.assign(batch.size(), 0);
  batch.bootstrap_values.assign(num_envs, 0.0);

  if (jobs <= 1 || num_envs == 1) {
    for (int e = 0; e < num_envs; ++e) {
      rollout_one_env(envs[e], policy, critic, steps_per_env, e, batch);
    }
  } else {
    // Materialize the exponentiated-weight caches before sharing the nets
    // read-only across threads.
    for (DenseLayer& l : policy.net().layers()) l.effective_weights();
    for (DenseLayer& l : critic.net().layers()) l.effective_weights();
    const int workers = std::min(jobs, num_envs);
    std::vector<std::future<void>> futs;
    futs.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      futs.push_back(std::async(std::launch::async, [&, w] {
        for (int e = w; e < num_envs; e += workers) {
          rollout_one_env(envs[e], policy, critic, steps_per_env, e, batch);
        }
      }));
    }
    for (std::future<void>& f : futs) f.get();
  }
  for (const QueueEnv& env : envs) batch.overflowed = batch.overflowed || env.overflowed();
  return batch;
}

GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda) {
  GaeResult out;
  out.advantages.assign(batch.size(), 0.0);
  out.value_targets.assign(batch.size(), 0.0);
  for (int e = 0; e < batch.num_envs; ++e) {
    const int base = e * batch.steps_per_env;
    double acc = 0.0;
    for (int t = batch.steps_per_env - 1; t >= 0; --t) {
      const int i = base + t;
      const double next_v = t + 1 < batch.steps_per_env ? batch.values_old[i + 1]
                                                        : batch.bootstrap_values[e];
      const double not_done = batch.dones[i] ? 0.0 : 1.0;
      const double delta = -batch.costs[i] + gamma * next_v * not_done - batch.values_old[i];
      acc = delta + gamma * lambda * not_done * acc;
      out.advantages[i] = acc;
      out.value_targets[i] = acc + batch.values_old[i];
    }
  }
  return out;
}

void normalize_advantages(Vector& adv) {
  const std::size_t n = adv.size();
  if (n < 2) return;
  double mean = 0.0;
  for (double v : adv) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : adv) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    for (double& v : adv) v = 0.0;
    return;
  }
  for (double& v : adv) v = (v - mean) / sd;
}

Minibatch gather_minibatch(const RolloutBatch& batch, const GaeResult& gae,
                           const std::vector<int>& indices) {
  Minibatch mb;
  mb.obs = Matrix(static_cast<int>(indices.size()), batch.obs.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int i = indices[r];
    std::copy(batch.obs.row(i), batch.obs.row(i) + batch.obs.cols,
              mb.obs.row(static_cast<int>(r)));
    mb.actions.push_back(batch.actions[i]);
    mb.log_probs_old.push_back(batch.log_probs_old[i]);
    mb.advantages.push_back(gae.advantages[i]);
    mb.value_targets.push_back(gae.value_targets[i]);
  }
  return mb;
}

PpoDiagnostics ppo_loss_and_grad(PolicyNet& policy, Critic& critic,
                                 const Minibatch& mb, const PpoConfig& cfg,
                                 bool accumulate_grads) {
  const int m = mb.obs.rows;
  if (m < 1) throw std::invalid_argument("ppo_loss: empty minibatch");
  const int k = policy.num_actions();
  const double inv_m = 1.0 / static_cast<double>(m);

  Matrix logits = policy.logits(mb.obs, accumulate_grads);
  Vector values = critic.values(mb.obs, accumulate_grads);

  PpoDiagnostics diag;
  Matrix dlogits(m, k);
  Vector dvalues(m, 0.0);
  int clipped = 0;
  for (int i = 0; i < m; ++i) {
    Vector z(logits.row(i), logits.row(i) + k);
    Vector lp = log_softmax(z);
    const int a = mb.actions[i];
    const double ratio = std::exp(lp[a] - mb.log_probs_old[i]);
    const double adv = mb.advantages[i];
    const double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
    const double surr = std::min(ratio * adv, std::clamp(ratio, lo, hi) * adv);
    const bool pass = adv >= 0.0 ? ratio <= hi : ratio >= lo;
    if (!pass) ++clipped;

    double h = 0.0;
    for (int j = 0; j < k; ++j) h -= std::exp(lp[j]) * lp[j];

    diag.policy_loss -= surr * inv_m;
    diag.entropy += h * inv_m;
    diag.mean_ratio += ratio * inv_m;

    const double verr = values[i] - mb.value_targets[i];
    diag.value_loss += verr * verr * inv_m;
    dvalues[i] = cfg.value_coef * 2.0 * verr * inv_m;

    // d loss / d z_j: surrogate term only when the ratio gradient passes the
    // clip; entropy bonus always.
    const double surr_coef = pass ? -adv * ratio * inv_m : 0.0;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(lp[j]);
      const double ind = j == a ? 1.0 : 0.0;
      double g = surr_coef * (ind - p);
      g += cfg.entropy_coef * inv_m * p * (lp[j] + h);
      dlogits(i, j) = g;
    }
  }
  diag.clip_fraction = static_cast<double>(clipped) * inv_m;
  diag.loss = diag.policy_loss + cfg.value_coef * diag.value_loss -
              cfg.entropy_coef * diag.entropy;
  if (!std::isfinite(diag.loss)) {
    throw std::runtime_error("ppo: non-finite loss (policy=" + fmt_double(diag.policy_loss) +
                             " value=" + fmt_double(diag.value_loss) + ")");
  }
  if (accumulate_grads) {
    policy.backward(dlogits);
    critic.backward(dvalues);
  }
  return diag;
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out << "step,env_id,moving_avg_cost,loss,clip_fraction,entropy,learning_rate\n";
  for (const TrainLogRow& r : log) {
    out << r.step << "," << r.env_id << "," << fmt_double(r.moving_avg_cost) << ","
        << fmt_double(r.loss) << "," << fmt_double(r.clip_fraction) << ","
        << fmt_double(r.entropy) << "," << fmt_double(r.learning_rate) << "\n";
  }
  return out.str();
}

void MovingAverage::push(double v) {
  buf_.push_back(v);
  sum_ += v;
  if (static_cast<int>(buf_.size()) > window_) {
    sum_ -= buf_.front();
    buf_.pop_front();
  }
}

double MovingAverage::value() const {
  if (buf_.empty()) return 0.0;
  return sum_ / static_cast<double>(buf_.size());
}

namespace {

bool params_finite(FeedForwardNet& net) {
  for (ParamView& pv : net.params()) {
    for (std::size_t i = 0; i < pv.size; ++i) {
      if (!std::isfinite(pv.value[i])) return false;
    }
  }
  return true;
}

void restore_net(FeedForwardNet& dst, const FeedForwardNet& snapshot) {
  dst = snapshot;
  dst.mark_dirty();
}

}  // namespace

TrainOutcome train_ppo(PolicyNet& policy, Critic& critic,
                       const std::vector<EnvParams>& env_params,
                       const PpoConfig& cfg, int jobs) {
  const int num_envs = static_cast<int>(env_params.size());
  cfg.validate(num_envs);

  std::vector<QueueEnv> envs;
  envs.reserve(num_envs);
  for (int e = 0; e < num_envs; ++e) {
    envs.emplace_back(env_params[e], mix_seed(cfg.seed, static_cast<std::uint64_t>(e)));
  }
  // shuffle stream in a separate seed domain from the env streams
  RngStream shuffle_rng(mix_seed(cfg.seed, (1ULL << 32) + 0x5A5A5A5AULL));

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState adam_policy(adam_cfg), adam_critic(adam_cfg);

  const long long combined = static_cast<long long>(cfg.batch_size) * num_envs;
  const long long num_batches = cfg.total_steps / combined;
  std::vector<MovingAverage> avg(num_envs, MovingAverage(cfg.moving_avg_window));

  TrainOutcome out;
  for (long long bi = 0; bi < num_batches; ++bi) {
    const FeedForwardNet policy_snapshot = policy.net();
    const FeedForwardNet critic_snapshot = critic.net();

    if (cfg.episodic_resets) {
      for (QueueEnv& env : envs) env.reset();
    }
    RolloutBatch batch = collect_rollout(envs, policy, critic, cfg.batch_size, jobs);
    out.overflowed = out.overflowed || batch.overflowed;
    for (int e = 0; e < num_envs; ++e) {
      for (int t = 0; t < batch.steps_per_env; ++t) {
        avg[e].push(batch.costs[e * batch.steps_per_env + t]);
      }
    }

    GaeResult gae = compute_gae(batch, cfg.gamma, cfg.gae_lambda);
    normalize_advantages(gae.advantages);

    double loss_sum = 0.0, clip_sum = 0.0, entropy_sum = 0.0;
    int updates = 0;
    bool failed = false;
    std::vector<int> order(batch.size());
    for (int i = 0; i < batch.size(); ++i) order[i] = i;
    try {
      for (int epoch = 0; epoch < cfg.epochs_per_batch && !failed; ++epoch) {
        // Fisher-Yates off the dedicated shuffle stream
        for (int i = batch.size() - 1; i > 0; --i) {
          const int j = static_cast<int>(shuffle_rng.bits() % static_cast<std::uint64_t>(i + 1));
          std::swap(order[i], order[j]);
        }
        for (int start = 0; start < batch.size(); start += cfg.minibatch_size) {
          std::vector<int> idx(order.begin() + start,
                               order.begin() + start + cfg.minibatch_size);
          Minibatch mb = gather_minibatch(batch, gae, idx);
          policy.net().zero_grad();
          critic.net().zero_grad();
          PpoDiagnostics diag = ppo_loss_and_grad(policy, critic, mb, cfg, true);
          // clip per network: a blown-up value loss must not be able to
          // scale the policy gradient away
          clip_grad_norm(policy.net().params(), cfg.max_grad_norm);
          clip_grad_norm(critic.net().params(), cfg.max_grad_norm);
          adam_policy.step(policy.net().params());
          adam_critic.step(critic.net().params());
          policy.net().mark_dirty();
          critic.net().mark_dirty();
          loss_sum += diag.loss;
          clip_sum += diag.clip_fraction;
          entropy_sum += diag.entropy;
          ++updates;
        }
      }
    } catch (const std::runtime_error&) {
      failed = true;
    }
    if (!failed && (!params_finite(policy.net()) || !params_finite(critic.net()))) {
      failed = true;
    }
    if (failed) {
      restore_net(policy.net(), policy_snapshot);
      restore_net(critic.net(), critic_snapshot);
      out.diverged = true;
    }

    const double denom = updates > 0 ? static_cast<double>(updates) : 1.0;
    for (int e = 0; e < num_envs; ++e) {
      TrainLogRow row;
      row.step = (bi + 1) * cfg.batch_size;
      row.env_id = e;
      row.moving_avg_cost = avg[e].value();
      row.loss = loss_sum / denom;
      row.clip_fraction = clip_sum / denom;
      row.entropy = entropy_sum / denom;
      row.learning_rate = cfg.learning_rate;
      out.log.push_back(row);
    }
    out.steps_per_env = (bi + 1) * cfg.batch_size;
    if (out.diverged) break;
  }
  return out;
}

}  // namespace stnq

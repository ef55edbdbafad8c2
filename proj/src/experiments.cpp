#include "stnq/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "stnq/baselines.hpp"
#include "stnq/textio.hpp"

namespace stnq {

namespace {

using ordered_json = nlohmann::ordered_json;

// Disjoint tag blocks so init, rollout and eval streams derived from one
// master seed can never collide; the low bits index the env slot.
constexpr std::uint64_t kStnInitTag = 0x10000;
constexpr std::uint64_t kMlpInitTag = 0x20000;
constexpr std::uint64_t kRolloutTag = 0x30000;
constexpr std::uint64_t kEvalTag = 0x40000;

}  // namespace

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::SingleEnv: return "single_env";
    case StudyKind::Generalization: return "generalization";
    case StudyKind::DpDemo: return "dp_demo";
  }
  throw std::invalid_argument("unknown study kind");
}

StudyKind study_from_string(const std::string& s) {
  if (s == "single_env" || s == "single-env") return StudyKind::SingleEnv;
  if (s == "generalization") return StudyKind::Generalization;
  if (s == "dp_demo" || s == "dp-demo") return StudyKind::DpDemo;
  throw std::invalid_argument("unknown study kind: " + s);
}

Vector default_input_scale(EncodingScheme enc) {
  // Saturation starts around q = fan_in * scale, so 25 keeps the first layer
  // discriminating across the backlog an unstabilized policy accumulates in
  // one episodic batch while staying sensitive to steady-state queue sizes.
  constexpr double kQueueScale = 25.0;
  switch (enc) {
    case EncodingScheme::SingleHopFull: return {kQueueScale, 1.0, 1.0, 1.0};
    case EncodingScheme::SingleHopBare: return {kQueueScale, 1.0};
    case EncodingScheme::MultiPathFull:
    case EncodingScheme::MultiPathBare: return {};
  }
  throw std::invalid_argument("unknown encoding scheme");
}

StnConfig default_stn_config(EncodingScheme enc) {
  StnConfig cfg;
  cfg.input_scale = default_input_scale(enc);
  return cfg;
}

void ExperimentConfig::validate() const {
  if (num_envs < 1) throw std::invalid_argument("config: num_envs must be >= 1");
  if (train_split < 1 || train_split > num_envs) {
    throw std::invalid_argument("config: train_split must be in [1, num_envs]");
  }
  if (check.num_traj < 1) throw std::invalid_argument("config: check.num_traj must be >= 1");
  if (check.traj_len < 1) throw std::invalid_argument("config: check.traj_len must be >= 1");
  if (!(check.threshold > 0.0)) throw std::invalid_argument("config: check.threshold must be > 0");
  if (check.max_rejects < 1) throw std::invalid_argument("config: check.max_rejects must be >= 1");

  const bool singlehop_encoding =
      encoding == EncodingScheme::SingleHopFull || encoding == EncodingScheme::SingleHopBare;
  if (singlehop_encoding != (env_kind == EnvKind::SingleHop)) {
    throw std::invalid_argument("config: encoding does not match env_kind");
  }

  if (stn.hidden_width < 1 || stn.hidden_layers < 1) {
    throw std::invalid_argument("config: stn hidden sizes must be >= 1");
  }
  if (!(stn.relu_bound > 0.0)) throw std::invalid_argument("config: stn.relu_bound must be > 0");
  if (!(stn.init_noise_sd >= 0.0)) {
    throw std::invalid_argument("config: stn.init_noise_sd must be >= 0");
  }
  if (!stn.input_scale.empty() &&
      stn.input_scale.size() != static_cast<std::size_t>(encoding_width(encoding))) {
    throw std::invalid_argument("config: stn.input_scale must match the encoding width");
  }
  if (mlp.hidden_width < 1 || mlp.hidden_layers < 1) {
    throw std::invalid_argument("config: mlp hidden sizes must be >= 1");
  }

  if (train_steps_per_env < 1) {
    throw std::invalid_argument("config: train_steps_per_env must be >= 1");
  }
  // The studies set total_steps to train_steps_per_env (times the training
  // split, which preserves divisibility) and the rollout seed per run.
  PpoConfig probe = ppo_stn;
  probe.total_steps = train_steps_per_env;
  probe.validate(1);
  probe = ppo_mlp;
  probe.total_steps = train_steps_per_env;
  probe.validate(1);

  if (eval_num_traj < 1) throw std::invalid_argument("config: eval_num_traj must be >= 1");
  if (eval_traj_len < 1) throw std::invalid_argument("config: eval_traj_len must be >= 1");
  if (!(outlier_threshold > 0.0)) {
    throw std::invalid_argument("config: outlier_threshold must be > 0");
  }
  if (!(histogram_bin_width > 0.0)) {
    throw std::invalid_argument("config: histogram_bin_width must be > 0");
  }
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
  if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");

  dp_spec.validate();
  if (dp_region_bound < 1) throw std::invalid_argument("config: dp_region_bound must be >= 1");
  if (dp_schedule.empty()) throw std::invalid_argument("config: dp_schedule must not be empty");
  for (std::size_t i = 0; i < dp_schedule.size(); ++i) {
    if (i > 0 && dp_schedule[i] <= dp_schedule[i - 1]) {
      throw std::invalid_argument("config: dp_schedule must be strictly increasing");
    }
  }
  if (dp_schedule.front() <= dp_region_bound) {
    throw std::invalid_argument("config: dp_schedule must start above dp_region_bound");
  }
}

std::uint64_t ExperimentConfig::effective_eval_seed() const {
  return eval_seed != 0 ? eval_seed : mix_seed(master_seed, kEvalTag);
}

std::uint64_t policy_init_seed(std::uint64_t master_seed, const std::string& arch,
                               int env_slot) {
  if (env_slot < 0) throw std::invalid_argument("seed: env_slot must be >= 0");
  std::uint64_t tag = 0;
  if (arch == "stn") tag = kStnInitTag;
  else if (arch == "mlp") tag = kMlpInitTag;
  else throw std::invalid_argument("seed: unknown architecture '" + arch + "'");
  return mix_seed(master_seed, tag + static_cast<std::uint64_t>(env_slot));
}

std::uint64_t rollout_seed(std::uint64_t master_seed, int env_slot) {
  if (env_slot < 0) throw std::invalid_argument("seed: env_slot must be >= 0");
  return mix_seed(master_seed, kRolloutTag + static_cast<std::uint64_t>(env_slot));
}

namespace {

ordered_json dist_to_json(const DiscreteDist& d) {
  ordered_json j;
  switch (d.kind) {
    case DiscreteDist::Kind::Poisson: j["poisson"] = d.rate; break;
    case DiscreteDist::Kind::Bernoulli: j["bernoulli"] = d.rate; break;
    case DiscreteDist::Kind::Finite:
      j["values"] = d.values;
      j["probs"] = d.probs;
      break;
  }
  return j;
}

DiscreteDist dist_from_json(const ordered_json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: distribution must be an object");
  if (j.contains("poisson")) {
    if (j.size() != 1) throw std::invalid_argument("config: poisson distribution takes one key");
    return DiscreteDist::poisson(j.at("poisson").get<double>());
  }
  if (j.contains("bernoulli")) {
    if (j.size() != 1) {
      throw std::invalid_argument("config: bernoulli distribution takes one key");
    }
    return DiscreteDist::bernoulli(j.at("bernoulli").get<double>());
  }
  if (j.contains("values") && j.contains("probs")) {
    if (j.size() != 2) throw std::invalid_argument("config: finite distribution takes two keys");
    return DiscreteDist::finite(j.at("values").get<std::vector<long long>>(),
                                j.at("probs").get<std::vector<double>>());
  }
  throw std::invalid_argument("config: unrecognized distribution object");
}

ordered_json check_to_json(const CheckConfig& c) {
  ordered_json j;
  j["num_traj"] = c.num_traj;
  j["traj_len"] = c.traj_len;
  j["threshold"] = c.threshold;
  j["max_rejects"] = c.max_rejects;
  return j;
}

CheckConfig check_from_json(const ordered_json& j, CheckConfig c) {
  for (const auto& [key, val] : j.items()) {
    if (key == "num_traj") c.num_traj = val.get<int>();
    else if (key == "traj_len") c.traj_len = val.get<long long>();
    else if (key == "threshold") c.threshold = val.get<double>();
    else if (key == "max_rejects") c.max_rejects = val.get<int>();
    else throw std::invalid_argument("config: unknown check key '" + key + "'");
  }
  return c;
}

ordered_json stn_to_json(const StnConfig& c) {
  ordered_json j;
  j["hidden_width"] = c.hidden_width;
  j["hidden_layers"] = c.hidden_layers;
  j["relu_bound"] = c.relu_bound;
  j["init_noise_sd"] = c.init_noise_sd;
  j["input_scale"] = c.input_scale;
  return j;
}

StnConfig stn_from_json(const ordered_json& j, StnConfig c) {
  for (const auto& [key, val] : j.items()) {
    if (key == "hidden_width") c.hidden_width = val.get<int>();
    else if (key == "hidden_layers") c.hidden_layers = val.get<int>();
    else if (key == "relu_bound") c.relu_bound = val.get<double>();
    else if (key == "init_noise_sd") c.init_noise_sd = val.get<double>();
    else if (key == "input_scale") c.input_scale = val.get<Vector>();
    else throw std::invalid_argument("config: unknown stn key '" + key + "'");
  }
  return c;
}

ordered_json mlp_to_json(const MlpConfig& c) {
  ordered_json j;
  j["hidden_width"] = c.hidden_width;
  j["hidden_layers"] = c.hidden_layers;
  j["activation"] = to_string(c.activation);
  return j;
}

MlpConfig mlp_from_json(const ordered_json& j, MlpConfig c) {
  for (const auto& [key, val] : j.items()) {
    if (key == "hidden_width") c.hidden_width = val.get<int>();
    else if (key == "hidden_layers") c.hidden_layers = val.get<int>();
    else if (key == "activation") c.activation = activation_from_string(val.get<std::string>());
    else throw std::invalid_argument("config: unknown mlp key '" + key + "'");
  }
  return c;
}

// total_steps and seed are omitted: the studies compute both per run.
ordered_json ppo_to_json(const PpoConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["minibatch_size"] = c.minibatch_size;
  j["epochs_per_batch"] = c.epochs_per_batch;
  j["gae_lambda"] = c.gae_lambda;
  j["clip_eps"] = c.clip_eps;
  j["entropy_coef"] = c.entropy_coef;
  j["gamma"] = c.gamma;
  j["value_coef"] = c.value_coef;
  j["max_grad_norm"] = c.max_grad_norm;
  j["moving_avg_window"] = c.moving_avg_window;
  j["episodic_resets"] = c.episodic_resets;
  return j;
}

PpoConfig ppo_from_json(const ordered_json& j, PpoConfig c) {
  for (const auto& [key, val] : j.items()) {
    if (key == "learning_rate") c.learning_rate = val.get<double>();
    else if (key == "batch_size") c.batch_size = val.get<int>();
    else if (key == "minibatch_size") c.minibatch_size = val.get<int>();
    else if (key == "epochs_per_batch") c.epochs_per_batch = val.get<int>();
    else if (key == "gae_lambda") c.gae_lambda = val.get<double>();
    else if (key == "clip_eps") c.clip_eps = val.get<double>();
    else if (key == "entropy_coef") c.entropy_coef = val.get<double>();
    else if (key == "gamma") c.gamma = val.get<double>();
    else if (key == "value_coef") c.value_coef = val.get<double>();
    else if (key == "max_grad_norm") c.max_grad_norm = val.get<double>();
    else if (key == "moving_avg_window") c.moving_avg_window = val.get<int>();
    else if (key == "episodic_resets") c.episodic_resets = val.get<bool>();
    else throw std::invalid_argument("config: unknown ppo key '" + key + "'");
  }
  return c;
}

ordered_json dp_to_json(const ExperimentConfig& cfg) {
  ordered_json spec;
  spec["arrivals"] = {dist_to_json(cfg.dp_spec.arrivals[0]), dist_to_json(cfg.dp_spec.arrivals[1])};
  spec["capacities"] = {dist_to_json(cfg.dp_spec.capacities[0]),
                        dist_to_json(cfg.dp_spec.capacities[1])};
  ordered_json j;
  j["spec"] = spec;
  j["region_bound"] = cfg.dp_region_bound;
  j["schedule"] = cfg.dp_schedule;
  return j;
}

void dp_from_json(const ordered_json& j, ExperimentConfig& cfg) {
  for (const auto& [key, val] : j.items()) {
    if (key == "spec") {
      for (const auto& [skey, sval] : val.items()) {
        const bool arrivals = skey == "arrivals";
        if (!arrivals && skey != "capacities") {
          throw std::invalid_argument("config: unknown dp spec key '" + skey + "'");
        }
        if (!sval.is_array() || sval.size() != 2) {
          throw std::invalid_argument("config: dp spec " + skey + " must list two distributions");
        }
        auto& target = arrivals ? cfg.dp_spec.arrivals : cfg.dp_spec.capacities;
        target[0] = dist_from_json(sval.at(0));
        target[1] = dist_from_json(sval.at(1));
      }
    } else if (key == "region_bound") {
      cfg.dp_region_bound = val.get<int>();
    } else if (key == "schedule") {
      cfg.dp_schedule = val.get<std::vector<int>>();
    } else {
      throw std::invalid_argument("config: unknown dp key '" + key + "'");
    }
  }
}

}  // namespace

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  ordered_json j;
  j["study"] = to_string(cfg.study);
  j["env_kind"] = to_string(cfg.env_kind);
  j["num_envs"] = cfg.num_envs;
  j["train_split"] = cfg.train_split;
  j["master_seed"] = cfg.master_seed;
  j["check"] = check_to_json(cfg.check);
  j["encoding"] = to_string(cfg.encoding);
  j["stn"] = stn_to_json(cfg.stn);
  j["mlp"] = mlp_to_json(cfg.mlp);
  j["ppo_stn"] = ppo_to_json(cfg.ppo_stn);
  j["ppo_mlp"] = ppo_to_json(cfg.ppo_mlp);
  j["train_steps_per_env"] = cfg.train_steps_per_env;
  j["eval_num_traj"] = cfg.eval_num_traj;
  j["eval_traj_len"] = cfg.eval_traj_len;
  j["eval_seed"] = cfg.eval_seed;
  j["outlier_threshold"] = cfg.outlier_threshold;
  j["histogram_bin_width"] = cfg.histogram_bin_width;
  j["output_dir"] = cfg.output_dir;
  j["jobs"] = cfg.jobs;
  j["dp"] = dp_to_json(cfg);
  return j.dump(2) + "\n";
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

  ExperimentConfig cfg;
  bool encoding_set = false;
  try {
    // env_kind first so an omitted encoding can derive from it regardless of
    // key order.
    if (j.contains("env_kind")) {
      cfg.env_kind = env_kind_from_string(j.at("env_kind").get<std::string>());
    }
    for (const auto& [key, val] : j.items()) {
      if (key == "env_kind") continue;
      if (key == "study") cfg.study = study_from_string(val.get<std::string>());
      else if (key == "num_envs") cfg.num_envs = val.get<int>();
      else if (key == "train_split") cfg.train_split = val.get<int>();
      else if (key == "master_seed") cfg.master_seed = val.get<std::uint64_t>();
      else if (key == "check") cfg.check = check_from_json(val, cfg.check);
      else if (key == "encoding") {
        cfg.encoding = encoding_from_string(val.get<std::string>());
        encoding_set = true;
      } else if (key == "stn") cfg.stn = stn_from_json(val, cfg.stn);
      else if (key == "mlp") cfg.mlp = mlp_from_json(val, cfg.mlp);
      else if (key == "ppo_stn") cfg.ppo_stn = ppo_from_json(val, cfg.ppo_stn);
      else if (key == "ppo_mlp") cfg.ppo_mlp = ppo_from_json(val, cfg.ppo_mlp);
      else if (key == "train_steps_per_env") cfg.train_steps_per_env = val.get<long long>();
      else if (key == "eval_num_traj") cfg.eval_num_traj = val.get<int>();
      else if (key == "eval_traj_len") cfg.eval_traj_len = val.get<long long>();
      else if (key == "eval_seed") cfg.eval_seed = val.get<std::uint64_t>();
      else if (key == "outlier_threshold") cfg.outlier_threshold = val.get<double>();
      else if (key == "histogram_bin_width") cfg.histogram_bin_width = val.get<double>();
      else if (key == "output_dir") cfg.output_dir = val.get<std::string>();
      else if (key == "jobs") cfg.jobs = val.get<int>();
      else if (key == "dp") dp_from_json(val, cfg);
      else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!encoding_set) cfg.encoding = default_encoding(cfg.env_kind, true);
  // An omitted input_scale tracks the (possibly derived) encoding rather than
  // the struct default, which is single-hop shaped.
  const bool scale_set =
      j.contains("stn") && j.at("stn").is_object() && j.at("stn").contains("input_scale");
  if (!scale_set) cfg.stn.input_scale = default_input_scale(cfg.encoding);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_text_file(path));
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  write_text_file(path, serialize_experiment_config(cfg));
}

namespace {

constexpr const char* kEvalHeader = "env_id,policy,J,J0,in_train_split,overflowed,diverged";

long long parse_ll(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("csv: bad ") + what + " '" + s + "'");
  }
}

double parse_d(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("csv: bad ") + what + " '" + s + "'");
  }
}

bool parse_flag(const std::string& s, const char* what) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw std::invalid_argument(std::string("csv: bad ") + what + " '" + s + "'");
}

}  // namespace

std::string eval_records_to_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  out << kEvalHeader << '\n';
  for (const EvalRecord& r : records) {
    out << r.env_id << ',' << r.policy << ',' << fmt_double(r.j) << ',' << fmt_double(r.j0) << ','
        << (r.in_train_split ? 1 : 0) << ',' << (r.overflowed ? 1 : 0) << ','
        << (r.diverged ? 1 : 0) << '\n';
  }
  return out.str();
}

std::vector<EvalRecord> eval_records_from_csv(const std::string& csv) {
  const std::vector<std::string> lines = split(csv, '\n');
  if (lines.empty() || trim(lines[0]) != kEvalHeader) {
    throw std::invalid_argument("eval records csv: missing header");
  }
  std::vector<EvalRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 7) {
      throw std::invalid_argument("eval records csv: expected 7 fields, got line '" + line + "'");
    }
    EvalRecord r;
    r.env_id = static_cast<int>(parse_ll(f[0], "env_id"));
    r.policy = f[1];
    r.j = parse_d(f[2], "J");
    r.j0 = parse_d(f[3], "J0");
    r.in_train_split = parse_flag(f[4], "in_train_split");
    r.overflowed = parse_flag(f[5], "overflowed");
    r.diverged = parse_flag(f[6], "diverged");
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

// Shared eval loop: argmax rollouts on seeded streams; an overflowing
// trajectory contributes the queue-cap cost and flags the record.
EvalRecord evaluate_core(const std::function<int(QueueEnv&)>& act, std::string name,
                         const EnvParams& params, double baseline_cost, int env_id,
                         bool in_train_split, int num_traj, long long traj_len,
                         std::uint64_t eval_seed) {
  if (num_traj < 1) throw std::invalid_argument("eval: num_traj must be >= 1");
  if (traj_len < 1) throw std::invalid_argument("eval: traj_len must be >= 1");
  if (!(baseline_cost > 0.0)) throw std::invalid_argument("eval: baseline cost must be positive");
  double sum = 0.0;
  bool any_overflow = false;
  for (int t = 0; t < num_traj; ++t) {
    QueueEnv env(params, mix_seed(mix_seed(eval_seed, static_cast<std::uint64_t>(env_id)),
                                  static_cast<std::uint64_t>(t)));
    double total = 0.0;
    for (long long s = 0; s < traj_len && !env.overflowed(); ++s) {
      total += env.step(act(env));
    }
    if (env.overflowed()) {
      sum += static_cast<double>(kQueueCap);
      any_overflow = true;
    } else {
      sum += total / static_cast<double>(traj_len);
    }
  }
  EvalRecord r;
  r.env_id = env_id;
  r.policy = std::move(name);
  r.j = sum / num_traj;
  r.j0 = r.j / baseline_cost;
  r.in_train_split = in_train_split;
  r.overflowed = any_overflow;
  return r;
}

}  // namespace

EvalRecord evaluate_policy_on_env(PolicyNet& policy, const EnvParams& params,
                                  double baseline_cost, int env_id, bool in_train_split,
                                  int num_traj, long long traj_len, std::uint64_t eval_seed) {
  const EncodingScheme enc = policy.encoding();
  auto act = [&policy, &params, enc](QueueEnv& env) {
    return act_deterministic(policy, encode_observation(env.state(), params, enc));
  };
  return evaluate_core(act, policy.kind(), params, baseline_cost, env_id, in_train_split,
                       num_traj, traj_len, eval_seed);
}

EvalRecord evaluate_baseline_on_env(const EnvParams& params, double baseline_cost,
                                    int env_id, bool in_train_split, int num_traj,
                                    long long traj_len, std::uint64_t eval_seed) {
  const ActionFn rule = baseline_policy(params.kind);
  auto act = [&rule](QueueEnv& env) { return rule(env.state()); };
  const std::string name =
      params.kind == EnvKind::SingleHop ? "maxweight" : "shortest_queue";
  return evaluate_core(act, name, params, baseline_cost, env_id, in_train_split, num_traj,
                       traj_len, eval_seed);
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(v.size()));
  return out;
}

std::vector<std::string> policies_in_order(const std::vector<EvalRecord>& records) {
  std::vector<std::string> order;
  for (const EvalRecord& r : records) {
    if (std::find(order.begin(), order.end(), r.policy) == order.end()) order.push_back(r.policy);
  }
  return order;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records,
                                  double outlier_threshold) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  if (!(outlier_threshold > 0.0)) {
    throw std::invalid_argument("summarize: outlier threshold must be > 0");
  }
  std::vector<SummaryRow> rows;
  for (const std::string& pol : policies_in_order(records)) {
    for (const char* split : {"train", "test", "all"}) {
      std::vector<double> full;
      std::vector<double> kept;
      for (const EvalRecord& r : records) {
        if (r.policy != pol) continue;
        const bool in_split = std::string(split) == "all" ||
                              (r.in_train_split ? std::string(split) == "train"
                                                : std::string(split) == "test");
        if (!in_split) continue;
        full.push_back(r.j0);
        if (!(r.j0 > outlier_threshold)) kept.push_back(r.j0);
      }
      if (full.empty()) continue;  // policy has no records in this split
      SummaryRow row;
      row.policy = pol;
      row.split = split;
      row.count = static_cast<int>(full.size());
      const MeanStd f = mean_std(full);
      row.mean_j0 = f.mean;
      row.std_j0 = f.std;
      const MeanStd k = mean_std(kept);
      row.rejected_mean_j0 = k.mean;
      row.rejected_std_j0 = k.std;
      row.omitted = static_cast<int>(full.size() - kept.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "policy,split,count,mean_J0,std_J0,rejected_mean_J0,rejected_std_J0,omitted\n";
  for (const SummaryRow& r : rows) {
    out << r.policy << ',' << r.split << ',' << r.count << ',' << fmt_double(r.mean_j0) << ','
        << fmt_double(r.std_j0) << ',' << fmt_double(r.rejected_mean_j0) << ','
        << fmt_double(r.rejected_std_j0) << ',' << r.omitted << '\n';
  }
  return out.str();
}

std::string histogram_to_csv(const std::vector<EvalRecord>& records,
                             double outlier_threshold, double bin_width) {
  if (!(outlier_threshold > 0.0) || !(bin_width > 0.0)) {
    throw std::invalid_argument("histogram: threshold and bin width must be > 0");
  }
  const int nbins =
      std::max(1, static_cast<int>(std::ceil(outlier_threshold / bin_width - 1e-12)));
  std::ostringstream out;
  out << "policy,bin_lo,bin_hi,count\n";
  for (const std::string& pol : policies_in_order(records)) {
    std::vector<int> counts(static_cast<std::size_t>(nbins) + 1, 0);
    for (const EvalRecord& r : records) {
      if (r.policy != pol) continue;
      if (r.j0 >= outlier_threshold) {
        ++counts.back();
      } else {
        const int idx = std::clamp(static_cast<int>(std::floor(r.j0 / bin_width)), 0, nbins - 1);
        ++counts[idx];
      }
    }
    for (int i = 0; i < nbins; ++i) {
      const double lo = i * bin_width;
      const double hi = std::min((i + 1) * bin_width, outlier_threshold);
      out << pol << ',' << fmt_double(lo) << ',' << fmt_double(hi) << ',' << counts[i] << '\n';
    }
    // Open-ended bin above the threshold (the axis-break bucket).
    out << pol << ',' << fmt_double(outlier_threshold) << ",inf," << counts.back() << '\n';
  }
  return out.str();
}

std::string curves_to_csv(const std::vector<CurveSeries>& series) {
  std::ostringstream out;
  out << "step,env_id,policy,moving_avg_cost,ln_J0\n";
  for (const CurveSeries& s : series) {
    if (s.env_ids.size() != s.baselines.size()) {
      throw std::invalid_argument("curves: env_ids and baselines must align");
    }
    for (const TrainLogRow& row : s.log) {
      if (row.env_id < 0 || row.env_id >= static_cast<int>(s.env_ids.size())) {
        throw std::invalid_argument("curves: log row references an unknown env");
      }
      const double base = s.baselines[row.env_id];
      if (!(base > 0.0)) throw std::invalid_argument("curves: baseline cost must be positive");
      out << row.step << ',' << s.env_ids[row.env_id] << ',' << s.policy << ','
          << fmt_double(row.moving_avg_cost) << ',' << fmt_double(std::log(row.moving_avg_cost / base))
          << '\n';
    }
  }
  return out.str();
}

namespace {

// Fixed-size task pool: any jobs count yields the same per-slot results
// because every task derives its own seeds and writes its own slot.
void run_pool(std::size_t num_tasks, int jobs, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(num_tasks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= num_tasks) return;
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), num_tasks);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::unique_ptr<PolicyNet> make_policy(bool stn_arch, const ExperimentConfig& cfg,
                                       int num_actions, RngStream& rng) {
  if (stn_arch) return std::make_unique<StnPolicy>(cfg.encoding, num_actions, cfg.stn, rng);
  return std::make_unique<MlpPolicy>(cfg.encoding, num_actions, encoding_width(cfg.encoding),
                                     cfg.mlp, rng);
}

void write_output(const std::string& dir, const std::string& name, const std::string& content,
                  std::vector<std::string>& files) {
  const std::string path = (std::filesystem::path(dir) / name).string();
  write_text_file(path, content);
  files.push_back(path);
}

}  // namespace

StudyOutput run_single_env_study(const ExperimentConfig& cfg) {
  cfg.validate();
  CheckConfig check = cfg.check;
  check.jobs = cfg.jobs;

  StudyOutput out;
  out.envs = build_env_set(cfg.env_kind, cfg.num_envs, cfg.master_seed, check);
  const int n = cfg.num_envs;
  const std::uint64_t eval_seed = cfg.effective_eval_seed();

  struct Trained {
    TrainOutcome outcome;
    EvalRecord record;
  };
  std::vector<Trained> slots(static_cast<std::size_t>(2) * n);

  run_pool(slots.size(), cfg.jobs, [&](std::size_t i) {
    const bool stn_arch = i < static_cast<std::size_t>(n);
    const int j = static_cast<int>(i % static_cast<std::size_t>(n));
    const EnvParams& ep = out.envs.envs[j];
    RngStream init_rng(policy_init_seed(cfg.master_seed, stn_arch ? "stn" : "mlp", j));
    std::unique_ptr<PolicyNet> policy = make_policy(stn_arch, cfg, ep.num_queues, init_rng);
    Critic critic(cfg.encoding, ep.num_queues, encoding_width(cfg.encoding), init_rng);

    PpoConfig pc = stn_arch ? cfg.ppo_stn : cfg.ppo_mlp;
    pc.total_steps = cfg.train_steps_per_env;
    pc.seed = rollout_seed(cfg.master_seed, j);

    Trained t;
    t.outcome = train_ppo(*policy, critic, {ep}, pc, 1);
    for (TrainLogRow& row : t.outcome.log) row.env_id = j;  // study-level env id
    t.record = evaluate_policy_on_env(*policy, ep, out.envs.baseline_costs[j], j, true,
                                      cfg.eval_num_traj, cfg.eval_traj_len, eval_seed);
    t.record.diverged = t.outcome.diverged;
    slots[i] = std::move(t);
  });

  std::vector<TrainLogRow> stn_log;
  std::vector<TrainLogRow> mlp_log;
  for (int j = 0; j < n; ++j) {
    const auto& log = slots[j].outcome.log;
    stn_log.insert(stn_log.end(), log.begin(), log.end());
  }
  for (int j = 0; j < n; ++j) {
    const auto& log = slots[static_cast<std::size_t>(n) + j].outcome.log;
    mlp_log.insert(mlp_log.end(), log.begin(), log.end());
  }
  out.records.reserve(slots.size());
  for (const Trained& t : slots) out.records.push_back(t.record);

  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  const std::vector<CurveSeries> series = {
      {"stn", stn_log, ids, out.envs.baseline_costs},
      {"mlp", mlp_log, ids, out.envs.baseline_costs},
  };

  std::filesystem::create_directories(cfg.output_dir);
  write_output(cfg.output_dir, "envs.csv", env_set_to_csv(out.envs), out.files_written);
  write_output(cfg.output_dir, "train_log_stn.csv", train_log_to_csv(stn_log), out.files_written);
  write_output(cfg.output_dir, "train_log_mlp.csv", train_log_to_csv(mlp_log), out.files_written);
  write_output(cfg.output_dir, "curves.csv", curves_to_csv(series), out.files_written);
  write_output(cfg.output_dir, "eval_records.csv", eval_records_to_csv(out.records),
               out.files_written);
  write_output(cfg.output_dir, "summary.csv",
               summary_to_csv(summarize(out.records, cfg.outlier_threshold)), out.files_written);
  return out;
}

StudyOutput run_generalization_study(const ExperimentConfig& cfg) {
  cfg.validate();
  CheckConfig check = cfg.check;
  check.jobs = cfg.jobs;

  StudyOutput out;
  out.envs = build_env_set(cfg.env_kind, cfg.num_envs, cfg.master_seed, check);
  const int split = cfg.train_split;
  const int k = out.envs.envs.front().num_queues;
  for (const EnvParams& ep : out.envs.envs) {
    if (ep.num_queues != k) {
      throw std::invalid_argument("generalization: environments must share the queue count");
    }
  }
  const std::vector<EnvParams> train_envs(out.envs.envs.begin(), out.envs.envs.begin() + split);

  struct ArchResult {
    std::unique_ptr<PolicyNet> policy;
    TrainOutcome outcome;
  };
  std::array<ArchResult, 2> arch;
  // Both architectures may train concurrently; rollout collection inside each
  // run takes the leftover workers.
  const int inner_jobs = std::max(1, cfg.jobs / 2);
  run_pool(arch.size(), cfg.jobs, [&](std::size_t a) {
    const bool stn_arch = a == 0;
    RngStream init_rng(policy_init_seed(cfg.master_seed, stn_arch ? "stn" : "mlp", 0));
    ArchResult r;
    r.policy = make_policy(stn_arch, cfg, k, init_rng);
    Critic critic(cfg.encoding, k, encoding_width(cfg.encoding), init_rng);

    PpoConfig pc = stn_arch ? cfg.ppo_stn : cfg.ppo_mlp;
    pc.total_steps = cfg.train_steps_per_env * split;
    pc.seed = rollout_seed(cfg.master_seed, 0);  // shared across architectures

    r.outcome = train_ppo(*r.policy, critic, train_envs, pc, cfg.jobs > 1 ? inner_jobs : 1);
    arch[a] = std::move(r);
  });

  const std::uint64_t eval_seed = cfg.effective_eval_seed();
  out.records.resize(static_cast<std::size_t>(2) * cfg.num_envs);
  run_pool(out.records.size(), cfg.jobs, [&](std::size_t i) {
    const int a = static_cast<int>(i) / cfg.num_envs;
    const int j = static_cast<int>(i) % cfg.num_envs;
    // Clone so concurrent evals never share forward-pass caches.
    std::unique_ptr<PolicyNet> policy = arch[a].policy->clone();
    EvalRecord r = evaluate_policy_on_env(*policy, out.envs.envs[j], out.envs.baseline_costs[j],
                                          j, j < split, cfg.eval_num_traj, cfg.eval_traj_len,
                                          eval_seed);
    r.diverged = arch[a].outcome.diverged;
    out.records[i] = std::move(r);
  });

  std::filesystem::create_directories(cfg.output_dir);
  write_output(cfg.output_dir, "envs.csv", env_set_to_csv(out.envs), out.files_written);
  write_output(cfg.output_dir, "train_log_stn.csv", train_log_to_csv(arch[0].outcome.log),
               out.files_written);
  write_output(cfg.output_dir, "train_log_mlp.csv", train_log_to_csv(arch[1].outcome.log),
               out.files_written);
  write_output(cfg.output_dir, "eval_records.csv", eval_records_to_csv(out.records),
               out.files_written);
  write_output(cfg.output_dir, "summary.csv",
               summary_to_csv(summarize(out.records, cfg.outlier_threshold)), out.files_written);
  write_output(cfg.output_dir, "histogram.csv",
               histogram_to_csv(out.records, cfg.outlier_threshold, cfg.histogram_bin_width),
               out.files_written);
  return out;
}

StudyOutput run_dp_demo(const ExperimentConfig& cfg) {
  cfg.validate();
  const SequenceResult seq =
      approximate_mdp_sequence(cfg.dp_spec, cfg.dp_region_bound, cfg.dp_schedule, DpSolveConfig{},
                               cfg.jobs);
  const SwitchTypeReport report = is_switch_type(seq.table);

  StudyOutput out;
  std::filesystem::create_directories(cfg.output_dir);
  for (std::size_t i1 = 0; i1 < seq.table.y1_values.size(); ++i1) {
    for (std::size_t i2 = 0; i2 < seq.table.y2_values.size(); ++i2) {
      const std::string name = "regions_y" + std::to_string(seq.table.y1_values[i1]) + "_" +
                               std::to_string(seq.table.y2_values[i2]) + ".csv";
      write_output(cfg.output_dir, name,
                   export_decision_regions(seq.table, static_cast<int>(i1), static_cast<int>(i2)),
                   out.files_written);
    }
  }

  std::ostringstream rp;
  rp << "approximate-MDP sequence report\n";
  rp << "region_bound = " << cfg.dp_region_bound << "\n";
  rp << "bounds_tried =";
  for (int b : seq.bounds_tried) rp << ' ' << b;
  rp << "\nconverged_bound = " << seq.converged_bound << "\n";
  for (std::size_t i = 0; i < seq.bounds_tried.size(); ++i) {
    rp << "gain[L=" << seq.bounds_tried[i] << "] = " << fmt_double(seq.gains[i]) << "\n";
  }
  rp << "switch_type = " << (report.ok ? "yes" : "no") << "\n";
  rp << "violations = " << report.violations.size() << "\n";
  const std::size_t shown = std::min<std::size_t>(report.violations.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    const SwitchTypeViolation& v = report.violations[i];
    rp << "violation: q=(" << v.q1 << "," << v.q2 << ") y_idx=(" << v.iy1 << "," << v.iy2
       << ") action " << v.action_state + 1 << " -> neighbor q=(" << v.nq1 << "," << v.nq2
       << ") y_idx=(" << v.niy1 << "," << v.niy2 << ") action " << v.action_neighbor + 1 << "\n";
  }
  write_output(cfg.output_dir, "dp_report.txt", rp.str(), out.files_written);
  return out;
}

}  // namespace stnq

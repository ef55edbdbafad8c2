#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stnq/experiments.hpp"
#include "stnq/textio.hpp"

using namespace stnq;

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string kind;
  int num_envs = 0;
  int split = 0;
  long long steps = 0;
};

bool given(const CLI::App* sc, const std::string& name) {
  const CLI::Option* opt = sc->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

void add_common(CLI::App* sc, CommonOpts& o) {
  sc->add_option("--config", o.config_path, "JSON experiment config file")
      ->check(CLI::ExistingFile);
  sc->add_option("--seed", o.seed, "Override master_seed");
  sc->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sc->add_option("--out", o.out, "Override output directory");
}

ExperimentConfig make_config(const CLI::App* sc, const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = load_experiment_config(o.config_path);
  if (given(sc, "--kind")) {
    cfg.env_kind = env_kind_from_string(o.kind);
    cfg.encoding = default_encoding(cfg.env_kind, true);
    cfg.stn.input_scale = default_input_scale(cfg.encoding);
  }
  if (given(sc, "--seed")) cfg.master_seed = o.seed;
  if (given(sc, "--jobs")) cfg.jobs = o.jobs;
  if (given(sc, "--out")) cfg.output_dir = o.out;
  if (given(sc, "--envs")) {
    cfg.num_envs = o.num_envs;
    // Keep the default "train on everything" split consistent unless the
    // user pinned the split explicitly.
    if (!given(sc, "--split")) cfg.train_split = std::min(cfg.train_split, cfg.num_envs);
  }
  if (given(sc, "--split")) cfg.train_split = o.split;
  if (given(sc, "--steps")) cfg.train_steps_per_env = o.steps;
  cfg.validate();
  return cfg;
}

EnvSet obtain_env_set(const ExperimentConfig& cfg, const std::string& envs_csv) {
  if (!envs_csv.empty()) {
    EnvSet set = load_env_set(envs_csv);
    if (set.kind != cfg.env_kind) {
      throw std::invalid_argument("env set kind does not match the configured env_kind");
    }
    return set;
  }
  CheckConfig check = cfg.check;
  check.jobs = cfg.jobs;
  return build_env_set(cfg.env_kind, cfg.num_envs, cfg.master_seed, check);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void report_files(const StudyOutput& out) {
  for (const std::string& f : out.files_written) std::cout << "wrote " << f << "\n";
}

int cmd_sample_envs(const CLI::App* sc, const CommonOpts& o) {
  const ExperimentConfig cfg = make_config(sc, o);
  const EnvSet set = obtain_env_set(cfg, "");
  const std::string path = out_path(cfg, "envs.csv");
  save_env_set(set, path);
  std::cout << "wrote " << path << " (" << set.envs.size() << " envs)\n";
  for (std::size_t i = 0; i < set.envs.size(); ++i) {
    std::cout << "env " << i << ": J_baseline = " << fmt_double(set.baseline_costs[i]) << "\n";
  }
  return 0;
}

int cmd_train(const CLI::App* sc, const CommonOpts& o, const std::string& arch,
              const std::string& envs_csv, int env_id) {
  const ExperimentConfig cfg = make_config(sc, o);
  const EnvSet set = obtain_env_set(cfg, envs_csv);

  std::vector<EnvParams> train_envs;
  int slot = 0;
  std::string suffix;
  if (given(sc, "--env-id")) {
    if (env_id < 0 || env_id >= static_cast<int>(set.envs.size())) {
      throw std::invalid_argument("--env-id out of range for the environment set");
    }
    train_envs = {set.envs[env_id]};
    slot = env_id;
    suffix = "_env" + std::to_string(env_id);
  } else {
    if (cfg.train_split > static_cast<int>(set.envs.size())) {
      throw std::invalid_argument("train_split exceeds the environment set size");
    }
    train_envs.assign(set.envs.begin(), set.envs.begin() + cfg.train_split);
  }
  const int k = train_envs.front().num_queues;
  for (const EnvParams& ep : train_envs) {
    if (ep.num_queues != k) throw std::invalid_argument("training envs must share the queue count");
  }

  const bool stn_arch = arch == "stn";
  RngStream init_rng(policy_init_seed(cfg.master_seed, arch, slot));
  std::unique_ptr<PolicyNet> policy;
  if (stn_arch) {
    policy = std::make_unique<StnPolicy>(cfg.encoding, k, cfg.stn, init_rng);
  } else {
    policy = std::make_unique<MlpPolicy>(cfg.encoding, k, encoding_width(cfg.encoding), cfg.mlp,
                                         init_rng);
  }
  Critic critic(cfg.encoding, k, encoding_width(cfg.encoding), init_rng);

  PpoConfig pc = stn_arch ? cfg.ppo_stn : cfg.ppo_mlp;
  pc.total_steps = cfg.train_steps_per_env * static_cast<long long>(train_envs.size());
  pc.seed = rollout_seed(cfg.master_seed, slot);

  const TrainOutcome outcome = train_ppo(*policy, critic, train_envs, pc, cfg.jobs);

  const std::string policy_path = out_path(cfg, "policy_" + arch + suffix + ".json");
  save_policy(*policy, policy_path);
  const std::string critic_path = out_path(cfg, "critic_" + arch + suffix + ".json");
  write_text_file(critic_path, critic.to_json());
  const std::string log_path = out_path(cfg, "train_log_" + arch + suffix + ".csv");
  write_text_file(log_path, train_log_to_csv(outcome.log));

  std::cout << "wrote " << policy_path << "\n";
  std::cout << "wrote " << critic_path << "\n";
  std::cout << "wrote " << log_path << "\n";
  std::cout << "steps_per_env = " << outcome.steps_per_env << "\n";
  if (!outcome.log.empty()) {
    std::cout << "final moving_avg_cost = " << fmt_double(outcome.log.back().moving_avg_cost)
              << "\n";
  }
  std::cout << "diverged = " << (outcome.diverged ? 1 : 0)
            << ", overflowed = " << (outcome.overflowed ? 1 : 0) << "\n";
  return 0;
}

int cmd_eval(const CLI::App* sc, const CommonOpts& o, const std::string& policy_path,
             bool baseline, const std::string& envs_csv) {
  const ExperimentConfig cfg = make_config(sc, o);
  const EnvSet set = obtain_env_set(cfg, envs_csv);
  const std::uint64_t eval_seed = cfg.effective_eval_seed();
  const int split = std::min<int>(cfg.train_split, static_cast<int>(set.envs.size()));

  std::vector<EvalRecord> records;
  std::unique_ptr<PolicyNet> policy;
  if (!baseline) policy = load_policy(policy_path);
  for (std::size_t j = 0; j < set.envs.size(); ++j) {
    const bool in_train = static_cast<int>(j) < split;
    if (baseline) {
      records.push_back(evaluate_baseline_on_env(set.envs[j], set.baseline_costs[j],
                                                 static_cast<int>(j), in_train, cfg.eval_num_traj,
                                                 cfg.eval_traj_len, eval_seed));
    } else {
      records.push_back(evaluate_policy_on_env(*policy, set.envs[j], set.baseline_costs[j],
                                               static_cast<int>(j), in_train, cfg.eval_num_traj,
                                               cfg.eval_traj_len, eval_seed));
    }
  }

  const std::string records_path = out_path(cfg, "eval_records.csv");
  write_text_file(records_path, eval_records_to_csv(records));
  std::cout << "wrote " << records_path << "\n";
  std::cout << summary_to_csv(summarize(records, cfg.outlier_threshold));
  return 0;
}

int cmd_summarize(const CLI::App* sc, const CommonOpts& o, const std::string& records_path,
                  double threshold, double bin_width, bool with_histogram) {
  const ExperimentConfig cfg = make_config(sc, o);
  const double thr = given(sc, "--threshold") ? threshold : cfg.outlier_threshold;
  const double width = given(sc, "--bin-width") ? bin_width : cfg.histogram_bin_width;

  const std::vector<EvalRecord> records = eval_records_from_csv(read_text_file(records_path));
  const std::string summary = summary_to_csv(summarize(records, thr));
  const std::string summary_path = out_path(cfg, "summary.csv");
  write_text_file(summary_path, summary);
  std::cout << "wrote " << summary_path << "\n";
  if (with_histogram) {
    const std::string hist_path = out_path(cfg, "histogram.csv");
    write_text_file(hist_path, histogram_to_csv(records, thr, width));
    std::cout << "wrote " << hist_path << "\n";
  }
  std::cout << summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switch-type network policies for queueing-network control"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string arch = "stn";
  std::string envs_csv;
  int env_id = 0;
  std::string policy_path;
  bool baseline = false;
  std::string records_path;
  double threshold = 5.0;
  double bin_width = 0.25;
  bool with_histogram = false;

  CLI::App* sample = app.add_subcommand(
      "sample-envs", "Sample stabilizable environments and write envs.csv");
  add_common(sample, common);
  sample->add_option("--kind", common.kind, "Environment kind: singlehop or multipath");
  sample->add_option("--envs", common.num_envs, "Number of environments")
      ->check(CLI::PositiveNumber);

  CLI::App* train = app.add_subcommand("train", "Train one architecture with PPO");
  add_common(train, common);
  train->add_option("--arch", arch, "Architecture: stn or mlp")
      ->required()
      ->check(CLI::IsMember({"stn", "mlp"}));
  train->add_option("--envs-csv", envs_csv, "Environment set CSV (sampled per config if absent)")
      ->check(CLI::ExistingFile);
  train->add_option("--env-id", env_id, "Train on this env only (default: the training split)");
  train->add_option("--kind", common.kind, "Environment kind: singlehop or multipath");
  train->add_option("--envs", common.num_envs, "Number of environments")
      ->check(CLI::PositiveNumber);
  train->add_option("--split", common.split, "Training split size")->check(CLI::PositiveNumber);
  train->add_option("--steps", common.steps, "Training steps per environment")
      ->check(CLI::PositiveNumber);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved policy with argmax rollouts");
  add_common(eval, common);
  eval->add_option("--policy", policy_path, "Policy checkpoint JSON")->check(CLI::ExistingFile);
  eval->add_flag("--baseline", baseline, "Evaluate the env kind's baseline rule instead");
  eval->add_option("--envs-csv", envs_csv, "Environment set CSV (sampled per config if absent)")
      ->check(CLI::ExistingFile);
  eval->add_option("--kind", common.kind, "Environment kind: singlehop or multipath");
  eval->add_option("--envs", common.num_envs, "Number of environments")
      ->check(CLI::PositiveNumber);
  eval->add_option("--split", common.split, "First N envs count as the training split")
      ->check(CLI::PositiveNumber);

  CLI::App* single = app.add_subcommand(
      "single-env-study", "Per-environment training comparison (STN vs MLP)");
  add_common(single, common);
  single->add_option("--kind", common.kind, "Environment kind: singlehop or multipath");
  single->add_option("--envs", common.num_envs, "Number of environments")
      ->check(CLI::PositiveNumber);
  single->add_option("--steps", common.steps, "Training steps per environment")
      ->check(CLI::PositiveNumber);

  CLI::App* gen = app.add_subcommand(
      "generalization-study", "Train on a split, evaluate zero-shot on the rest");
  add_common(gen, common);
  gen->add_option("--kind", common.kind, "Environment kind: singlehop or multipath");
  gen->add_option("--envs", common.num_envs, "Number of environments")
      ->check(CLI::PositiveNumber);
  gen->add_option("--split", common.split, "Training split size")->check(CLI::PositiveNumber);
  gen->add_option("--steps", common.steps, "Training steps per environment")
      ->check(CLI::PositiveNumber);

  CLI::App* dp = app.add_subcommand(
      "dp-demo", "Solve the two-queue MDP exactly and export decision regions");
  add_common(dp, common);

  CLI::App* summ = app.add_subcommand("summarize", "Summarize an eval_records.csv");
  add_common(summ, common);
  summ->add_option("--records", records_path, "eval_records.csv to summarize")
      ->required()
      ->check(CLI::ExistingFile);
  summ->add_option("--threshold", threshold, "Outlier threshold on J0")
      ->check(CLI::PositiveNumber);
  summ->add_option("--bin-width", bin_width, "Histogram bin width")->check(CLI::PositiveNumber);
  summ->add_flag("--histogram", with_histogram, "Also write histogram.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed()) return cmd_sample_envs(sample, common);
    if (train->parsed()) return cmd_train(train, common, arch, envs_csv, env_id);
    if (eval->parsed()) {
      if (!baseline && policy_path.empty()) {
        throw std::invalid_argument("eval needs --policy or --baseline");
      }
      if (baseline && !policy_path.empty()) {
        throw std::invalid_argument("eval takes either --policy or --baseline, not both");
      }
      return cmd_eval(eval, common, policy_path, baseline, envs_csv);
    }
    if (single->parsed()) {
      report_files(run_single_env_study(make_config(single, common)));
      return 0;
    }
    if (gen->parsed()) {
      report_files(run_generalization_study(make_config(gen, common)));
      return 0;
    }
    if (dp->parsed()) {
      const ExperimentConfig cfg = make_config(dp, common);
      const StudyOutput out = run_dp_demo(cfg);
      report_files(out);
      std::cout << read_text_file((std::filesystem::path(cfg.output_dir) / "dp_report.txt").string());
      return 0;
    }
    if (summ->parsed()) {
      return cmd_summarize(summ, common, records_path, threshold, bin_width, with_histogram);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

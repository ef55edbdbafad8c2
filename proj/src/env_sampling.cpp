#include "stnq/env_sampling.hpp"

#include <sstream>
#include <stdexcept>

#include "stnq/baselines.hpp"
#include "stnq/textio.hpp"

namespace stnq {

EnvParams sample_singlehop_env(RngStream& rng) {
  EnvParams p;
  p.kind = EnvKind::SingleHop;
  p.num_queues = 4;
  for (int i = 0; i < p.num_queues; ++i) p.arrival_rates.push_back(rng.uniform_range(0.0, 3.0));
  for (int i = 0; i < p.num_queues; ++i) p.service_rates.push_back(rng.uniform_range(0.0, 3.0));
  p.seed = rng.bits();
  return p;
}

EnvParams sample_multipath_env(RngStream& rng) {
  EnvParams p;
  p.kind = EnvKind::MultiPath;
  p.num_queues = 8;
  for (int i = 0; i < p.num_queues; ++i) p.service_rates.push_back(rng.uniform_range(0.0, 1.0));
  p.seed = rng.bits();
  return p;
}

CheckResult stabilizability_check(const EnvParams& params, const CheckConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.num_traj; ++i) seeds.push_back(mix_seed(params.seed, i));
  RolloutStats stats = estimate_avg_cost(params, baseline_policy(params.kind),
                                         cfg.num_traj, cfg.traj_len, seeds, cfg.jobs);
  CheckResult r;
  r.baseline_cost = stats.avg_cost;
  r.accepted = stats.avg_cost <= cfg.threshold && !stats.overflowed;
  return r;
}

EnvSet build_env_set(EnvKind kind, int count, std::uint64_t master_seed,
                     const CheckConfig& cfg) {
  if (count < 1) throw std::invalid_argument("build_env_set: count must be >= 1");
  EnvSet set;
  set.kind = kind;
  set.master_seed = master_seed;
  RngStream rng(master_seed);
  int consecutive_rejects = 0;
  while (static_cast<int>(set.envs.size()) < count) {
    EnvParams candidate = kind == EnvKind::SingleHop ? sample_singlehop_env(rng)
                                                     : sample_multipath_env(rng);
    CheckResult check = stabilizability_check(candidate, cfg);
    if (check.accepted) {
      set.envs.push_back(std::move(candidate));
      set.baseline_costs.push_back(check.baseline_cost);
      consecutive_rejects = 0;
    } else if (++consecutive_rejects > cfg.max_rejects) {
      throw std::runtime_error(
          "build_env_set: " + std::to_string(consecutive_rejects) +
          " consecutive rejections; rates likely unstabilizable at threshold " +
          fmt_double(cfg.threshold));
    }
  }
  return set;
}

std::string env_set_to_csv(const EnvSet& set) {
  if (set.envs.empty()) throw std::invalid_argument("env_set_to_csv: empty set");
  const int k = set.envs.front().num_queues;
  std::ostringstream out;
  out << "env_id,kind,K";
  for (int i = 1; i <= k; ++i) out << ",lambda_" << i;
  for (int i = 1; i <= k; ++i) out << ",mu_" << i;
  out << ",J_baseline,seed\n";
  for (std::size_t j = 0; j < set.envs.size(); ++j) {
    const EnvParams& p = set.envs[j];
    out << j << "," << to_string(p.kind) << "," << p.num_queues;
    for (int i = 0; i < k; ++i) {
      out << "," << (p.kind == EnvKind::SingleHop ? fmt_double(p.arrival_rates[i]) : "0");
    }
    for (int i = 0; i < k; ++i) out << "," << fmt_double(p.service_rates[i]);
    out << "," << fmt_double(set.baseline_costs[j]) << "," << p.seed << "\n";
  }
  return out.str();
}

EnvSet env_set_from_csv(const std::string& text) {
  EnvSet set;
  std::vector<std::string> lines = split(text, '\n');
  if (lines.size() < 2) throw std::invalid_argument("env set csv: no data rows");
  bool first_row = true;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::string line = trim(lines[li]);
    if (line.empty()) continue;
    std::vector<std::string> f = split(line, ',');
    if (f.size() < 4) throw std::invalid_argument("env set csv: short row: " + line);
    EnvParams p;
    p.kind = env_kind_from_string(f[1]);
    p.num_queues = std::stoi(f[2]);
    const std::size_t want = 3 + 2 * static_cast<std::size_t>(p.num_queues) + 2;
    if (f.size() != want) throw std::invalid_argument("env set csv: column count mismatch");
    for (int i = 0; i < p.num_queues; ++i) p.arrival_rates.push_back(std::stod(f[3 + i]));
    for (int i = 0; i < p.num_queues; ++i) {
      p.service_rates.push_back(std::stod(f[3 + p.num_queues + i]));
    }
    if (p.kind == EnvKind::MultiPath) p.arrival_rates.clear();
    p.seed = std::stoull(f[want - 1]);
    p.validate();
    if (first_row) {
      set.kind = p.kind;
      first_row = false;
    } else if (p.kind != set.kind) {
      throw std::invalid_argument("env set csv: mixed kinds");
    }
    set.baseline_costs.push_back(std::stod(f[want - 2]));
    set.envs.push_back(std::move(p));
  }
  return set;
}

void save_env_set(const EnvSet& set, const std::string& path) {
  write_text_file(path, env_set_to_csv(set));
}

EnvSet load_env_set(const std::string& path) {
  return env_set_from_csv(read_text_file(path));
}

}  // namespace stnq

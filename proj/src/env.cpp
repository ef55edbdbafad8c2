#include "stnq/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "stnq/textio.hpp"

namespace stnq {

std::string to_string(EnvKind kind) {
  return kind == EnvKind::SingleHop ? "singlehop" : "multipath";
}

EnvKind env_kind_from_string(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "singlehop" || t == "single_hop" || t == "sh") return EnvKind::SingleHop;
  if (t == "multipath" || t == "multi_path" || t == "mp") return EnvKind::MultiPath;
  throw std::invalid_argument("unknown environment kind: " + s);
}

void EnvParams::validate() const {
  if (num_queues < 1) throw std::invalid_argument("EnvParams: K must be >= 1");
  if (static_cast<int>(service_rates.size()) != num_queues) {
    throw std::invalid_argument("EnvParams: mu size mismatch");
  }
  if (kind == EnvKind::SingleHop) {
    if (static_cast<int>(arrival_rates.size()) != num_queues) {
      throw std::invalid_argument("EnvParams: lambda size mismatch");
    }
  } else if (!arrival_rates.empty()) {
    throw std::invalid_argument("EnvParams: multipath carries no lambda");
  }
  for (double r : arrival_rates) {
    if (r < 0.0 || !std::isfinite(r)) throw std::invalid_argument("EnvParams: bad lambda");
  }
  for (double r : service_rates) {
    if (r < 0.0 || !std::isfinite(r)) throw std::invalid_argument("EnvParams: bad mu");
  }
}

std::string serialize_env_params(const EnvParams& p) {
  std::ostringstream out;
  out << "kind = " << to_string(p.kind) << "\n";
  out << "K = " << p.num_queues << "\n";
  out << "lambda =";
  for (double v : p.arrival_rates) out << " " << fmt_double(v);
  out << "\n";
  out << "mu =";
  for (double v : p.service_rates) out << " " << fmt_double(v);
  out << "\n";
  out << "seed = " << p.seed << "\n";
  return out.str();
}

EnvParams parse_env_params(const std::string& text) {
  EnvParams p;
  bool saw_kind = false, saw_k = false, saw_mu = false, saw_seed = false;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("env params: bad line: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "kind") {
      p.kind = env_kind_from_string(val);
      saw_kind = true;
    } else if (key == "K") {
      p.num_queues = std::stoi(val);
      saw_k = true;
    } else if (key == "lambda" || key == "mu") {
      std::vector<double> vals;
      std::istringstream ss(val);
      double v;
      while (ss >> v) vals.push_back(v);
      if (key == "lambda") {
        p.arrival_rates = std::move(vals);
      } else {
        p.service_rates = std::move(vals);
        saw_mu = true;
      }
    } else if (key == "seed") {
      p.seed = std::stoull(val);
      saw_seed = true;
    } else {
      throw std::invalid_argument("env params: unknown key: " + key);
    }
  }
  if (!saw_kind || !saw_k || !saw_mu || !saw_seed) {
    throw std::invalid_argument("env params: missing required field");
  }
  if (p.kind == EnvKind::MultiPath) p.arrival_rates.clear();
  p.validate();
  return p;
}

EnvParams load_env_params(const std::string& path) {
  return parse_env_params(read_text_file(path));
}

void save_env_params(const EnvParams& p, const std::string& path) {
  write_text_file(path, serialize_env_params(p));
}

namespace {

void check_action(int action, int k) {
  if (action < 0 || action >= k) {
    throw std::out_of_range("invalid action " + std::to_string(action) +
                            " for K=" + std::to_string(k));
  }
}

}  // namespace

NetworkState singlehop_step(const NetworkState& s, int action,
                            const std::vector<long long>& arrivals,
                            const std::vector<long long>& capacities) {
  const int k = static_cast<int>(s.q.size());
  check_action(action, k);
  if (static_cast<int>(arrivals.size()) != k || static_cast<int>(capacities.size()) != k) {
    throw std::invalid_argument("singlehop_step: arrivals/capacities size mismatch");
  }
  NetworkState next;
  next.q.resize(k);
  for (int i = 0; i < k; ++i) {
    long long served = (i == action) ? std::min(s.q[i], s.y[i]) : 0;
    next.q[i] = s.q[i] - served + arrivals[i];
  }
  next.y = capacities;
  next.t = s.t + 1;
  return next;
}

NetworkState multipath_step(const NetworkState& s, int action,
                            const std::vector<long long>& capacities) {
  const int k = static_cast<int>(s.q.size());
  check_action(action, k);
  if (static_cast<int>(capacities.size()) != k) {
    throw std::invalid_argument("multipath_step: capacities size mismatch");
  }
  NetworkState next;
  next.q.resize(k);
  for (int i = 0; i < k; ++i) {
    next.q[i] = std::max(s.q[i] - s.y[i], 0LL) + (i == action ? 1 : 0);
  }
  next.y = capacities;
  next.t = s.t + 1;
  return next;
}

double total_cost(const NetworkState& s) {
  double c = 0.0;
  for (long long v : s.q) c += static_cast<double>(v);
  return c;
}

int encoding_width(EncodingScheme scheme) {
  switch (scheme) {
    case EncodingScheme::SingleHopFull: return 4;
    case EncodingScheme::MultiPathFull: return 3;
    case EncodingScheme::SingleHopBare:
    case EncodingScheme::MultiPathBare: return 2;
  }
  throw std::invalid_argument("unknown encoding scheme");
}

std::string to_string(EncodingScheme scheme) {
  switch (scheme) {
    case EncodingScheme::SingleHopFull: return "singlehop_full";
    case EncodingScheme::MultiPathFull: return "multipath_full";
    case EncodingScheme::SingleHopBare: return "singlehop_bare";
    case EncodingScheme::MultiPathBare: return "multipath_bare";
  }
  throw std::invalid_argument("unknown encoding scheme");
}

EncodingScheme encoding_from_string(const std::string& s) {
  if (s == "singlehop_full") return EncodingScheme::SingleHopFull;
  if (s == "multipath_full") return EncodingScheme::MultiPathFull;
  if (s == "singlehop_bare") return EncodingScheme::SingleHopBare;
  if (s == "multipath_bare") return EncodingScheme::MultiPathBare;
  throw std::invalid_argument("unknown encoding scheme: " + s);
}

EncodingScheme default_encoding(EnvKind kind, bool with_params) {
  if (kind == EnvKind::SingleHop) {
    return with_params ? EncodingScheme::SingleHopFull : EncodingScheme::SingleHopBare;
  }
  return with_params ? EncodingScheme::MultiPathFull : EncodingScheme::MultiPathBare;
}

Matrix encode_observation(const NetworkState& s, const EnvParams& p,
                          EncodingScheme scheme) {
  const int k = p.num_queues;
  if (static_cast<int>(s.q.size()) != k) {
    throw std::invalid_argument("encode_observation: state width mismatch");
  }
  const bool singlehop_scheme = scheme == EncodingScheme::SingleHopFull ||
                                scheme == EncodingScheme::SingleHopBare;
  if (singlehop_scheme != (p.kind == EnvKind::SingleHop)) {
    throw std::invalid_argument("encoding scheme incompatible with environment kind");
  }
  Matrix obs(k, encoding_width(scheme));
  for (int i = 0; i < k; ++i) {
    double* row = obs.row(i);
    switch (scheme) {
      case EncodingScheme::SingleHopFull:
        row[0] = static_cast<double>(s.q[i]);
        row[1] = static_cast<double>(s.y[i]);
        row[2] = p.arrival_rates[i];
        row[3] = -p.service_rates[i];
        break;
      case EncodingScheme::MultiPathFull:
        row[0] = -static_cast<double>(s.q[i]);
        row[1] = static_cast<double>(s.y[i]);
        row[2] = p.service_rates[i];
        break;
      case EncodingScheme::SingleHopBare:
        row[0] = static_cast<double>(s.q[i]);
        row[1] = static_cast<double>(s.y[i]);
        break;
      case EncodingScheme::MultiPathBare:
        row[0] = -static_cast<double>(s.q[i]);
        row[1] = static_cast<double>(s.y[i]);
        break;
    }
  }
  return obs;
}

long long DiscreteDist::sample(RngStream& rng) const {
  switch (kind) {
    case Kind::Poisson: return rng.poisson(rate);
    case Kind::Bernoulli: return rng.bernoulli(rate);
    case Kind::Finite: return values[rng.categorical(probs)];
  }
  throw std::logic_error("DiscreteDist: bad kind");
}

double DiscreteDist::mean() const {
  switch (kind) {
    case Kind::Poisson:
    case Kind::Bernoulli: return rate;
    case Kind::Finite: {
      double m = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * probs[i];
      return m;
    }
  }
  throw std::logic_error("DiscreteDist: bad kind");
}

void DiscreteDist::validate() const {
  if (kind == Kind::Finite) {
    if (values.size() != probs.size() || values.empty()) {
      throw std::invalid_argument("finite dist: values/probs mismatch");
    }
    double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("finite dist: probabilities sum to " + fmt_double(total));
    }
    for (double p : probs) {
      if (p < 0.0) throw std::invalid_argument("finite dist: negative probability");
    }
  } else {
    if (rate < 0.0 || !std::isfinite(rate)) {
      throw std::invalid_argument("dist: rate must be finite and >= 0");
    }
    if (kind == Kind::Bernoulli && rate > 1.0) {
      throw std::invalid_argument("bernoulli: p > 1");
    }
  }
}

DiscreteDist DiscreteDist::poisson(double rate) {
  DiscreteDist d;
  d.kind = Kind::Poisson;
  d.rate = rate;
  d.validate();
  return d;
}

DiscreteDist DiscreteDist::bernoulli(double p) {
  DiscreteDist d;
  d.kind = Kind::Bernoulli;
  d.rate = p;
  d.validate();
  return d;
}

DiscreteDist DiscreteDist::finite(std::vector<long long> values, std::vector<double> probs) {
  DiscreteDist d;
  d.kind = Kind::Finite;
  d.values = std::move(values);
  d.probs = std::move(probs);
  d.validate();
  return d;
}

Exogenous sample_exogenous(const EnvParams& p, RngStream& rng) {
  p.validate();
  Exogenous ex;
  if (p.kind == EnvKind::SingleHop) {
    ex.arrivals.resize(p.num_queues);
    for (int i = 0; i < p.num_queues; ++i) ex.arrivals[i] = rng.poisson(p.arrival_rates[i]);
  }
  ex.capacities.resize(p.num_queues);
  for (int i = 0; i < p.num_queues; ++i) ex.capacities[i] = rng.poisson(p.service_rates[i]);
  return ex;
}

QueueEnv::QueueEnv(const EnvParams& params, std::uint64_t stream_seed)
    : params_(params), rng_(stream_seed) {
  params_.validate();
  const int k = params_.num_queues;
  if (params_.kind == EnvKind::SingleHop) {
    for (int i = 0; i < k; ++i) {
      arrival_dists_.push_back(DiscreteDist::poisson(params_.arrival_rates[i]));
    }
  }
  for (int i = 0; i < k; ++i) {
    capacity_dists_.push_back(DiscreteDist::poisson(params_.service_rates[i]));
  }
  reset();
}

QueueEnv::QueueEnv(const EnvParams& params) : QueueEnv(params, params.seed) {}

void QueueEnv::set_arrival_dists(std::vector<DiscreteDist> dists) {
  if (params_.kind != EnvKind::SingleHop) {
    throw std::logic_error("multipath arrivals are deterministic");
  }
  if (static_cast<int>(dists.size()) != params_.num_queues) {
    throw std::invalid_argument("arrival dists: size mismatch");
  }
  for (const auto& d : dists) d.validate();
  arrival_dists_ = std::move(dists);
}

void QueueEnv::set_capacity_dists(std::vector<DiscreteDist> dists) {
  if (static_cast<int>(dists.size()) != params_.num_queues) {
    throw std::invalid_argument("capacity dists: size mismatch");
  }
  for (const auto& d : dists) d.validate();
  capacity_dists_ = std::move(dists);
}

std::vector<long long> QueueEnv::sample_caps() {
  std::vector<long long> caps(params_.num_queues);
  for (int i = 0; i < params_.num_queues; ++i) caps[i] = capacity_dists_[i].sample(rng_);
  return caps;
}

void QueueEnv::reset() {
  state_.q.assign(params_.num_queues, 0);
  state_.y = sample_caps();
  state_.t = 0;
  overflowed_ = false;
}

double QueueEnv::step(int action) {
  if (params_.kind == EnvKind::SingleHop) {
    std::vector<long long> arrivals(params_.num_queues);
    for (int i = 0; i < params_.num_queues; ++i) {
      arrivals[i] = arrival_dists_[i].sample(rng_);
    }
    state_ = singlehop_step(state_, action, arrivals, sample_caps());
  } else {
    state_ = multipath_step(state_, action, sample_caps());
  }
  for (long long& v : state_.q) {
    if (v > kQueueCap) {
      v = kQueueCap;
      overflowed_ = true;
    }
  }
  return total_cost(state_);
}

}  // namespace stnq

#include "stnq/dp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "stnq/textio.hpp"

namespace stnq {

namespace {

// Explicit finite support of a distribution; Poisson has none.
void expand_finite(const DiscreteDist& d, std::vector<long long>& values,
                   std::vector<double>& probs) {
  d.validate();
  values.clear();
  probs.clear();
  switch (d.kind) {
    case DiscreteDist::Kind::Bernoulli:
      values = {0, 1};
      probs = {1.0 - d.rate, d.rate};
      break;
    case DiscreteDist::Kind::Finite:
      values = d.values;
      probs = d.probs;
      break;
    case DiscreteDist::Kind::Poisson:
      throw std::invalid_argument("dp oracle: distributions must have finite support");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0) throw std::invalid_argument("dp oracle: negative support value");
    if (i > 0 && values[i] <= values[i - 1]) {
      throw std::invalid_argument("dp oracle: support values must be strictly increasing");
    }
  }
}

std::string join_ll(const std::vector<long long>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  return out.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt_double(v[i]);
  return out.str();
}

std::vector<long long> parse_ll_list(const std::string& s) {
  std::vector<long long> out;
  std::istringstream ss(s);
  long long v;
  while (ss >> v) out.push_back(v);
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  double v;
  while (ss >> v) out.push_back(v);
  return out;
}

}  // namespace

void DpSpec::validate() const {
  std::vector<long long> values;
  std::vector<double> probs;
  for (int k = 0; k < 2; ++k) {
    expand_finite(arrivals[k], values, probs);
    expand_finite(capacities[k], values, probs);
  }
}

DpSpec DpSpec::symmetric_default() {
  DpSpec spec;
  spec.arrivals[0] = DiscreteDist::bernoulli(0.4);
  spec.arrivals[1] = DiscreteDist::bernoulli(0.4);
  spec.capacities[0] = DiscreteDist::finite({0, 1, 2}, {0.5, 0.3, 0.2});
  spec.capacities[1] = DiscreteDist::finite({0, 1, 2}, {0.5, 0.3, 0.2});
  return spec;
}

std::string serialize_dp_spec(const DpSpec& spec) {
  spec.validate();
  std::ostringstream out;
  out << "kind = single_hop\n";
  out << "K = 2\n";
  out << "lambda = " << fmt_double(spec.arrivals[0].mean()) << " "
      << fmt_double(spec.arrivals[1].mean()) << "\n";
  out << "mu = " << fmt_double(spec.capacities[0].mean()) << " "
      << fmt_double(spec.capacities[1].mean()) << "\n";
  std::vector<long long> values;
  std::vector<double> probs;
  for (int k = 0; k < 2; ++k) {
    expand_finite(spec.arrivals[k], values, probs);
    out << "arrival_values_" << (k + 1) << " = " << join_ll(values) << "\n";
    out << "arrival_probs_" << (k + 1) << " = " << join_doubles(probs) << "\n";
  }
  for (int k = 0; k < 2; ++k) {
    expand_finite(spec.capacities[k], values, probs);
    out << "capacity_values_" << (k + 1) << " = " << join_ll(values) << "\n";
    out << "capacity_probs_" << (k + 1) << " = " << join_doubles(probs) << "\n";
  }
  return out.str();
}

DpSpec parse_dp_spec(const std::string& text) {
  std::array<std::vector<long long>, 2> arrival_values, capacity_values;
  std::array<std::vector<double>, 2> arrival_probs, capacity_probs;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("dp spec: bad line: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "kind") {
      if (val != "single_hop") throw std::invalid_argument("dp spec: kind must be single_hop");
    } else if (key == "K") {
      if (std::stoi(val) != 2) throw std::invalid_argument("dp spec: K must be 2");
    } else if (key == "lambda" || key == "mu") {
      // Means of the explicit distributions; informational only.
    } else if (key == "arrival_values_1") {
      arrival_values[0] = parse_ll_list(val);
    } else if (key == "arrival_values_2") {
      arrival_values[1] = parse_ll_list(val);
    } else if (key == "arrival_probs_1") {
      arrival_probs[0] = parse_double_list(val);
    } else if (key == "arrival_probs_2") {
      arrival_probs[1] = parse_double_list(val);
    } else if (key == "capacity_values_1") {
      capacity_values[0] = parse_ll_list(val);
    } else if (key == "capacity_values_2") {
      capacity_values[1] = parse_ll_list(val);
    } else if (key == "capacity_probs_1") {
      capacity_probs[0] = parse_double_list(val);
    } else if (key == "capacity_probs_2") {
      capacity_probs[1] = parse_double_list(val);
    } else {
      throw std::invalid_argument("dp spec: unknown key: " + key);
    }
  }
  DpSpec spec;
  for (int k = 0; k < 2; ++k) {
    if (arrival_values[k].empty() || capacity_values[k].empty()) {
      throw std::invalid_argument("dp spec: missing distribution for queue " +
                                  std::to_string(k + 1));
    }
    spec.arrivals[k] = DiscreteDist::finite(arrival_values[k], arrival_probs[k]);
    spec.capacities[k] = DiscreteDist::finite(capacity_values[k], capacity_probs[k]);
  }
  spec.validate();
  return spec;
}

DpSpec load_dp_spec(const std::string& path) { return parse_dp_spec(read_text_file(path)); }

void save_dp_spec(const DpSpec& spec, const std::string& path) {
  write_text_file(path, serialize_dp_spec(spec));
}

std::size_t GridShape::num_states() const {
  return static_cast<std::size_t>(bound + 1) * (bound + 1) * ny1 * ny2;
}

std::size_t GridShape::index(int q1, int q2, int iy1, int iy2) const {
  return ((static_cast<std::size_t>(q1) * (bound + 1) + q2) * ny1 + iy1) * ny2 + iy2;
}

void GridShape::unpack(std::size_t idx, int& q1, int& q2, int& iy1, int& iy2) const {
  iy2 = static_cast<int>(idx % ny2);
  idx /= ny2;
  iy1 = static_cast<int>(idx % ny1);
  idx /= ny1;
  q2 = static_cast<int>(idx % (bound + 1));
  q1 = static_cast<int>(idx / (bound + 1));
}

const TruncatedMdp::Entry* TruncatedMdp::row_data(std::size_t state, int action) const {
  return entries.data() + row_begin[state * 2 + action];
}

std::size_t TruncatedMdp::row_size(std::size_t state, int action) const {
  return row_begin[state * 2 + action + 1] - row_begin[state * 2 + action];
}

double TruncatedMdp::row_sum(std::size_t state, int action) const {
  const Entry* e = row_data(state, action);
  const std::size_t n = row_size(state, action);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += e[i].prob;
  return total;
}

TruncatedMdp build_truncated_mdp(const DpSpec& spec, int bound) {
  if (bound < 1) throw std::invalid_argument("dp oracle: bound must be >= 1");
  spec.validate();

  TruncatedMdp mdp;
  mdp.spec = spec;
  std::array<std::vector<long long>, 2> xv, yv;
  std::array<std::vector<double>, 2> xp, yp;
  for (int k = 0; k < 2; ++k) {
    expand_finite(spec.arrivals[k], xv[k], xp[k]);
    expand_finite(spec.capacities[k], yv[k], yp[k]);
  }
  mdp.y1_values = yv[0];
  mdp.y2_values = yv[1];
  mdp.grid = GridShape{bound, static_cast<int>(yv[0].size()), static_cast<int>(yv[1].size())};

  const std::size_t n = mdp.grid.num_states();
  mdp.cost.resize(n);
  mdp.row_begin.assign(2 * n + 1, 0);
  mdp.entries.reserve(2 * n * xv[0].size() * xv[1].size() * yv[0].size() * yv[1].size());

  // Joint capacity redraw, independent of everything else.
  std::vector<std::pair<std::size_t, double>> y_joint;  // (iy1*ny2 + iy2, prob)
  for (std::size_t j1 = 0; j1 < yv[0].size(); ++j1) {
    for (std::size_t j2 = 0; j2 < yv[1].size(); ++j2) {
      double p = yp[0][j1] * yp[1][j2];
      if (p > 0.0) y_joint.emplace_back(j1 * yv[1].size() + j2, p);
    }
  }

  std::vector<std::pair<std::size_t, double>> q_marginal;
  for (int q1 = 0; q1 <= bound; ++q1) {
    for (int q2 = 0; q2 <= bound; ++q2) {
      for (int iy1 = 0; iy1 < mdp.grid.ny1; ++iy1) {
        for (int iy2 = 0; iy2 < mdp.grid.ny2; ++iy2) {
          const std::size_t s = mdp.grid.index(q1, q2, iy1, iy2);
          mdp.cost[s] = static_cast<double>(q1 + q2);
          for (int a = 0; a < 2; ++a) {
            const long long served1 =
                a == 0 ? std::max<long long>(q1 - yv[0][iy1], 0) : q1;
            const long long served2 =
                a == 1 ? std::max<long long>(q2 - yv[1][iy2], 0) : q2;
            // Post-arrival queue pair distribution, overflow clamped to the
            // bound (which merges arrival outcomes).
            q_marginal.clear();
            for (std::size_t i1 = 0; i1 < xv[0].size(); ++i1) {
              for (std::size_t i2 = 0; i2 < xv[1].size(); ++i2) {
                double p = xp[0][i1] * xp[1][i2];
                if (p <= 0.0) continue;
                const long long nq1 = std::min<long long>(served1 + xv[0][i1], bound);
                const long long nq2 = std::min<long long>(served2 + xv[1][i2], bound);
                const std::size_t cell =
                    static_cast<std::size_t>(nq1) * (bound + 1) + static_cast<std::size_t>(nq2);
                bool merged = false;
                for (auto& [c, acc] : q_marginal) {
                  if (c == cell) {
                    acc += p;
                    merged = true;
                    break;
                  }
                }
                if (!merged) q_marginal.emplace_back(cell, p);
              }
            }
            std::sort(q_marginal.begin(), q_marginal.end());
            for (const auto& [cell, pq] : q_marginal) {
              for (const auto& [jy, py] : y_joint) {
                mdp.entries.push_back(
                    {static_cast<std::uint32_t>(cell * (mdp.grid.ny1 * mdp.grid.ny2) + jy),
                     pq * py});
              }
            }
            mdp.row_begin[s * 2 + a + 1] = mdp.entries.size();
          }
        }
      }
    }
  }
  return mdp;
}

int PolicyTable::action_at(int q1, int q2, int iy1, int iy2) const {
  return actions[grid.index(q1, q2, iy1, iy2)];
}

PolicyTable make_policy_table(
    const DpSpec& spec, int bound,
    const std::function<int(int, int, long long, long long)>& fn) {
  if (bound < 0) throw std::invalid_argument("dp oracle: bound must be >= 0");
  spec.validate();
  PolicyTable table;
  table.spec = spec;
  std::vector<double> probs;
  expand_finite(spec.capacities[0], table.y1_values, probs);
  expand_finite(spec.capacities[1], table.y2_values, probs);
  table.grid = GridShape{bound, static_cast<int>(table.y1_values.size()),
                         static_cast<int>(table.y2_values.size())};
  table.actions.resize(table.grid.num_states());
  for (int q1 = 0; q1 <= bound; ++q1) {
    for (int q2 = 0; q2 <= bound; ++q2) {
      for (int iy1 = 0; iy1 < table.grid.ny1; ++iy1) {
        for (int iy2 = 0; iy2 < table.grid.ny2; ++iy2) {
          int a = fn(q1, q2, table.y1_values[iy1], table.y2_values[iy2]);
          if (a != 0 && a != 1) throw std::invalid_argument("dp oracle: action must be 0 or 1");
          table.actions[table.grid.index(q1, q2, iy1, iy2)] = static_cast<std::uint8_t>(a);
        }
      }
    }
  }
  return table;
}

PolicyTable restrict_table(const PolicyTable& table, int new_bound) {
  if (new_bound < 0 || new_bound > table.grid.bound) {
    throw std::invalid_argument("dp oracle: restriction bound out of range");
  }
  PolicyTable out;
  out.spec = table.spec;
  out.y1_values = table.y1_values;
  out.y2_values = table.y2_values;
  out.grid = GridShape{new_bound, table.grid.ny1, table.grid.ny2};
  out.actions.resize(out.grid.num_states());
  for (int q1 = 0; q1 <= new_bound; ++q1) {
    for (int q2 = 0; q2 <= new_bound; ++q2) {
      for (int iy1 = 0; iy1 < out.grid.ny1; ++iy1) {
        for (int iy2 = 0; iy2 < out.grid.ny2; ++iy2) {
          out.actions[out.grid.index(q1, q2, iy1, iy2)] =
              static_cast<std::uint8_t>(table.action_at(q1, q2, iy1, iy2));
        }
      }
    }
  }
  return out;
}

namespace {

// Compensated dot product of a sparse row with h: the relative-value sweeps
// stop on span bounds near 1e-12, so plain summation noise (~n*eps*|h|) would
// put the stopping floor above the requested tolerance.
double row_dot(const TruncatedMdp::Entry* e, std::size_t n, const double* h) {
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double term = e[i].prob * h[e[i].state] - comp;
    const double t = sum + term;
    comp = (t - sum) - term;
    sum = t;
  }
  return sum;
}

// One relative-value iteration sweep per call: w = cost + P_pi h. Returns the
// gain bracket from the difference span. h is normalized so h[reference] = 0.
struct EvalSweepResult {
  double gain_lo;
  double gain_hi;
  double h_abs_max;
};

EvalSweepResult eval_sweep(const TruncatedMdp& mdp, const std::vector<std::uint8_t>& pi,
                           std::vector<double>& h, std::vector<double>& w,
                           std::size_t reference) {
  const std::size_t n = mdp.num_states();
  EvalSweepResult r{std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t s = 0; s < n; ++s) {
    w[s] = mdp.cost[s] + row_dot(mdp.row_data(s, pi[s]), mdp.row_size(s, pi[s]), h.data());
    const double d = w[s] - h[s];
    r.gain_lo = std::min(r.gain_lo, d);
    r.gain_hi = std::max(r.gain_hi, d);
  }
  const double shift = w[reference];
  for (std::size_t s = 0; s < n; ++s) {
    h[s] = w[s] - shift;
    r.h_abs_max = std::max(r.h_abs_max, std::abs(h[s]));
  }
  return r;
}

// Solves the relative-value system for a fixed policy. The span of successive
// value-iteration differences brackets the average cost of the policy for any
// unichain transition structure, so the returned gain carries a rigorous
// error bound of gain_tol (or the floating-point floor, whichever is larger).
double evaluate_policy(const TruncatedMdp& mdp, const std::vector<std::uint8_t>& pi,
                       std::vector<double>& h, const DpSolveConfig& cfg) {
  const std::size_t n = mdp.num_states();
  std::vector<double> w(n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (long long sweep = 0; sweep < cfg.max_eval_sweeps; ++sweep) {
    const EvalSweepResult r = eval_sweep(mdp, pi, h, w, cfg.reference_state);
    const double floor = 16.0 * eps * std::max(1.0, r.h_abs_max);
    if (r.gain_hi - r.gain_lo <= std::max(cfg.gain_tol, floor)) {
      return 0.5 * (r.gain_lo + r.gain_hi);
    }
  }
  throw std::runtime_error(
      "dp oracle: policy evaluation failed to converge in " +
      std::to_string(cfg.max_eval_sweeps) +
      " sweeps (relative-value system ill-conditioned; chain may not be unichain)");
}

// Greedy improvement with ties to the lowest action. The state cost is
// action-independent, so only the expected next relative value matters.
std::vector<std::uint8_t> improve_policy(const TruncatedMdp& mdp, const std::vector<double>& h,
                                         double tie_tol) {
  const std::size_t n = mdp.num_states();
  std::vector<std::uint8_t> pi(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double q0 = row_dot(mdp.row_data(s, 0), mdp.row_size(s, 0), h.data());
    const double q1 = row_dot(mdp.row_data(s, 1), mdp.row_size(s, 1), h.data());
    pi[s] = q0 - q1 > tie_tol ? 1 : 0;
  }
  return pi;
}

std::vector<std::uint8_t> maxweight_start(const TruncatedMdp& mdp) {
  const std::size_t n = mdp.num_states();
  std::vector<std::uint8_t> pi(n);
  for (std::size_t s = 0; s < n; ++s) {
    int q1, q2, iy1, iy2;
    mdp.grid.unpack(s, q1, q2, iy1, iy2);
    const long long w1 = static_cast<long long>(q1) * mdp.y1_values[iy1];
    const long long w2 = static_cast<long long>(q2) * mdp.y2_values[iy2];
    pi[s] = w2 > w1 ? 1 : 0;
  }
  return pi;
}

}  // namespace

PolicyIterationResult policy_iteration(const TruncatedMdp& mdp, const DpSolveConfig& cfg) {
  const std::size_t n = mdp.num_states();
  if (cfg.reference_state >= n) {
    throw std::invalid_argument("dp oracle: reference state out of range");
  }
  std::vector<std::uint8_t> pi;
  if (cfg.initial_policy.empty()) {
    pi = maxweight_start(mdp);
  } else {
    if (cfg.initial_policy.size() != n) {
      throw std::invalid_argument("dp oracle: initial policy has wrong size");
    }
    pi = cfg.initial_policy;
    for (std::uint8_t a : pi) {
      if (a > 1) throw std::invalid_argument("dp oracle: initial policy action out of range");
    }
  }

  PolicyIterationResult result;
  std::vector<double> h(n, 0.0);
  for (int iter = 0; iter < cfg.max_improve_iters; ++iter) {
    const double gain = evaluate_policy(mdp, pi, h, cfg);
    if (!result.gains.empty() && gain > result.gains.back() + 1e-10) {
      throw std::runtime_error("dp oracle: policy iteration gain increased from " +
                               fmt_double(result.gains.back()) + " to " + fmt_double(gain));
    }
    result.gains.push_back(gain);
    std::vector<std::uint8_t> next = improve_policy(mdp, h, cfg.tie_tol);
    if (next == pi) {
      result.table.spec = mdp.spec;
      result.table.grid = mdp.grid;
      result.table.y1_values = mdp.y1_values;
      result.table.y2_values = mdp.y2_values;
      result.table.actions = std::move(pi);
      result.h = std::move(h);
      result.improvement_steps = static_cast<int>(result.gains.size());
      result.final_gain = result.gains.back();
      return result;
    }
    pi = std::move(next);
  }
  throw std::runtime_error("dp oracle: policy iteration did not stabilize in " +
                           std::to_string(cfg.max_improve_iters) + " improvement steps");
}

SequenceResult approximate_mdp_sequence(const DpSpec& spec, int region_bound,
                                        const std::vector<int>& schedule,
                                        const DpSolveConfig& cfg, int jobs) {
  if (schedule.empty()) throw std::invalid_argument("dp oracle: empty bound schedule");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (region_bound >= schedule[i]) {
      throw std::invalid_argument("dp oracle: region bound must be below every scheduled bound");
    }
    if (i > 0 && schedule[i] <= schedule[i - 1]) {
      throw std::invalid_argument("dp oracle: bound schedule must be strictly increasing");
    }
  }
  if (jobs < 1) throw std::invalid_argument("dp oracle: jobs must be >= 1");

  auto solve_one = [&spec, &cfg](int bound) {
    return policy_iteration(build_truncated_mdp(spec, bound), cfg);
  };

  SequenceResult result;
  std::optional<PolicyTable> prev, prev2;
  // Bounds are processed in schedule order; parallel waves only change when
  // each solve runs, not what it computes.
  for (std::size_t wave = 0; wave < schedule.size();) {
    const std::size_t wave_end = std::min(wave + static_cast<std::size_t>(jobs), schedule.size());
    std::vector<std::future<PolicyIterationResult>> futures;
    for (std::size_t i = wave + 1; i < wave_end; ++i) {
      futures.push_back(std::async(std::launch::async, solve_one, schedule[i]));
    }
    for (std::size_t i = wave; i < wave_end; ++i) {
      PolicyIterationResult solved =
          i == wave ? solve_one(schedule[i]) : futures[i - wave - 1].get();
      result.bounds_tried.push_back(schedule[i]);
      result.gains.push_back(solved.final_gain);
      PolicyTable cur = restrict_table(solved.table, region_bound);
      if (prev && prev->actions == cur.actions) {
        result.table = std::move(cur);
        result.converged_bound = schedule[i];
        return result;
      }
      prev2 = std::move(prev);
      prev = std::move(cur);
    }
    wave = wave_end;
  }

  // Describe the disagreement between the last two restrictions.
  std::ostringstream msg;
  msg << "dp oracle: approximate-MDP sequence did not converge; bounds tried:";
  for (int b : result.bounds_tried) msg << " " << b;
  if (prev && prev2) {
    msg << "; disagreeing states (q1,q2,y1,y2):";
    int listed = 0;
    for (std::size_t s = 0; s < prev->actions.size() && listed < 10; ++s) {
      if (prev->actions[s] != prev2->actions[s]) {
        int q1, q2, iy1, iy2;
        prev->grid.unpack(s, q1, q2, iy1, iy2);
        msg << " (" << q1 << "," << q2 << "," << prev->y1_values[iy1] << ","
            << prev->y2_values[iy2] << ")";
        ++listed;
      }
    }
  }
  throw std::runtime_error(msg.str());
}

SwitchTypeReport is_switch_type(const PolicyTable& table) {
  SwitchTypeReport report;
  const GridShape& g = table.grid;
  constexpr int kDeltas[3][2] = {{1, 0}, {0, 1}, {1, 1}};
  for (int q1 = 0; q1 <= g.bound; ++q1) {
    for (int q2 = 0; q2 <= g.bound; ++q2) {
      for (int iy1 = 0; iy1 < g.ny1; ++iy1) {
        for (int iy2 = 0; iy2 < g.ny2; ++iy2) {
          const int a = table.action_at(q1, q2, iy1, iy2);
          const int q_i = a == 0 ? q1 : q2;
          const int iy_i = a == 0 ? iy1 : iy2;
          const int ny_i = a == 0 ? g.ny1 : g.ny2;
          for (const auto& d : kDeltas) {
            const int nq_i = q_i + d[0];
            const int niy_i = iy_i + d[1];
            if (nq_i > g.bound || niy_i >= ny_i) continue;
            const int nq1 = a == 0 ? nq_i : q1;
            const int nq2 = a == 0 ? q2 : nq_i;
            const int niy1 = a == 0 ? niy_i : iy1;
            const int niy2 = a == 0 ? iy2 : niy_i;
            const int na = table.action_at(nq1, nq2, niy1, niy2);
            if (na != a) {
              report.ok = false;
              report.violations.push_back(
                  {q1, q2, iy1, iy2, nq1, nq2, niy1, niy2, a, na});
            }
          }
        }
      }
    }
  }
  return report;
}

std::string export_decision_regions(const PolicyTable& table, int iy1, int iy2) {
  if (iy1 < 0 || iy1 >= table.grid.ny1 || iy2 < 0 || iy2 >= table.grid.ny2) {
    throw std::invalid_argument("dp oracle: capacity slice out of range");
  }
  std::ostringstream out;
  out << "q1,q2,y1,y2,action\n";
  for (int q1 = 0; q1 <= table.grid.bound; ++q1) {
    for (int q2 = 0; q2 <= table.grid.bound; ++q2) {
      out << q1 << "," << q2 << "," << table.y1_values[iy1] << "," << table.y2_values[iy2]
          << "," << (table.action_at(q1, q2, iy1, iy2) + 1) << "\n";
    }
  }
  return out.str();
}

}  // namespace stnq

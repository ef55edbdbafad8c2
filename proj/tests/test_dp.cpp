#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "stnq/dp_oracle.hpp"

using namespace stnq;

namespace {

// Deterministic unit arrivals and unit capacities: every transition is a
// point mass, so rows can be checked by hand.
DpSpec unit_spec() {
  DpSpec spec;
  spec.arrivals[0] = DiscreteDist::finite({1}, {1.0});
  spec.arrivals[1] = DiscreteDist::finite({1}, {1.0});
  spec.capacities[0] = DiscreteDist::finite({1}, {1.0});
  spec.capacities[1] = DiscreteDist::finite({1}, {1.0});
  return spec;
}

// Solved once and shared; the full schedule takes a few seconds.
const SequenceResult& converged_sequence() {
  static const SequenceResult seq = approximate_mdp_sequence(DpSpec::symmetric_default());
  return seq;
}

}  // namespace

TEST_CASE("dp: spec validation and defaults") {
  DpSpec spec = DpSpec::symmetric_default();
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.arrivals[0].mean() == doctest::Approx(0.4));
  CHECK(spec.capacities[0].mean() == doctest::Approx(0.7));

  SUBCASE("poisson distributions are rejected") {
    spec.arrivals[0] = DiscreteDist::poisson(0.4);
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
  SUBCASE("probabilities must sum to one") {
    DiscreteDist bad;
    bad.kind = DiscreteDist::Kind::Finite;
    bad.values = {0, 1};
    bad.probs = {0.5, 0.4};
    spec.capacities[1] = bad;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
  SUBCASE("negative support is rejected") {
    DiscreteDist bad;
    bad.kind = DiscreteDist::Kind::Finite;
    bad.values = {-1, 1};
    bad.probs = {0.5, 0.5};
    spec.arrivals[1] = bad;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
}

TEST_CASE("dp: spec file round-trip") {
  DpSpec spec = DpSpec::symmetric_default();
  std::string text = serialize_dp_spec(spec);
  CHECK(text.find("kind = single_hop") != std::string::npos);
  CHECK(text.find("lambda = 0.4 0.4") != std::string::npos);
  CHECK(text.find("capacity_probs_1 = 0.5 0.3 0.2") != std::string::npos);

  DpSpec back = parse_dp_spec(text);
  CHECK(back.arrivals[0].values == std::vector<long long>{0, 1});
  CHECK(back.arrivals[0].probs[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(back.capacities[1].values == std::vector<long long>{0, 1, 2});
  // Re-serialization is byte-identical.
  CHECK(serialize_dp_spec(back) == text);

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_dp_spec(text + "bogus = 1\n"), std::invalid_argument);
  }
  SUBCASE("missing distributions are rejected") {
    CHECK_THROWS_AS(parse_dp_spec("kind = single_hop\nK = 2\n"), std::invalid_argument);
  }
}

TEST_CASE("dp: grid enumeration round-trips") {
  GridShape g{5, 3, 2};
  CHECK(g.num_states() == 6 * 6 * 3 * 2);
  std::size_t expect = 0;
  for (int q1 = 0; q1 <= 5; ++q1)
    for (int q2 = 0; q2 <= 5; ++q2)
      for (int iy1 = 0; iy1 < 3; ++iy1)
        for (int iy2 = 0; iy2 < 2; ++iy2) {
          CHECK(g.index(q1, q2, iy1, iy2) == expect);
          int a, b, c, d;
          g.unpack(expect, a, b, c, d);
          CHECK(a == q1);
          CHECK(b == q2);
          CHECK(c == iy1);
          CHECK(d == iy2);
          ++expect;
        }
}

TEST_CASE("dp: truncated MDP shape and stochasticity") {
  DpSpec spec = DpSpec::symmetric_default();
  TruncatedMdp mdp = build_truncated_mdp(spec, 4);
  CHECK(mdp.num_states() == 5 * 5 * 9);  // (L+1)^2 * 9 for capacity support {0,1,2}^2

  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    int q1, q2, iy1, iy2;
    mdp.grid.unpack(s, q1, q2, iy1, iy2);
    CHECK(mdp.cost[s] == static_cast<double>(q1 + q2));
    for (int a = 0; a < 2; ++a) {
      CHECK(mdp.row_sum(s, a) == doctest::Approx(1.0).epsilon(1e-12));
      const TruncatedMdp::Entry* e = mdp.row_data(s, a);
      for (std::size_t i = 0; i < mdp.row_size(s, a); ++i) {
        CHECK(e[i].state < mdp.num_states());
        CHECK(e[i].prob > 0.0);
      }
    }
  }

  CHECK_THROWS_AS(build_truncated_mdp(spec, 0), std::invalid_argument);
}

TEST_CASE("dp: transition rows match the hand-computed dynamics") {
  SUBCASE("deterministic spec gives point-mass rows") {
    TruncatedMdp mdp = build_truncated_mdp(unit_spec(), 3);
    // From q=(2,1) with y=(1,1): serving queue 1 drains it to 1, both queues
    // then receive one arrival.
    std::size_t s = mdp.grid.index(2, 1, 0, 0);
    CHECK(mdp.row_size(s, 0) == 1);
    CHECK(mdp.row_data(s, 0)[0].state == mdp.grid.index(2, 2, 0, 0));
    CHECK(mdp.row_data(s, 0)[0].prob == 1.0);
    CHECK(mdp.row_data(s, 1)[0].state == mdp.grid.index(3, 1, 0, 0));

    // Overflow: the arrival into a full queue is reassigned to the bound.
    std::size_t corner = mdp.grid.index(3, 3, 0, 0);
    CHECK(mdp.row_data(corner, 0)[0].state == mdp.grid.index(3, 3, 0, 0));
    CHECK(mdp.row_data(corner, 0)[0].prob == 1.0);
  }

  SUBCASE("bernoulli arrivals split the row by the product probabilities") {
    DpSpec spec = unit_spec();
    spec.arrivals[0] = DiscreteDist::bernoulli(0.4);
    spec.arrivals[1] = DiscreteDist::bernoulli(0.4);
    TruncatedMdp mdp = build_truncated_mdp(spec, 3);
    std::size_t s = mdp.grid.index(0, 0, 0, 0);
    REQUIRE(mdp.row_size(s, 0) == 4);
    const TruncatedMdp::Entry* e = mdp.row_data(s, 0);
    CHECK(e[0].state == mdp.grid.index(0, 0, 0, 0));
    CHECK(e[0].prob == 0.6 * 0.6);
    CHECK(e[1].state == mdp.grid.index(0, 1, 0, 0));
    CHECK(e[1].prob == 0.6 * 0.4);
    CHECK(e[2].state == mdp.grid.index(1, 0, 0, 0));
    CHECK(e[2].prob == 0.4 * 0.6);
    CHECK(e[3].state == mdp.grid.index(1, 1, 0, 0));
    CHECK(e[3].prob == 0.4 * 0.4);
  }
}

TEST_CASE("dp: policy evaluation matches a brute-force stationary average") {
  DpSpec spec = DpSpec::symmetric_default();
  TruncatedMdp mdp = build_truncated_mdp(spec, 2);
  const std::size_t n = mdp.num_states();

  // Evaluate the serve-queue-2-if-longer policy via the solver's first gain.
  DpSolveConfig cfg;
  cfg.initial_policy.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    int q1, q2, iy1, iy2;
    mdp.grid.unpack(s, q1, q2, iy1, iy2);
    cfg.initial_policy[s] = q2 > q1 ? 1 : 0;
  }
  PolicyIterationResult r = policy_iteration(mdp, cfg);

  // Brute force: power-iterate the state distribution under that policy.
  std::vector<double> rho(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (int it = 0; it < 20000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const TruncatedMdp::Entry* e = mdp.row_data(s, cfg.initial_policy[s]);
      for (std::size_t i = 0; i < mdp.row_size(s, cfg.initial_policy[s]); ++i) {
        next[e[i].state] += rho[s] * e[i].prob;
      }
    }
    rho.swap(next);
  }
  double gain = 0.0;
  for (std::size_t s = 0; s < n; ++s) gain += rho[s] * mdp.cost[s];

  CHECK(r.gains.front() == doctest::Approx(gain).epsilon(1e-9));
}

TEST_CASE("dp: policy iteration improves monotonically and stabilizes") {
  TruncatedMdp mdp = build_truncated_mdp(DpSpec::symmetric_default(), 10);
  PolicyIterationResult r = policy_iteration(mdp);
  REQUIRE(r.gains.size() >= 2);
  for (std::size_t i = 1; i < r.gains.size(); ++i) {
    CHECK(r.gains[i] <= r.gains[i - 1] + 1e-10);
  }
  CHECK(r.final_gain == r.gains.back());
  CHECK(r.h[0] == 0.0);  // reference state pinned

  SUBCASE("the optimum does not depend on the starting policy") {
    TruncatedMdp small = build_truncated_mdp(DpSpec::symmetric_default(), 8);
    DpSolveConfig from_constant;
    from_constant.initial_policy.assign(small.num_states(), 0);
    PolicyIterationResult a = policy_iteration(small);
    PolicyIterationResult b = policy_iteration(small, from_constant);
    CHECK(a.table.actions == b.table.actions);
    // The constant policy never serves queue 2 and costs strictly more.
    CHECK(b.gains.front() > b.gains.back() + 0.1);
  }

  SUBCASE("bad arguments raise diagnostics") {
    DpSolveConfig cfg;
    cfg.reference_state = mdp.num_states();
    CHECK_THROWS_AS(policy_iteration(mdp, cfg), std::invalid_argument);

    DpSolveConfig wrong_size;
    wrong_size.initial_policy.assign(3, 0);
    CHECK_THROWS_AS(policy_iteration(mdp, wrong_size), std::invalid_argument);

    DpSolveConfig one_step;
    one_step.initial_policy.assign(mdp.num_states(), 0);
    one_step.max_improve_iters = 1;
    CHECK_THROWS_AS(policy_iteration(mdp, one_step), std::runtime_error);
  }
}

TEST_CASE("dp: approximate-MDP sequence converges on the symmetric spec") {
  const SequenceResult& seq = converged_sequence();
  CHECK(seq.converged_bound == 35);
  CHECK(seq.bounds_tried == std::vector<int>{25, 30, 35});
  CHECK(seq.table.grid.bound == 20);
  CHECK(seq.gains.size() == 3);
  // The truncation stops mattering once the policy has stabilized.
  CHECK(seq.gains[1] == doctest::Approx(seq.gains[2]).epsilon(1e-6));

  SUBCASE("the serve-longest structure of the optimal policy") {
    // Fixed-capacity slices y=(1,1) and y=(2,2): serve the longest queue,
    // ties to queue 1 -- a linear switching curve on the diagonal.
    for (int iy : {1, 2}) {
      for (int q1 = 0; q1 <= 20; ++q1) {
        for (int q2 = 0; q2 <= 20; ++q2) {
          CHECK(seq.table.action_at(q1, q2, iy, iy) == (q1 >= q2 ? 0 : 1));
        }
      }
    }
    CHECK(seq.table.action_at(10, 3, 1, 1) == 0);
    CHECK(seq.table.action_at(3, 10, 1, 1) == 1);
    CHECK(seq.table.action_at(0, 0, 2, 2) == 0);
  }

  SUBCASE("the converged policy is switch-type") {
    SwitchTypeReport report = is_switch_type(seq.table);
    CHECK(report.ok);
    CHECK(report.violations.empty());
  }

  SUBCASE("cross-slice containment") {
    // Raising y1 from 1 to 2 can only enlarge the serve-queue-1 region.
    for (int q1 = 0; q1 <= 20; ++q1) {
      for (int q2 = 0; q2 <= 20; ++q2) {
        if (seq.table.action_at(q1, q2, 1, 1) == 0) {
          CHECK(seq.table.action_at(q1, q2, 2, 1) == 0);
        }
      }
    }
  }

  SUBCASE("symmetry up to ties") {
    // Swapping the two components swaps the action; states where both
    // choices are exactly equivalent resolve to action 0 on both sides.
    for (int q1 = 0; q1 <= 20; ++q1)
      for (int q2 = 0; q2 <= 20; ++q2)
        for (int iy1 = 0; iy1 < 3; ++iy1)
          for (int iy2 = 0; iy2 < 3; ++iy2) {
            int a = seq.table.action_at(q1, q2, iy1, iy2);
            int b = seq.table.action_at(q2, q1, iy2, iy1);
            CHECK((a + b == 1 || (a == 0 && b == 0)));
          }
  }

  SUBCASE("restriction is independent of the converged bound") {
    PolicyIterationResult at35 = policy_iteration(build_truncated_mdp(DpSpec::symmetric_default(), 35));
    CHECK(restrict_table(at35.table, 20).actions == seq.table.actions);
  }

  SUBCASE("parallel waves return the identical table") {
    SequenceResult par = approximate_mdp_sequence(DpSpec::symmetric_default(), 20,
                                                  default_dp_schedule(), DpSolveConfig{}, 2);
    CHECK(par.converged_bound == seq.converged_bound);
    CHECK(par.table.actions == seq.table.actions);
  }
}

TEST_CASE("dp: sequence diagnostics") {
  DpSpec spec = DpSpec::symmetric_default();
  SUBCASE("region bound must sit below the schedule") {
    CHECK_THROWS_AS(approximate_mdp_sequence(spec, 25, {25, 30}), std::invalid_argument);
    CHECK_THROWS_AS(approximate_mdp_sequence(spec, 20, {}), std::invalid_argument);
    CHECK_THROWS_AS(approximate_mdp_sequence(spec, 20, {30, 25}), std::invalid_argument);
    CHECK_THROWS_AS(approximate_mdp_sequence(spec, 20, {25, 30}, DpSolveConfig{}, 0),
                    std::invalid_argument);
  }
  SUBCASE("an exhausted schedule reports the disagreement set") {
    // The symmetric spec needs L=35 to stabilize on the q<=20 region.
    try {
      approximate_mdp_sequence(spec, 20, {25, 30});
      FAIL("expected runtime_error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("disagreeing states") != std::string::npos);
    }
  }
}

TEST_CASE("dp: switch-type checker") {
  DpSpec spec = DpSpec::symmetric_default();

  SUBCASE("MaxWeight is switch-type on the full grid") {
    PolicyTable mw = make_policy_table(spec, 20, [](int q1, int q2, long long y1, long long y2) {
      return static_cast<long long>(q1) * y1 >= static_cast<long long>(q2) * y2 ? 0 : 1;
    });
    SwitchTypeReport report = is_switch_type(mw);
    CHECK(report.ok);
    CHECK(report.violations.empty());
  }

  SUBCASE("Shortest-Queue is switch-type in routing coordinates") {
    // Component i's scalar state for routing is -q_i; tabulate over the
    // shifted coordinate v = bound - q so that raising v means a shorter
    // queue, then route to the largest v (the shortest queue).
    PolicyTable jsq = make_policy_table(spec, 20, [](int v1, int v2, long long, long long) {
      return v1 >= v2 ? 0 : 1;
    });
    SwitchTypeReport report = is_switch_type(jsq);
    CHECK(report.ok);
  }

  SUBCASE("constant tables are vacuously switch-type") {
    for (int fixed : {0, 1}) {
      PolicyTable c = make_policy_table(spec, 6, [fixed](int, int, long long, long long) {
        return fixed;
      });
      CHECK(is_switch_type(c).ok);
    }
  }

  SUBCASE("a planted violation is caught with its counterexample") {
    PolicyTable bad = make_policy_table(spec, 4, [](int q1, int q2, long long y1, long long y2) {
      return (q1 == 2 && q2 == 0 && y1 == 1 && y2 == 1) ? 1 : 0;
    });
    SwitchTypeReport report = is_switch_type(bad);
    CHECK_FALSE(report.ok);
    bool found = false;
    for (const SwitchTypeViolation& v : report.violations) {
      if (v.q1 == 1 && v.q2 == 0 && v.iy1 == 1 && v.iy2 == 1 && v.nq1 == 2 && v.nq2 == 0 &&
          v.action_state == 0 && v.action_neighbor == 1) {
        found = true;
      }
    }
    CHECK(found);
  }

  SUBCASE("tabulation rejects out-of-range actions") {
    CHECK_THROWS_AS(make_policy_table(spec, 2, [](int, int, long long, long long) { return 2; }),
                    std::invalid_argument);
  }
}

TEST_CASE("dp: restriction and region export") {
  DpSpec spec = DpSpec::symmetric_default();
  PolicyTable mw = make_policy_table(spec, 8, [](int q1, int q2, long long y1, long long y2) {
    return static_cast<long long>(q1) * y1 >= static_cast<long long>(q2) * y2 ? 0 : 1;
  });

  SUBCASE("restriction preserves actions on the sub-grid") {
    PolicyTable small = restrict_table(mw, 5);
    CHECK(small.grid.bound == 5);
    for (int q1 = 0; q1 <= 5; ++q1)
      for (int q2 = 0; q2 <= 5; ++q2)
        for (int iy1 = 0; iy1 < 3; ++iy1)
          for (int iy2 = 0; iy2 < 3; ++iy2) {
            CHECK(small.action_at(q1, q2, iy1, iy2) == mw.action_at(q1, q2, iy1, iy2));
          }
    CHECK_THROWS_AS(restrict_table(mw, 9), std::invalid_argument);
  }

  SUBCASE("region CSV is a 1-based action grid") {
    std::string csv = export_decision_regions(mw, 1, 1);
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < csv.size()) {
      std::size_t nl = csv.find('\n', pos);
      lines.push_back(csv.substr(pos, nl - pos));
      pos = nl + 1;
    }
    REQUIRE(lines.size() == 1 + 9 * 9);
    CHECK(lines[0] == "q1,q2,y1,y2,action");
    CHECK(lines[1] == "0,0,1,1,1");   // tie at the origin serves queue 1
    CHECK(lines[2] == "0,1,1,1,2");   // q2 longer: serve queue 2
    CHECK(lines[10] == "1,0,1,1,1");  // q1 longer: serve queue 1
    for (std::size_t i = 1; i < lines.size(); ++i) {
      char action = lines[i].back();
      CHECK((action == '1' || action == '2'));
    }
    CHECK_THROWS_AS(export_decision_regions(mw, 3, 0), std::invalid_argument);
  }
}

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "poisonctl/rng.hpp"
#include "poisonctl/theory.hpp"

using namespace poisonctl;

namespace {

// Deterministic two-state, two-action chain: action 0 stays, action 1
// switches; being in state 1 costs 1.
TabularMDP stay_switch(double gamma) {
  TabularMDP mdp;
  mdp.S = 2;
  mdp.A = 2;
  mdp.gamma = gamma;
  mdp.c_max = 1.0;
  mdp.transition.assign(2 * 2 * 2, 0.0);
  auto set = [&](std::size_t s, std::size_t a, std::size_t sp) {
    mdp.transition[(s * 2 + a) * 2 + sp] = 1.0;
  };
  set(0, 0, 0);
  set(0, 1, 1);
  set(1, 0, 1);
  set(1, 1, 0);
  mdp.cost = {0.0, 0.0, 1.0, 1.0};  // g(s, a) = [s == 1]
  mdp.mu0 = {0.5, 0.5};
  return mdp;
}

TabularMDP random_mdp(RngStream& rng, std::size_t S, std::size_t A,
                      double gamma) {
  TabularMDP mdp;
  mdp.S = S;
  mdp.A = A;
  mdp.gamma = gamma;
  mdp.c_max = 1.0;
  mdp.cost.resize(S * A);
  mdp.transition.resize(S * A * S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      mdp.cost[s * A + a] = rng.next_uniform();
      auto row = detail::random_distribution(S, rng);
      for (std::size_t sp = 0; sp < S; ++sp) {
        mdp.transition[(s * A + a) * S + sp] = row[sp];
      }
    }
  }
  mdp.mu0.assign(S, 1.0 / S);
  return mdp;
}

// One Bellman-optimality sweep, used to probe residuals and contraction.
std::vector<double> bellman_apply(const TabularMDP& mdp,
                                  const std::vector<double>& v) {
  std::vector<double> out(mdp.S);
  for (std::size_t s = 0; s < mdp.S; ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < mdp.A; ++a) {
      double q = mdp.g(s, a);
      for (std::size_t sp = 0; sp < mdp.S; ++sp) {
        q += mdp.gamma * mdp.tr(s, a, sp) * v[sp];
      }
      best = std::min(best, q);
    }
    out[s] = best;
  }
  return out;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("value iteration solves the stay/switch chain") {
  auto mdp = stay_switch(0.5);
  validate_mdp(mdp);
  auto res = value_iteration(mdp, 1e-12);
  CHECK(res.values[0] == Catch::Approx(0.0).margin(1e-9));
  CHECK(res.values[1] == Catch::Approx(1.0).margin(1e-9));
  CHECK(res.policy[0] == 0);  // stay in the free state
  CHECK(res.policy[1] == 1);  // escape the costly state
}

TEST_CASE("value iteration on degenerate costs") {
  RngStream rng(501);
  auto mdp = random_mdp(rng, 5, 3, 0.9);

  auto zero = mdp;
  std::fill(zero.cost.begin(), zero.cost.end(), 0.0);
  auto rz = value_iteration(zero, 1e-10);
  for (double v : rz.values) CHECK(v == 0.0);

  auto flat = mdp;
  std::fill(flat.cost.begin(), flat.cost.end(), 0.25);
  auto rf = value_iteration(flat, 1e-10);
  for (double v : rf.values) {
    CHECK(v == Catch::Approx(0.25 / (1.0 - 0.9)).margin(1e-8));
  }
}

TEST_CASE("value iteration meets its residual and range contracts") {
  RngStream rng(502);
  for (int trial = 0; trial < 10; ++trial) {
    auto mdp = random_mdp(rng, 3 + rng.next_below(6), 2 + rng.next_below(4),
                          0.5 + 0.45 * rng.next_uniform());
    validate_mdp(mdp);
    auto res = value_iteration(mdp, 1e-10);
    CHECK(sup_diff(bellman_apply(mdp, res.values), res.values) <= 1e-10);
    for (double v : res.values) {
      CHECK(v >= -1e-12);
      CHECK(v <= mdp.c_max / (1.0 - mdp.gamma) + 1e-9);
    }
  }
}

TEST_CASE("bellman sweeps contract at rate gamma") {
  RngStream rng(503);
  auto mdp = random_mdp(rng, 6, 3, 0.85);
  std::vector<double> v(mdp.S);
  for (double& x : v) x = 10.0 * rng.next_uniform();
  auto tv = bellman_apply(mdp, v);
  auto ttv = bellman_apply(mdp, tv);
  double d1 = sup_diff(tv, v);
  double d2 = sup_diff(ttv, tv);
  for (int k = 0; k < 20; ++k) {
    CHECK(d2 <= mdp.gamma * d1 + 1e-12);
    v = tv;
    tv = ttv;
    ttv = bellman_apply(mdp, tv);
    d1 = d2;
    d2 = sup_diff(ttv, tv);
  }
}

TEST_CASE("policy evaluation is consistent with value iteration") {
  RngStream rng(504);
  auto mdp = random_mdp(rng, 7, 4, 0.9);
  auto res = value_iteration(mdp, 1e-10);
  auto v_opt = policy_evaluation(mdp, res.policy, 1e-10);
  CHECK(sup_diff(v_opt, res.values) <= 1e-9);

  // No policy beats the optimal values.
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> policy(mdp.S);
    for (auto& a : policy) a = rng.next_below(mdp.A);
    auto v = policy_evaluation(mdp, policy, 1e-10);
    for (std::size_t s = 0; s < mdp.S; ++s) {
      CHECK(res.values[s] <= v[s] + 2e-10);
    }
  }
}

TEST_CASE("a nearly myopic discount reduces evaluation to the stage cost") {
  RngStream rng(505);
  auto mdp = random_mdp(rng, 5, 3, 0.01);
  std::vector<std::size_t> policy(mdp.S);
  for (auto& a : policy) a = rng.next_below(mdp.A);
  auto v = policy_evaluation(mdp, policy, 1e-12);
  for (std::size_t s = 0; s < mdp.S; ++s) {
    CHECK(std::abs(v[s] - mdp.g(s, policy[s])) <= 0.02 * mdp.c_max);
  }
}

TEST_CASE("policy evaluation matches a monte-carlo rollout") {
  RngStream rng(506);
  auto mdp = random_mdp(rng, 4, 1, 0.9);
  std::vector<std::size_t> policy(mdp.S, 0);
  auto v = policy_evaluation(mdp, policy, 1e-12);

  const int rollouts = 100000;
  const int horizon = 250;  // gamma^250 / (1 - gamma) ~ 4e-11: negligible tail
  double sum = 0.0;
  double sumsq = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    std::size_t s = 0;
    double ret = 0.0;
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      ret += disc * mdp.g(s, 0);
      disc *= mdp.gamma;
      std::span<const double> row{&mdp.transition[s * mdp.S], mdp.S};
      s = detail::sample_categorical(row, rng);
    }
    sum += ret;
    sumsq += ret * ret;
  }
  double mean = sum / rollouts;
  double var = sumsq / rollouts - mean * mean;
  double stderr3 = 3.0 * std::sqrt(var / rollouts);
  CHECK(std::abs(mean - v[0]) <= stderr3 + 1e-6);
}

TEST_CASE("l1 distance on worked instances") {
  std::vector<double> p{0.5, 0.5};
  CHECK(l1_distance(p, p) == 0.0);
  CHECK(l1_distance(std::vector<double>{1.0, 0.0},
                    std::vector<double>{0.0, 1.0}) == 2.0);
  CHECK(l1_distance(std::vector<double>{0.5, 0.5},
                    std::vector<double>{0.6, 0.4}) ==
        Catch::Approx(0.2).margin(1e-12));
  CHECK_THROWS_WITH(l1_distance(std::vector<double>{0.9, 0.3},
                                std::vector<double>{0.5, 0.5}),
                    Catch::Matchers::ContainsSubstring("not a probability"));
  CHECK_THROWS_WITH(
      l1_distance(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}),
      Catch::Matchers::ContainsSubstring("length mismatch"));
}

TEST_CASE("a perfect surrogate gives a zero planning gap") {
  RngStream rng(507);
  PlanningGapParams params;
  auto pair = random_mdp_pair(params, 0.9, rng);
  pair.surrogate = pair.truth;  // epsilon = 0 by construction

  auto on_surrogate = value_iteration(pair.surrogate, 1e-10);
  auto on_truth = value_iteration(pair.truth, 1e-10);
  auto v_planned = policy_evaluation(pair.truth, on_surrogate.policy, 1e-10);
  auto v_optimal = policy_evaluation(pair.truth, on_truth.policy, 1e-10);
  for (std::size_t s = 0; s < pair.truth.S; ++s) {
    CHECK(std::abs(v_planned[s] - v_optimal[s]) <= 2e-10);
  }
}

TEST_CASE("structured pairs perturb every row by the same known amount") {
  RngStream rng(508);
  PlanningGapParams params;
  for (int trial = 0; trial < 10; ++trial) {
    auto pair = random_mdp_pair(params, 0.9, rng);
    validate_mdp(pair.truth);
    validate_mdp(pair.surrogate);
    CHECK(pair.truth.S <= params.max_states);
    CHECK(pair.truth.A <= params.max_actions);
    for (std::size_t s = 0; s < pair.truth.S; ++s) {
      for (std::size_t a = 0; a < pair.truth.A; ++a) {
        double dist = 0.0;
        for (std::size_t sp = 0; sp < pair.truth.S; ++sp) {
          dist += std::abs(pair.truth.tr(s, a, sp) -
                           pair.surrogate.tr(s, a, sp));
        }
        CHECK(dist == Catch::Approx(pair.epsilon).margin(1e-12));
        // Costs are shared: the pair differs only in transitions.
        CHECK(pair.truth.g(s, a) == pair.surrogate.g(s, a));
      }
    }
  }
}

TEST_CASE("planning against a wrong model stays within the gap bound") {
  PlanningGapParams params;
  auto report = verify_planning_gap_bound(params, 500, RngStream(509));
  CHECK(report.trials.size() == 500);
  CHECK(report.violations == 0);
  CHECK(report.max_ratio <= 1.0);
  for (const auto& trial : report.trials) {
    CHECK(trial.gap >= -2e-10);  // planning never beats the optimum
    CHECK(trial.gap <= trial.bound + 1e-8);
  }
}

TEST_CASE("the concentration bound value is reproduced exactly") {
  auto report = verify_l1_concentration_bound(2, 1000, 0.05, 1, RngStream(510));
  // 2 * sqrt(ln(2^3 / 0.05) / (2 * 1000)), frozen from independent arithmetic.
  CHECK(report.bound == Catch::Approx(0.10074893364432029).epsilon(1e-14));
}

TEST_CASE("large samples concentrate far below one percent deviation") {
  auto report =
      verify_l1_concentration_bound(2, 1000000, 0.05, 100, RngStream(511));
  for (const auto& trial : report.trials) {
    CHECK(trial.l1 <= 0.01);
  }
  CHECK(report.coverage == 1.0);
}

TEST_CASE("empirical coverage meets the advertised confidence") {
  for (std::size_t N : {2, 4}) {
    for (std::size_t n : {100, 1000}) {
      auto report =
          verify_l1_concentration_bound(N, n, 0.05, 2000, RngStream(512 + N + n));
      CHECK(report.coverage >= 0.95);
    }
  }
}

TEST_CASE("mdp validation catches malformed tensors") {
  auto mdp = stay_switch(0.5);
  auto broken = mdp;
  broken.transition[0] = 0.7;  // row no longer sums to 1
  CHECK_THROWS_WITH(validate_mdp(broken),
                    Catch::Matchers::ContainsSubstring("sum to 1"));

  broken = mdp;
  broken.transition[0] = -0.5;
  broken.transition[1] = 1.5;
  CHECK_THROWS_WITH(validate_mdp(broken),
                    Catch::Matchers::ContainsSubstring("negative"));

  broken = mdp;
  broken.cost[0] = 2.0;  // above c_max
  CHECK_THROWS_WITH(validate_mdp(broken),
                    Catch::Matchers::ContainsSubstring("c_max"));

  broken = mdp;
  broken.gamma = 1.0;
  CHECK_THROWS_WITH(validate_mdp(broken),
                    Catch::Matchers::ContainsSubstring("invalid discount"));
}

TEST_CASE("theory reports serialize with stable headers") {
  PlanningGapParams params;
  auto gap_report = verify_planning_gap_bound(params, 3, RngStream(513));
  auto dir = std::filesystem::temp_directory_path();
  auto gap_path = (dir / "poisonctl_gap.csv").string();
  write_planning_gap_csv(gap_path, gap_report);
  std::ifstream gin(gap_path);
  std::string line;
  REQUIRE(std::getline(gin, line));
  CHECK(line == "trial,epsilon,gap,bound,ratio");
  std::size_t rows = 0;
  while (std::getline(gin, line)) ++rows;
  CHECK(rows == 3);

  auto conc_report =
      verify_l1_concentration_bound(2, 100, 0.05, 4, RngStream(514));
  auto conc_path = (dir / "poisonctl_conc.csv").string();
  write_concentration_csv(conc_path, conc_report);
  std::ifstream cin_(conc_path);
  REQUIRE(std::getline(cin_, line));
  CHECK(line == "trial,l1,bound,covered");
  rows = 0;
  while (std::getline(cin_, line)) ++rows;
  CHECK(rows == 4);
}

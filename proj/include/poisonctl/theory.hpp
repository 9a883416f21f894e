#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poisonctl/io.hpp"
#include "poisonctl/rng.hpp"

namespace poisonctl {

/// Finite MDP with flat row-major tensors. transition[(s*A + a)*S + s'] is
/// the probability of landing in s'; cost[s*A + a] lies in [0, c_max].
struct TabularMDP {
  std::size_t S = 0;
  std::size_t A = 0;
  std::vector<double> transition;  // S*A*S
  std::vector<double> cost;        // S*A
  double gamma = 0.9;
  double c_max = 1.0;
  std::vector<double> mu0;  // initial distribution over S

  double tr(std::size_t s, std::size_t a, std::size_t sp) const {
    return transition[(s * A + a) * S + sp];
  }
  double g(std::size_t s, std::size_t a) const { return cost[s * A + a]; }
};

inline void validate_mdp(const TabularMDP& mdp) {
  if (mdp.S < 1 || mdp.A < 1) {
    throw std::invalid_argument("mdp: need at least one state and action");
  }
  if (!(mdp.gamma > 0.0) || mdp.gamma >= 1.0) {
    throw std::invalid_argument("mdp: invalid discount");
  }
  if (mdp.transition.size() != mdp.S * mdp.A * mdp.S ||
      mdp.cost.size() != mdp.S * mdp.A) {
    throw std::invalid_argument("mdp: tensor sizes inconsistent");
  }
  for (std::size_t s = 0; s < mdp.S; ++s) {
    for (std::size_t a = 0; a < mdp.A; ++a) {
      double total = 0.0;
      for (std::size_t sp = 0; sp < mdp.S; ++sp) {
        double p = mdp.tr(s, a, sp);
        if (p < 0.0) throw std::invalid_argument("mdp: negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("mdp: transition row does not sum to 1");
      }
      double c = mdp.g(s, a);
      if (c < 0.0 || c > mdp.c_max) {
        throw std::invalid_argument("mdp: cost outside [0, c_max]");
      }
    }
  }
}

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<std::size_t> policy;
  std::size_t iterations = 0;
};

/// Cost-minimizing value iteration. Stops when successive sup-norm change
/// <= tol, which bounds the Bellman residual of the returned values by
/// gamma * tol. Ties broken toward the lowest action index.
inline ValueIterationResult value_iteration(const TabularMDP& mdp,
                                            double tol = 1e-10) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol <= 0");
  ValueIterationResult res;
  res.values.assign(mdp.S, 0.0);
  std::vector<double> next(mdp.S, 0.0);
  const std::size_t max_iters = 10'000'000;
  for (std::size_t iter = 1; iter <= max_iters; ++iter) {
    double diff = 0.0;
    for (std::size_t s = 0; s < mdp.S; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.A; ++a) {
        double q = mdp.g(s, a);
        const double* row = &mdp.transition[(s * mdp.A + a) * mdp.S];
        for (std::size_t sp = 0; sp < mdp.S; ++sp) {
          q += mdp.gamma * row[sp] * res.values[sp];
        }
        if (q < best) best = q;
      }
      next[s] = best;
      diff = std::max(diff, std::abs(next[s] - res.values[s]));
    }
    std::swap(res.values, next);
    res.iterations = iter;
    if (diff <= tol) break;
  }
  res.policy.assign(mdp.S, 0);
  for (std::size_t s = 0; s < mdp.S; ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < mdp.A; ++a) {
      double q = mdp.g(s, a);
      const double* row = &mdp.transition[(s * mdp.A + a) * mdp.S];
      for (std::size_t sp = 0; sp < mdp.S; ++sp) {
        q += mdp.gamma * row[sp] * res.values[sp];
      }
      if (q < best) {
        best = q;
        res.policy[s] = a;
      }
    }
  }
  return res;
}

/// Iterative evaluation of a fixed deterministic policy to the same
/// successive-change tolerance as value_iteration.
inline std::vector<double> policy_evaluation(
    const TabularMDP& mdp, const std::vector<std::size_t>& policy,
    double tol = 1e-10) {
  if (policy.size() != mdp.S) {
    throw std::invalid_argument("policy_evaluation: policy size mismatch");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("policy_evaluation: tol <= 0");
  std::vector<double> values(mdp.S, 0.0);
  std::vector<double> next(mdp.S, 0.0);
  const std::size_t max_iters = 10'000'000;
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    double diff = 0.0;
    for (std::size_t s = 0; s < mdp.S; ++s) {
      std::size_t a = policy[s];
      if (a >= mdp.A) {
        throw std::invalid_argument("policy_evaluation: action out of range");
      }
      double q = mdp.g(s, a);
      const double* row = &mdp.transition[(s * mdp.A + a) * mdp.S];
      for (std::size_t sp = 0; sp < mdp.S; ++sp) {
        q += mdp.gamma * row[sp] * values[sp];
      }
      next[s] = q;
      diff = std::max(diff, std::abs(next[s] - values[s]));
    }
    std::swap(values, next);
    if (diff <= tol) break;
  }
  return values;
}

inline double l1_distance(std::span<const double> p,
                          std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("l1_distance: length mismatch");
  }
  double sp = 0.0;
  double sq = 0.0;
  double dist = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    dist += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw std::invalid_argument("l1_distance: input is not a probability "
                                "vector");
  }
  return dist;
}

namespace detail {

inline std::vector<double> random_distribution(std::size_t n, RngStream& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) {
    x = -std::log(1.0 - rng.next_uniform());
    total += x;
  }
  for (double& x : p) x /= total;
  return p;
}

inline std::size_t sample_categorical(std::span<const double> p,
                                      RngStream& rng) {
  double u = rng.next_uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return i;
  }
  return p.size() - 1;
}

}  // namespace detail

/// Knobs for the randomized planning-with-wrong-model check.
struct PlanningGapParams {
  std::size_t max_states = 10;
  std::size_t max_actions = 10;
  std::vector<double> gammas = {0.5, 0.9};
  double c_max = 1.0;
  // When set, MDPs factor states as (model, data) with a deterministic model
  // map and a shared data distribution, so every transition row of the pair
  // differs by exactly the same L1 amount. Otherwise rows are independent.
  bool attack_structured = true;
  double tol = 1e-10;
};

/// An MDP together with a perturbed-transition surrogate sharing its costs;
/// epsilon is the (max-row) L1 transition error, known exactly.
struct MdpPair {
  TabularMDP truth;
  TabularMDP surrogate;
  double epsilon = 0.0;
};

inline MdpPair random_mdp_pair(const PlanningGapParams& params, double gamma,
                               RngStream& rng) {
  MdpPair pair;
  TabularMDP& mdp = pair.truth;
  mdp.gamma = gamma;
  mdp.c_max = params.c_max;

  if (params.attack_structured) {
    // States factor as s = m * Z + z. Next model part is a deterministic
    // function of (s, a); the data part is drawn from one shared
    // distribution, mirroring dynamics whose stochasticity lives entirely in
    // the incoming data point.
    std::size_t m_states = 2 + rng.next_below(4);  // 2..5
    std::size_t z_max = std::max<std::size_t>(2, params.max_states / m_states);
    std::size_t z_states = 2 + rng.next_below(z_max - 1);  // 2..z_max
    mdp.S = m_states * z_states;
    mdp.A = 2 + rng.next_below(params.max_actions - 1);

    std::vector<double> p = detail::random_distribution(z_states, rng);
    std::vector<double> q = detail::random_distribution(z_states, rng);
    double alpha = 0.5 * rng.next_uniform();
    std::vector<double> p_hat(z_states);
    for (std::size_t i = 0; i < z_states; ++i) {
      p_hat[i] = (1.0 - alpha) * p[i] + alpha * q[i];
    }
    pair.epsilon = 0.0;
    for (std::size_t i = 0; i < z_states; ++i) {
      pair.epsilon += std::abs(p[i] - p_hat[i]);
    }

    mdp.transition.assign(mdp.S * mdp.A * mdp.S, 0.0);
    mdp.cost.resize(mdp.S * mdp.A);
    pair.surrogate = mdp;
    for (std::size_t s = 0; s < mdp.S; ++s) {
      for (std::size_t a = 0; a < mdp.A; ++a) {
        std::size_t m_next = rng.next_below(m_states);
        double c = params.c_max * rng.next_uniform();
        mdp.cost[s * mdp.A + a] = c;
        pair.surrogate.cost[s * mdp.A + a] = c;
        for (std::size_t z = 0; z < z_states; ++z) {
          std::size_t sp = m_next * z_states + z;
          mdp.transition[(s * mdp.A + a) * mdp.S + sp] = p[z];
          pair.surrogate.transition[(s * mdp.A + a) * mdp.S + sp] = p_hat[z];
        }
      }
    }
  } else {
    mdp.S = 2 + rng.next_below(params.max_states - 1);
    mdp.A = 2 + rng.next_below(params.max_actions - 1);
    mdp.transition.resize(mdp.S * mdp.A * mdp.S);
    mdp.cost.resize(mdp.S * mdp.A);
    pair.surrogate = mdp;
    pair.epsilon = 0.0;
    for (std::size_t s = 0; s < mdp.S; ++s) {
      for (std::size_t a = 0; a < mdp.A; ++a) {
        std::vector<double> row = detail::random_distribution(mdp.S, rng);
        std::vector<double> noise = detail::random_distribution(mdp.S, rng);
        double alpha = 0.5 * rng.next_uniform();
        double dist = 0.0;
        double c = params.c_max * rng.next_uniform();
        mdp.cost[s * mdp.A + a] = c;
        pair.surrogate.cost[s * mdp.A + a] = c;
        for (std::size_t sp = 0; sp < mdp.S; ++sp) {
          double hat = (1.0 - alpha) * row[sp] + alpha * noise[sp];
          mdp.transition[(s * mdp.A + a) * mdp.S + sp] = row[sp];
          pair.surrogate.transition[(s * mdp.A + a) * mdp.S + sp] = hat;
          dist += std::abs(row[sp] - hat);
        }
        pair.epsilon = std::max(pair.epsilon, dist);
      }
    }
  }
  mdp.mu0.assign(mdp.S, 1.0 / static_cast<double>(mdp.S));
  pair.surrogate.mu0 = mdp.mu0;
  pair.surrogate.gamma = gamma;
  pair.surrogate.c_max = params.c_max;
  return pair;
}

struct PlanningGapTrial {
  double epsilon = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  double ratio = 0.0;
};

struct PlanningGapReport {
  std::vector<PlanningGapTrial> trials;
  std::size_t violations = 0;  // gap > bound + slack
  double max_ratio = 0.0;
  double slack = 1e-8;
};

/// Randomized check of the planning-gap bound gamma*c_max*eps/(1-gamma)^2:
/// plan optimally against a surrogate whose transitions are eps-wrong in L1,
/// evaluate that plan on the truth, and compare the suboptimality gap to the
/// bound.
inline PlanningGapReport verify_planning_gap_bound(const PlanningGapParams& params, std::size_t trials,
                                RngStream rng) {
  if (trials < 1) throw std::invalid_argument("verify_planning_gap_bound: trials must be >= 1");
  if (params.gammas.empty()) {
    throw std::invalid_argument("verify_planning_gap_bound: no discounts given");
  }
  PlanningGapReport report;
  report.trials.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    RngStream trial_rng = rng_fork(rng, i);
    double gamma = params.gammas[i % params.gammas.size()];
    MdpPair pair = random_mdp_pair(params, gamma, trial_rng);

    ValueIterationResult on_surrogate =
        value_iteration(pair.surrogate, params.tol);
    ValueIterationResult on_truth = value_iteration(pair.truth, params.tol);
    std::vector<double> v_planned =
        policy_evaluation(pair.truth, on_surrogate.policy, params.tol);
    std::vector<double> v_optimal =
        policy_evaluation(pair.truth, on_truth.policy, params.tol);

    PlanningGapTrial trial;
    trial.epsilon = pair.epsilon;
    for (std::size_t s = 0; s < pair.truth.S; ++s) {
      trial.gap = std::max(trial.gap, v_planned[s] - v_optimal[s]);
    }
    trial.bound = gamma * params.c_max * pair.epsilon /
                  ((1.0 - gamma) * (1.0 - gamma));
    trial.ratio = trial.bound > 0.0 ? trial.gap / trial.bound : 0.0;
    if (trial.gap > trial.bound + report.slack) ++report.violations;
    report.max_ratio = std::max(report.max_ratio, trial.ratio);
    report.trials.push_back(trial);
  }
  return report;
}

struct ConcentrationTrial {
  double l1 = 0.0;
  bool covered = false;
};

struct ConcentrationReport {
  std::vector<ConcentrationTrial> trials;
  double bound = 0.0;
  double coverage = 0.0;  // fraction of trials with l1 <= bound
};

/// Empirical-distribution concentration check: draw n samples from a random
/// N-outcome distribution and test the L1 deviation against
/// 2*sqrt(ln(2^{N+1}/delta)/(2n)), which should hold with probability 1-delta.
inline ConcentrationReport verify_l1_concentration_bound(std::size_t N, std::size_t n, double delta,
                              std::size_t trials, RngStream rng) {
  if (N < 2) throw std::invalid_argument("verify_l1_concentration_bound: N must be >= 2");
  if (n < 1) throw std::invalid_argument("verify_l1_concentration_bound: n must be >= 1");
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("verify_l1_concentration_bound: delta must be in (0,1)");
  }
  if (trials < 1) throw std::invalid_argument("verify_l1_concentration_bound: trials must be >= 1");

  ConcentrationReport report;
  report.bound = 2.0 * std::sqrt((static_cast<double>(N + 1) * std::log(2.0) -
                                  std::log(delta)) /
                                 (2.0 * static_cast<double>(n)));
  report.trials.reserve(trials);
  std::size_t covered_count = 0;
  std::vector<double> counts(N);
  for (std::size_t i = 0; i < trials; ++i) {
    RngStream trial_rng = rng_fork(rng, i);
    std::vector<double> p = detail::random_distribution(N, trial_rng);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      counts[detail::sample_categorical(p, trial_rng)] += 1.0;
    }
    double l1 = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      l1 += std::abs(counts[j] / static_cast<double>(n) - p[j]);
    }
    ConcentrationTrial trial;
    trial.l1 = l1;
    trial.covered = l1 <= report.bound;
    if (trial.covered) ++covered_count;
    report.trials.push_back(trial);
  }
  report.coverage =
      static_cast<double>(covered_count) / static_cast<double>(trials);
  return report;
}

inline void write_planning_gap_csv(const std::string& path,
                            const PlanningGapReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_planning_gap_csv: cannot open " + path);
  out << "trial,epsilon,gap,bound,ratio\n";
  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    const PlanningGapTrial& t = report.trials[i];
    out << i << ',' << format_double(t.epsilon) << ',' << format_double(t.gap)
        << ',' << format_double(t.bound) << ',' << format_double(t.ratio)
        << '\n';
  }
}

inline void write_concentration_csv(const std::string& path, const ConcentrationReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_concentration_csv: cannot open " + path);
  out << "trial,l1,bound,covered\n";
  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    const ConcentrationTrial& t = report.trials[i];
    out << i << ',' << format_double(t.l1) << ','
        << format_double(report.bound) << ',' << (t.covered ? 1 : 0) << '\n';
  }
}

}  // namespace poisonctl

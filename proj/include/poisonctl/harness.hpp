#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "poisonctl/attackers.hpp"
#include "poisonctl/core.hpp"
#include "poisonctl/costs.hpp"
#include "poisonctl/datastream.hpp"
#include "poisonctl/io.hpp"
#include "poisonctl/log.hpp"
#include "poisonctl/rng.hpp"
#include "poisonctl/trajopt.hpp"
#include "poisonctl/victims.hpp"

namespace poisonctl {

/// Full description of one simulated episode.
struct EpisodeConfig {
  VictimSpec victim;
  CostSpec cost;
  EnvironmentSpec env;
  PolicyKind policy = PolicyKind::kNull;
  TrajOptConfig opt;
  std::size_t T = 1;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  std::size_t pre_attack_n = 0;
  std::optional<ModelParams> theta0;  // absent: drawn from a standard Gaussian
  bool random_target = false;  // Targeted goal drawn from a standard Gaussian
};

struct StepRecord {
  double g = 0.0;
  double jtilde = 0.0;
  double perturb_norm = 0.0;
  ModelParams theta;  // model entering the step (pre-update)
  DataPoint z;
  DataPoint a;
};

struct EpisodeTrace {
  PolicyKind policy = PolicyKind::kNull;
  std::uint64_t seed = 0;
  std::size_t T = 0;
  std::vector<StepRecord> steps;
  ModelParams theta_final;  // model after the last update
  ModelParams theta_start;
  ModelParams target_used;  // resolved Targeted goal (empty if not targeted)
  double jtilde_final = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

// Child-stream ids forked off the episode seed. The raw data stream gets its
// own stream and is generated up front, so it is identical across policies
// sharing a seed.
enum : std::uint64_t {
  kForkEnv = 0,
  kForkPreAttack = 1,
  kForkTheta0 = 2,
  kForkTarget = 3,
  kForkPlanner = 4,
};

inline ModelParams gaussian_model(const VictimSpec& victim, RngStream rng) {
  ModelParams m = victim.make_model();
  for (double& v : m.values) v = rng.next_gaussian();
  return m;
}

}  // namespace detail

/// Runs one episode: draw the stream, let the policy perturb each point, feed
/// the victim, and record costs. Fully deterministic in config.seed.
inline EpisodeTrace run_episode(const EpisodeConfig& config) {
  if (config.T < 1) throw std::invalid_argument("run_episode: T must be >= 1");
  if (!(config.gamma > 0.0) || config.gamma >= 1.0) {
    throw std::invalid_argument("run_episode: invalid discount");
  }
  validate_environment(config.env);
  if (config.env.dim() != config.victim.d) {
    throw std::invalid_argument(
        "run_episode: environment dimension != victim dimension");
  }

  RngStream root(config.seed);
  RngStream env_rng = rng_fork(root, detail::kForkEnv);
  RngStream planner_rng = rng_fork(root, detail::kForkPlanner);

  ModelParams theta = config.theta0.has_value()
                          ? *config.theta0
                          : detail::gaussian_model(
                                config.victim,
                                rng_fork(root, detail::kForkTheta0));
  if (theta.values.size() != config.victim.param_count()) {
    throw std::invalid_argument("run_episode: theta0 shape mismatch");
  }
  theta.kind = config.victim.kind;
  theta.k = config.victim.kind == ModelKind::kSoftKMeans ? config.victim.k : 1;
  theta.d = config.victim.d;

  CostSpec cost = config.cost;
  if (config.random_target && cost.nefarious == NefariousKind::kTargeted) {
    cost.target = detail::gaussian_model(config.victim,
                                         rng_fork(root, detail::kForkTarget));
  }

  // The full stream is drawn before any policy acts: the environment is
  // i.i.d., so which policy runs must not change what the victim sees.
  std::vector<DataPoint> stream;
  stream.reserve(config.T);
  for (std::size_t t = 0; t < config.T; ++t) {
    stream.push_back(env_sample(config.env, env_rng));
  }

  EmpiricalBuffer buffer;
  if (config.policy == PolicyKind::kNlpMpc) {
    RngStream pre_rng = rng_fork(root, detail::kForkPreAttack);
    buffer.pre_attack_count = config.pre_attack_n;
    buffer.points.reserve(config.pre_attack_n + config.T);
    for (std::size_t i = 0; i < config.pre_attack_n; ++i) {
      buffer.points.push_back(env_sample(config.env, pre_rng));
    }
  }

  EpisodeTrace trace;
  trace.policy = config.policy;
  trace.seed = config.seed;
  trace.T = config.T;
  trace.theta_start = theta;
  if (cost.nefarious == NefariousKind::kTargeted) {
    trace.target_used = cost.target;
  }
  trace.steps.reserve(config.T);

  std::vector<DataPoint> clairvoyant_actions;
  auto t_begin = std::chrono::steady_clock::now();
  if (config.policy == PolicyKind::kClairvoyant) {
    clairvoyant_actions = act_clairvoyant_precompute(
        config.victim, cost, theta, stream, config.opt);
  }

  double jtilde = 0.0;
  for (std::size_t t = 0; t < config.T; ++t) {
    try {
      const DataPoint& z = stream[t];
      ControlState state{theta, z, t};
      DataPoint a;
      switch (config.policy) {
        case PolicyKind::kNull:
          a = act_null(state);
          break;
        case PolicyKind::kGreedy:
          a = act_greedy(state, config.victim, cost, config.opt);
          break;
        case PolicyKind::kNlpMpc:
          a = act_nlp_mpc(state, config.victim, cost, config.opt, buffer,
                          planner_rng);
          break;
        case PolicyKind::kClairvoyant:
          a = clairvoyant_actions[t];
          break;
      }
      double g = running_cost(cost, config.victim, theta, z, a);
      jtilde += std::pow(config.gamma, static_cast<double>(t)) * g;

      StepRecord rec;
      rec.g = g;
      rec.jtilde = jtilde;
      rec.perturb_norm = std::sqrt(squared_distance(a.features, z.features));
      rec.theta = theta;
      rec.z = z;
      rec.a = a;
      trace.steps.push_back(std::move(rec));

      theta = victim_update(config.victim, theta, a);
      if (!theta.finite()) {
        throw std::runtime_error("victim update produced non-finite model");
      }
      if (config.policy == PolicyKind::kNlpMpc) {
        buffer_push(buffer, z);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("run_episode: step " + std::to_string(t) +
                               ": " + e.what());
    }
  }
  auto t_end = std::chrono::steady_clock::now();

  trace.theta_final = theta;
  trace.jtilde_final = jtilde;
  trace.wall_seconds =
      std::chrono::duration<double>(t_end - t_begin).count();
  return trace;
}

/// One run_suite slot: either a trace or an error message.
struct EpisodeOutcome {
  bool ok = false;
  EpisodeTrace trace;
  std::string error;
};

/// Runs independent episodes across a small thread pool. Results come back
/// in input order; one episode failing does not abort the others.
inline std::vector<EpisodeOutcome> run_suite(
    const std::vector<EpisodeConfig>& configs, std::size_t parallelism) {
  std::vector<EpisodeOutcome> results(configs.size());
  if (configs.empty()) return results;
  std::size_t workers = std::max<std::size_t>(1, parallelism);
  workers = std::min(workers, configs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        results[i].trace = run_episode(configs[i]);
        results[i].ok = true;
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].error = e.what();
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

/// Per-step trace CSV: one row per step, doubles in shortest round-trip form.
inline void write_trace_csv(const std::string& path,
                            const EpisodeTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  if (trace.steps.empty()) {
    throw std::runtime_error("write_trace_csv: empty trace");
  }
  const StepRecord& first = trace.steps.front();
  std::size_t p = first.theta.values.size();
  std::size_t d = first.z.features.size();
  bool labeled = first.z.label.has_value();

  out << "t,g,Jtilde,perturb_norm";
  for (std::size_t i = 0; i < p; ++i) out << ",theta_" << i;
  for (std::size_t i = 0; i < d; ++i) out << ",z_" << i;
  if (labeled) out << ",z_label";
  for (std::size_t i = 0; i < d; ++i) out << ",a_" << i;
  if (labeled) out << ",a_label";
  out << '\n';

  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const StepRecord& rec = trace.steps[t];
    out << t << ',' << format_double(rec.g) << ',' << format_double(rec.jtilde)
        << ',' << format_double(rec.perturb_norm);
    for (double v : rec.theta.values) out << ',' << format_double(v);
    for (double v : rec.z.features) out << ',' << format_double(v);
    if (labeled) out << ',' << *rec.z.label;
    for (double v : rec.a.features) out << ',' << format_double(v);
    if (labeled) out << ',' << *rec.a.label;
    out << '\n';
  }
}

/// Suite summary CSV: one row per episode.
inline void write_summary_csv(const std::string& path,
                              const std::vector<EpisodeTrace>& traces) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path);
  out << "policy,seed,T,Jtilde_T,wall_seconds\n";
  for (const auto& trace : traces) {
    out << policy_name(trace.policy) << ',' << trace.seed << ',' << trace.T
        << ',' << format_double(trace.jtilde_final) << ','
        << format_double(trace.wall_seconds) << '\n';
  }
}

}  // namespace poisonctl

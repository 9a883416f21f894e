#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "poisonctl/core.hpp"
#include "poisonctl/costs.hpp"
#include "poisonctl/datastream.hpp"
#include "poisonctl/rng.hpp"
#include "poisonctl/trajopt.hpp"
#include "poisonctl/victims.hpp"

namespace poisonctl {

enum class PolicyKind { kNull, kGreedy, kNlpMpc, kClairvoyant };

inline const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kNull: return "null";
    case PolicyKind::kGreedy: return "greedy";
    case PolicyKind::kNlpMpc: return "nlp";
    case PolicyKind::kClairvoyant: return "clairvoyant";
  }
  return "unknown";
}

inline PolicyKind parse_policy(const std::string& name) {
  if (name == "null") return PolicyKind::kNull;
  if (name == "greedy") return PolicyKind::kGreedy;
  if (name == "nlp") return PolicyKind::kNlpMpc;
  if (name == "clairvoyant") return PolicyKind::kClairvoyant;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

/// The do-nothing baseline: pass the observed point through untouched.
inline DataPoint act_null(const ControlState& state) { return state.incoming; }

/// One-step lookahead: minimize the current running cost alone.
inline DataPoint act_greedy(const ControlState& state, const VictimSpec& victim,
                            const CostSpec& cost, const TrajOptConfig& opt) {
  TrajOptConfig one_step = opt;
  one_step.horizon = 1;
  one_step.num_trajectories = 1;
  TrajOptResult res = optimize_trajectory(victim, cost, state.model,
                                          std::vector<DataPoint>{state.incoming},
                                          one_step);
  return res.actions[0];
}

/// Receding-horizon planning: pin the first future to the observed point,
/// sample the remaining h-1 futures from the empirical buffer, solve the
/// horizon program, and execute only the first action. The caller pushes the
/// observed point into the buffer afterwards.
inline DataPoint act_nlp_mpc(const ControlState& state,
                             const VictimSpec& victim, const CostSpec& cost,
                             const TrajOptConfig& opt,
                             const EmpiricalBuffer& buffer, RngStream& rng) {
  std::vector<std::vector<DataPoint>> futures_batch(opt.num_trajectories);
  for (auto& futures : futures_batch) {
    futures.reserve(opt.horizon);
    futures.push_back(state.incoming);
    if (opt.horizon > 1) {
      auto sampled = buffer_sample_trajectory(buffer, opt.horizon - 1, rng);
      futures.insert(futures.end(), sampled.begin(), sampled.end());
    }
  }
  TrajOptResult res =
      optimize_trajectory(victim, cost, state.model, futures_batch, opt);
  return res.actions[0];
}

/// Full-knowledge planning: one whole-episode solve over the true stream.
/// Returns all T actions up front. The iteration budget scales with how many
/// receding-horizon solves the same episode would have gotten.
inline std::vector<DataPoint> act_clairvoyant_precompute(
    const VictimSpec& victim, const CostSpec& cost, const ModelParams& theta0,
    const std::vector<DataPoint>& full_stream, const TrajOptConfig& opt) {
  if (full_stream.empty()) {
    throw std::invalid_argument("act_clairvoyant_precompute: empty stream");
  }
  TrajOptConfig full = opt;
  full.horizon = full_stream.size();
  full.num_trajectories = 1;
  std::size_t solves =
      (full_stream.size() + opt.horizon - 1) / opt.horizon;  // ceil(T/h)
  full.max_iters = opt.max_iters * std::max<std::size_t>(1, solves);
  TrajOptResult res =
      optimize_trajectory(victim, cost, theta0, full_stream, full);
  return res.actions;
}

}  // namespace poisonctl

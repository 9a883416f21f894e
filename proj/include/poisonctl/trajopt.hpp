#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "poisonctl/core.hpp"
#include "poisonctl/costs.hpp"
#include "poisonctl/victims.hpp"

namespace poisonctl {

/// Finite-horizon planner settings.
struct TrajOptConfig {
  std::size_t horizon = 1;
  std::size_t max_iters = 2000;
  double step_size = 0.05;
  double gamma = 0.99;
  double convergence_tol = 1e-6;
  std::size_t num_trajectories = 1;  // sampled futures averaged per solve
};

inline void validate_trajopt_config(const TrajOptConfig& c) {
  if (c.horizon < 1) throw std::invalid_argument("trajopt: horizon must be >= 1");
  if (c.max_iters < 1) throw std::invalid_argument("trajopt: max_iters must be >= 1");
  if (!(c.step_size > 0.0)) throw std::invalid_argument("trajopt: step_size must be positive");
  if (!(c.gamma > 0.0) || c.gamma >= 1.0) throw std::invalid_argument("trajopt: invalid discount");
  if (!(c.convergence_tol > 0.0)) throw std::invalid_argument("trajopt: convergence_tol must be positive");
  if (c.num_trajectories < 1) throw std::invalid_argument("trajopt: num_trajectories must be >= 1");
}

/// Outcome of one planner solve.
struct TrajOptResult {
  std::vector<DataPoint> actions;
  double objective = 0.0;
  double initial_objective = 0.0;
  std::size_t iterations_used = 0;
};

/// Raised when the objective goes non-finite mid-solve; carries the best
/// iterate seen before the blow-up.
class TrajectoryDiverged : public std::runtime_error {
 public:
  explicit TrajectoryDiverged(TrajOptResult best)
      : std::runtime_error("optimize_trajectory: diverged"),
        best_(std::move(best)) {}
  const TrajOptResult& best() const { return best_; }

 private:
  TrajOptResult best_;
};

namespace detail {

/// Preallocated buffers for one rollout forward+backward pass.
struct RolloutScratch {
  std::vector<ModelParams> thetas;  // theta_0 .. theta_h
  ModelParams dnef;
  ModelParams cot;       // running cotangent v_t
  ModelParams cot_next;  // vjp output buffer
  std::vector<double> grad_action;
  VictimWorkspace vws;
  DataPoint action;

  RolloutScratch(const VictimSpec& victim, std::size_t h)
      : grad_action(victim.d, 0.0), vws(victim) {
    ModelParams proto = victim.make_model();
    thetas.assign(h + 1, proto);
    dnef = proto;
    cot = proto;
    cot_next = proto;
    action.features.assign(victim.d, 0.0);
  }
};

/// Discounted objective of one action sequence against one sampled future
/// stream, simulating theta_{tau+1} = f(theta_tau, a_tau). When `grad` is
/// non-null, a reverse sweep through the update chain accumulates (+=) the
/// exact gradient in every action-feature block.
inline double rollout_pass(const VictimSpec& victim, const CostSpec& cost,
                           const ModelParams& theta0,
                           const std::vector<DataPoint>& futures,
                           const double* actions, double gamma, double* grad,
                           RolloutScratch& ws) {
  std::size_t h = futures.size();
  std::size_t d = victim.d;
  ws.thetas[0].kind = theta0.kind;
  ws.thetas[0].k = theta0.k;
  ws.thetas[0].d = theta0.d;
  ws.thetas[0].values = theta0.values;

  double objective = 0.0;
  double discount = 1.0;
  for (std::size_t tau = 0; tau < h; ++tau) {
    ws.action.features.assign(actions + tau * d, actions + (tau + 1) * d);
    ws.action.label = futures[tau].label;
    victim_update_into(victim, ws.thetas[tau], ws.action, ws.thetas[tau + 1],
                       ws.vws);
    double g = squared_distance(ws.action.features, futures[tau].features);
    if (cost.lambda != 0.0) {
      g += cost.lambda * nefarious_cost(cost, ws.thetas[tau + 1]);
    }
    objective += discount * g;
    discount *= gamma;
  }
  if (grad == nullptr) return objective;

  // Reverse sweep: cot carries d objective / d theta_{tau+1}; each step adds
  // the stage cost's own contribution at the post-update model.
  for (double& x : ws.cot.values) x = 0.0;
  for (std::size_t tau = h; tau-- > 0;) {
    double disc = std::pow(gamma, static_cast<double>(tau));
    if (cost.lambda != 0.0) {
      nefarious_gradient_into(cost, ws.thetas[tau + 1], ws.dnef);
      double scale = disc * cost.lambda;
      for (std::size_t i = 0; i < ws.cot.values.size(); ++i) {
        ws.cot.values[i] += scale * ws.dnef.values[i];
      }
    }
    ws.action.features.assign(actions + tau * d, actions + (tau + 1) * d);
    ws.action.label = futures[tau].label;
    victim_vjp_into(victim, ws.thetas[tau], ws.action, ws.cot, ws.cot_next,
                    ws.grad_action, ws.vws);
    for (std::size_t i = 0; i < d; ++i) {
      grad[tau * d + i] +=
          disc * 2.0 * (ws.action.features[i] - futures[tau].features[i]) +
          ws.grad_action[i];
    }
    std::swap(ws.cot.values, ws.cot_next.values);
  }
  return objective;
}

inline void check_rollout_shapes(const VictimSpec& victim,
                                 const ModelParams& theta0,
                                 const std::vector<DataPoint>& futures,
                                 const char* what) {
  if (theta0.d != victim.d || theta0.values.size() != victim.param_count()) {
    throw std::invalid_argument(std::string(what) + ": model shape mismatch");
  }
  bool supervised = victim.kind == ModelKind::kLogisticRegression;
  for (const auto& f : futures) {
    if (f.features.size() != victim.d) {
      throw std::invalid_argument(std::string(what) +
                                  ": future dimension mismatch");
    }
    if (supervised && !f.label.has_value()) {
      throw std::invalid_argument(std::string(what) +
                                  ": unlabeled point for supervised victim");
    }
  }
}

}  // namespace detail

/// Discounted cost of playing `actions` against the future stream `futures`
/// from initial model theta0.
inline double rollout_objective(const VictimSpec& victim, const CostSpec& cost,
                                const ModelParams& theta0,
                                const std::vector<DataPoint>& futures,
                                const std::vector<DataPoint>& actions,
                                double gamma) {
  if (futures.size() != actions.size() || futures.empty()) {
    throw std::invalid_argument("rollout_objective: horizon mismatch");
  }
  detail::check_rollout_shapes(victim, theta0, futures, "rollout_objective");
  std::size_t h = futures.size();
  std::vector<double> flat(h * victim.d);
  for (std::size_t tau = 0; tau < h; ++tau) {
    detail::check_labels_match(futures[tau], actions[tau],
                               "rollout_objective");
    if (actions[tau].features.size() != victim.d) {
      throw std::invalid_argument(
          "rollout_objective: action dimension mismatch");
    }
    for (std::size_t i = 0; i < victim.d; ++i) {
      flat[tau * victim.d + i] = actions[tau].features[i];
    }
  }
  detail::RolloutScratch ws(victim, h);
  return detail::rollout_pass(victim, cost, theta0, futures, flat.data(),
                              gamma, nullptr, ws);
}

/// Exact gradient of rollout_objective in every action's features, one
/// backward pass.
inline std::vector<std::vector<double>> rollout_gradient(
    const VictimSpec& victim, const CostSpec& cost, const ModelParams& theta0,
    const std::vector<DataPoint>& futures,
    const std::vector<DataPoint>& actions, double gamma) {
  if (futures.size() != actions.size() || futures.empty()) {
    throw std::invalid_argument("rollout_gradient: horizon mismatch");
  }
  detail::check_rollout_shapes(victim, theta0, futures, "rollout_gradient");
  std::size_t h = futures.size();
  std::size_t d = victim.d;
  std::vector<double> flat(h * d);
  for (std::size_t tau = 0; tau < h; ++tau) {
    detail::check_labels_match(futures[tau], actions[tau], "rollout_gradient");
    for (std::size_t i = 0; i < d; ++i) {
      flat[tau * d + i] = actions[tau].features[i];
    }
  }
  std::vector<double> grad(h * d, 0.0);
  detail::RolloutScratch ws(victim, h);
  detail::rollout_pass(victim, cost, theta0, futures, flat.data(), gamma,
                       grad.data(), ws);
  std::vector<std::vector<double>> out(h);
  for (std::size_t tau = 0; tau < h; ++tau) {
    out[tau].assign(grad.begin() + tau * d, grad.begin() + (tau + 1) * d);
  }
  return out;
}

/// Solves the finite-horizon program over action features with
/// adaptive-moment gradient descent. Actions start at the sampled futures
/// (zero perturbation); the best iterate seen is returned. When several
/// future streams are given, the objective is their average under one shared
/// action sequence; labels ride with each stream, and the returned actions
/// carry the first stream's labels.
inline TrajOptResult optimize_trajectory(
    const VictimSpec& victim, const CostSpec& cost, const ModelParams& theta0,
    const std::vector<std::vector<DataPoint>>& futures_batch,
    const TrajOptConfig& config) {
  validate_trajopt_config(config);
  if (futures_batch.empty()) {
    throw std::invalid_argument("optimize_trajectory: no future streams");
  }
  for (const auto& futures : futures_batch) {
    if (futures.size() != config.horizon) {
      throw std::invalid_argument(
          "optimize_trajectory: future stream length != horizon");
    }
    detail::check_rollout_shapes(victim, theta0, futures,
                                 "optimize_trajectory");
  }
  std::size_t h = config.horizon;
  std::size_t d = victim.d;
  std::size_t n = h * d;
  double inv_m = 1.0 / static_cast<double>(futures_batch.size());

  std::vector<double> x(n);
  for (std::size_t tau = 0; tau < h; ++tau) {
    for (std::size_t i = 0; i < d; ++i) {
      x[tau * d + i] = futures_batch[0][tau].features[i];
    }
  }

  detail::RolloutScratch ws(victim, h);
  std::vector<double> grad(n);
  std::vector<double> m1(n, 0.0);
  std::vector<double> m2(n, 0.0);
  std::vector<double> best_x = x;
  double best_obj = std::numeric_limits<double>::infinity();
  double initial_obj = 0.0;
  std::size_t iters = 0;

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  auto make_result = [&](void) {
    TrajOptResult res;
    res.actions.resize(h);
    for (std::size_t tau = 0; tau < h; ++tau) {
      res.actions[tau].features.assign(best_x.begin() + tau * d,
                                       best_x.begin() + (tau + 1) * d);
      res.actions[tau].label = futures_batch[0][tau].label;
    }
    res.objective = best_obj;
    res.initial_objective = initial_obj;
    res.iterations_used = iters;
    return res;
  };

  for (std::size_t iter = 0; iter <= config.max_iters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double obj = 0.0;
    bool last = (iter == config.max_iters);
    for (const auto& futures : futures_batch) {
      obj += detail::rollout_pass(victim, cost, theta0, futures, x.data(),
                                  config.gamma, last ? nullptr : grad.data(),
                                  ws);
    }
    obj *= inv_m;
    if (iter == 0) initial_obj = obj;
    if (!std::isfinite(obj)) {
      throw TrajectoryDiverged(make_result());
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_x = x;
    }
    if (last) break;

    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] *= inv_m;
      gmax = std::max(gmax, std::abs(grad[i]));
    }
    if (gmax <= config.convergence_tol) break;

    iters = iter + 1;
    double t = static_cast<double>(iters);
    double corr1 = 1.0 - std::pow(kBeta1, t);
    double corr2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < n; ++i) {
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * grad[i];
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      x[i] -= config.step_size * (m1[i] / corr1) /
              (std::sqrt(m2[i] / corr2) + kEps);
    }
  }
  return make_result();
}

inline TrajOptResult optimize_trajectory(const VictimSpec& victim,
                                         const CostSpec& cost,
                                         const ModelParams& theta0,
                                         const std::vector<DataPoint>& futures,
                                         const TrajOptConfig& config) {
  return optimize_trajectory(victim, cost, theta0,
                             std::vector<std::vector<DataPoint>>{futures},
                             config);
}

}  // namespace poisonctl

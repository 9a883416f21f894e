#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "poisonctl/core.hpp"
#include "poisonctl/victims.hpp"

namespace poisonctl {

enum class NefariousKind { kTargeted, kAversion, kBackdoor };
enum class NefariousMetric { kCosineSim, kSquaredDist };

/// Attacker objective: running cost lambda * g_nef + g_per, where g_per is
/// squared L2 on the feature perturbation and g_nef depends on the goal.
struct CostSpec {
  double lambda = 0.0;
  NefariousKind nefarious = NefariousKind::kTargeted;
  NefariousMetric metric = NefariousMetric::kSquaredDist;
  ModelParams target;  // Targeted: the model the attacker steers toward
  ModelParams anchor;  // Aversion: the model the attacker steers away from
  DataPoint trigger;   // Backdoor: the point the attacker wants misclassified
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  detail::check_dim(b.size(), a.size(), "cosine");
  double na = norm(a);
  double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine undefined at zero vector");
  }
  return dot(a, b) / (na * nb);
}

namespace detail {

// log(1 + exp(-m)) without overflow on either side.
inline double logistic_loss(double margin) {
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

}  // namespace detail

/// Nefarious cost of a (post-update) model.
///   Targeted + CosineSim   -> -cos(theta, target)       (single weight vector)
///   Targeted + SquaredDist -> sum_j |theta_j - target_j|^2
///   Aversion               -> -|theta - anchor|^2
///   Backdoor               -> logistic loss of the trigger point
inline double nefarious_cost(const CostSpec& spec, const ModelParams& model) {
  switch (spec.nefarious) {
    case NefariousKind::kTargeted: {
      detail::check_dim(spec.target.values.size(), model.values.size(),
                        "nefarious_cost");
      if (spec.metric == NefariousMetric::kCosineSim) {
        if (model.kind == ModelKind::kSoftKMeans) {
          throw std::invalid_argument(
              "nefarious_cost: cosine metric incompatible with k-means "
              "victim");
        }
        return -cosine(model.values, spec.target.values);
      }
      return squared_distance(model.values, spec.target.values);
    }
    case NefariousKind::kAversion: {
      detail::check_dim(spec.anchor.values.size(), model.values.size(),
                        "nefarious_cost");
      return -squared_distance(model.values, spec.anchor.values);
    }
    case NefariousKind::kBackdoor: {
      detail::check_dim(spec.trigger.features.size(), model.d,
                        "nefarious_cost");
      if (!spec.trigger.label.has_value()) {
        throw std::invalid_argument(
            "nefarious_cost: backdoor trigger requires a label");
      }
      double y = static_cast<double>(*spec.trigger.label);
      return detail::logistic_loss(y * dot(model.values,
                                           spec.trigger.features));
    }
  }
  throw std::logic_error("nefarious_cost: unreachable");
}

/// Exact gradient of nefarious_cost in the model parameters.
inline void nefarious_gradient_into(const CostSpec& spec,
                                    const ModelParams& model,
                                    ModelParams& grad) {
  grad.kind = model.kind;
  grad.k = model.k;
  grad.d = model.d;
  grad.values.resize(model.values.size());
  switch (spec.nefarious) {
    case NefariousKind::kTargeted: {
      detail::check_dim(spec.target.values.size(), model.values.size(),
                        "nefarious_gradient");
      if (spec.metric == NefariousMetric::kCosineSim) {
        if (model.kind == ModelKind::kSoftKMeans) {
          throw std::invalid_argument(
              "nefarious_gradient: cosine metric incompatible with k-means "
              "victim");
        }
        std::span<const double> th = model.values;
        std::span<const double> tgt = spec.target.values;
        double nth = norm(th);
        double ntg = norm(tgt);
        if (nth == 0.0 || ntg == 0.0) {
          throw std::invalid_argument("cosine undefined at zero vector");
        }
        double tt = dot(th, tgt);
        // d/dtheta [-cos] = -t/(|th||t|) + (th't) th / (|th|^3 |t|)
        double s1 = 1.0 / (nth * ntg);
        double s2 = tt / (nth * nth * nth * ntg);
        for (std::size_t i = 0; i < th.size(); ++i) {
          grad.values[i] = -tgt[i] * s1 + th[i] * s2;
        }
        return;
      }
      for (std::size_t i = 0; i < model.values.size(); ++i) {
        grad.values[i] = 2.0 * (model.values[i] - spec.target.values[i]);
      }
      return;
    }
    case NefariousKind::kAversion: {
      detail::check_dim(spec.anchor.values.size(), model.values.size(),
                        "nefarious_gradient");
      for (std::size_t i = 0; i < model.values.size(); ++i) {
        grad.values[i] = -2.0 * (model.values[i] - spec.anchor.values[i]);
      }
      return;
    }
    case NefariousKind::kBackdoor: {
      detail::check_dim(spec.trigger.features.size(), model.d,
                        "nefarious_gradient");
      if (!spec.trigger.label.has_value()) {
        throw std::invalid_argument(
            "nefarious_gradient: backdoor trigger requires a label");
      }
      double y = static_cast<double>(*spec.trigger.label);
      double margin = y * dot(model.values, spec.trigger.features);
      double c = (margin >= 0.0)
                     ? std::exp(-margin) / (1.0 + std::exp(-margin))
                     : 1.0 / (1.0 + std::exp(margin));
      for (std::size_t i = 0; i < model.values.size(); ++i) {
        grad.values[i] = -y * c * spec.trigger.features[i];
      }
      return;
    }
  }
  throw std::logic_error("nefarious_gradient: unreachable");
}

namespace detail {

inline void check_labels_match(const DataPoint& clean,
                               const DataPoint& action, const char* what) {
  if (clean.label.has_value() != action.label.has_value() ||
      (clean.label.has_value() && *clean.label != *action.label)) {
    throw std::invalid_argument(std::string(what) +
                                ": label perturbation disabled");
  }
}

}  // namespace detail

/// Running cost of taking `action` in place of the observed `clean` point:
///   lambda * g_nef(f(theta, action)) + |action - clean|^2.
/// The nefarious term is evaluated at the post-update model, so the current
/// action is accountable for its own effect.
inline double running_cost(const CostSpec& spec, const VictimSpec& victim,
                           const ModelParams& theta, const DataPoint& clean,
                           const DataPoint& action) {
  detail::check_labels_match(clean, action, "running_cost");
  double per = squared_distance(action.features, clean.features);
  if (spec.lambda == 0.0) return per;
  ModelParams next = victim_update(victim, theta, action);
  return spec.lambda * nefarious_cost(spec, next) + per;
}

/// Exact gradient of running_cost in action.features:
///   2 (a - z) + lambda * (dg_nef/dtheta')' * df/da.
inline std::vector<double> running_cost_gradient(const CostSpec& spec,
                                                 const VictimSpec& victim,
                                                 const ModelParams& theta,
                                                 const DataPoint& clean,
                                                 const DataPoint& action) {
  detail::check_labels_match(clean, action, "running_cost_gradient");
  std::vector<double> grad(victim.d);
  for (std::size_t i = 0; i < victim.d; ++i) {
    grad[i] = 2.0 * (action.features[i] - clean.features[i]);
  }
  if (spec.lambda == 0.0) return grad;

  VictimWorkspace ws(victim);
  ModelParams next;
  victim_update_into(victim, theta, action, next, ws);
  ModelParams dnef;
  nefarious_gradient_into(spec, next, dnef);
  for (double& v : dnef.values) v *= spec.lambda;
  ModelParams grad_theta;
  std::vector<double> grad_action(victim.d);
  victim_vjp_into(victim, theta, action, dnef, grad_theta, grad_action, ws);
  for (std::size_t i = 0; i < victim.d; ++i) grad[i] += grad_action[i];
  return grad;
}

}  // namespace poisonctl

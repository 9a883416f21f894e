#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "poisonctl/core.hpp"

namespace poisonctl {

/// Which sequential learner plays the victim, and its hyperparameters.
struct VictimSpec {
  ModelKind kind = ModelKind::kLogisticRegression;
  double eta = 0.01;  // learning rate, > 0
  std::size_t k = 1;  // centroid count (soft k-means); 1 for logistic regression
  std::size_t d = 1;  // feature dimension

  std::size_t param_count() const {
    return (kind == ModelKind::kSoftKMeans ? k : 1) * d;
  }

  ModelParams make_model() const {
    ModelParams m;
    m.kind = kind;
    m.k = (kind == ModelKind::kSoftKMeans) ? k : 1;
    m.d = d;
    m.values.assign(m.k * m.d, 0.0);
    return m;
  }
};

namespace detail {

inline void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(got) + " vs " +
                                std::to_string(want) + ")");
  }
}

}  // namespace detail

/// Numerically stable softmax (max-subtracted). Writes into `out`.
inline void softmax_into(std::span<const double> values,
                         std::span<double> out) {
  if (values.empty()) {
    throw std::invalid_argument("softmax: empty input");
  }
  detail::check_dim(out.size(), values.size(), "softmax");
  double vmax = values[0];
  for (double v : values) {
    if (v > vmax) vmax = v;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - vmax);
    total += out[i];
  }
  for (std::size_t i = 0; i < values.size(); ++i) out[i] /= total;
}

inline std::vector<double> softmax(std::span<const double> values) {
  std::vector<double> out(values.size());
  softmax_into(values, out);
  return out;
}

/// One online logistic-regression step:
///   theta' = theta + eta * y * x / (1 + exp(y * theta'x)).
inline void logreg_update_into(std::span<const double> theta,
                               std::span<const double> x, int y, double eta,
                               std::span<double> out) {
  detail::check_dim(x.size(), theta.size(), "logreg_update");
  detail::check_dim(out.size(), theta.size(), "logreg_update");
  double margin = static_cast<double>(y) * dot(theta, x);
  // 1/(1+exp(m)) computed from the stable side of the exponential.
  double c = (margin >= 0.0) ? std::exp(-margin) / (1.0 + std::exp(-margin))
                             : 1.0 / (1.0 + std::exp(margin));
  double scale = eta * static_cast<double>(y) * c;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = theta[i] + scale * x[i];
  }
}

inline std::vector<double> logreg_update(std::span<const double> theta,
                                         const DataPoint& point, double eta) {
  if (!point.label.has_value()) {
    throw std::invalid_argument(
        "logreg_update: unlabeled point for supervised victim");
  }
  std::vector<double> out(theta.size());
  logreg_update_into(theta, point.features, *point.label, eta, out);
  return out;
}

/// Soft k-means responsibilities: softmax over negative squared distances
/// from `a` to each centroid.
inline void soft_kmeans_responsibilities_into(const ModelParams& centroids,
                                              std::span<const double> a,
                                              std::span<double> r) {
  detail::check_dim(a.size(), centroids.d, "soft_kmeans_responsibilities");
  detail::check_dim(r.size(), centroids.k, "soft_kmeans_responsibilities");
  // Reuse r as the score buffer, then normalize in place.
  for (std::size_t j = 0; j < centroids.k; ++j) {
    r[j] = -squared_distance(a, centroids.block(j));
  }
  std::vector<double> scores(r.begin(), r.end());
  softmax_into(scores, r);
}

/// One soft k-means step: theta_j' = theta_j + eta * r_j * (a - theta_j).
inline void soft_kmeans_update_into(const ModelParams& centroids,
                                    std::span<const double> a, double eta,
                                    ModelParams& out,
                                    std::span<double> resp_scratch) {
  detail::check_dim(a.size(), centroids.d, "soft_kmeans_update");
  out.kind = centroids.kind;
  out.k = centroids.k;
  out.d = centroids.d;
  out.values.resize(centroids.values.size());
  soft_kmeans_responsibilities_into(centroids, a, resp_scratch);
  for (std::size_t j = 0; j < centroids.k; ++j) {
    auto cj = centroids.block(j);
    auto oj = out.block(j);
    double step = eta * resp_scratch[j];
    for (std::size_t i = 0; i < centroids.d; ++i) {
      oj[i] = cj[i] + step * (a[i] - cj[i]);
    }
  }
}

inline ModelParams soft_kmeans_update(const ModelParams& centroids,
                                      const DataPoint& point, double eta) {
  ModelParams out;
  std::vector<double> resp(centroids.k);
  soft_kmeans_update_into(centroids, point.features, eta, out, resp);
  return out;
}

/// Victim dynamics f(theta, a): dispatches on the victim kind.
inline ModelParams victim_update(const VictimSpec& spec,
                                 const ModelParams& theta,
                                 const DataPoint& action) {
  detail::check_dim(action.features.size(), spec.d, "victim_update");
  detail::check_dim(theta.d, spec.d, "victim_update");
  if (spec.kind == ModelKind::kLogisticRegression) {
    ModelParams out = theta;
    if (!action.label.has_value()) {
      throw std::invalid_argument(
          "victim_update: unlabeled point for supervised victim");
    }
    logreg_update_into(theta.values, action.features, *action.label, spec.eta,
                       out.values);
    return out;
  }
  return soft_kmeans_update(theta, action, spec.eta);
}

/// Scratch space for the hot-path update/VJP kernels, sized once per episode.
struct VictimWorkspace {
  std::vector<double> resp;  // k responsibilities
  std::vector<double> w;     // k per-centroid cotangent-displacement products

  explicit VictimWorkspace(const VictimSpec& spec)
      : resp(spec.k, 0.0), w(spec.k, 0.0) {}
};

inline void victim_update_into(const VictimSpec& spec,
                               const ModelParams& theta,
                               const DataPoint& action, ModelParams& out,
                               VictimWorkspace& ws) {
  if (spec.kind == ModelKind::kLogisticRegression) {
    out.kind = theta.kind;
    out.k = theta.k;
    out.d = theta.d;
    out.values.resize(theta.values.size());
    if (!action.label.has_value()) {
      throw std::invalid_argument(
          "victim_update: unlabeled point for supervised victim");
    }
    logreg_update_into(theta.values, action.features, *action.label, spec.eta,
                       out.values);
    return;
  }
  soft_kmeans_update_into(theta, action.features, spec.eta, out, ws.resp);
}

/// Vector-Jacobian products of the victim dynamics: given cotangent v
/// (same shape as the model), computes
///   grad_theta = v' * df/dtheta   and   grad_action = v' * df/da,
/// both exact closed forms.
inline void victim_vjp_into(const VictimSpec& spec, const ModelParams& theta,
                            const DataPoint& action,
                            const ModelParams& cotangent,
                            ModelParams& grad_theta,
                            std::span<double> grad_action,
                            VictimWorkspace& ws) {
  detail::check_dim(cotangent.values.size(), theta.values.size(),
                    "victim_vjp");
  detail::check_dim(grad_action.size(), spec.d, "victim_vjp");
  grad_theta.kind = theta.kind;
  grad_theta.k = theta.k;
  grad_theta.d = theta.d;
  grad_theta.values.resize(theta.values.size());

  if (spec.kind == ModelKind::kLogisticRegression) {
    if (!action.label.has_value()) {
      throw std::invalid_argument(
          "victim_vjp: unlabeled point for supervised victim");
    }
    double y = static_cast<double>(*action.label);
    std::span<const double> th = theta.values;
    std::span<const double> x = action.features;
    std::span<const double> v = cotangent.values;
    double margin = y * dot(th, x);
    double c = (margin >= 0.0) ? std::exp(-margin) / (1.0 + std::exp(-margin))
                               : 1.0 / (1.0 + std::exp(margin));
    double cc = c * (1.0 - c);
    double vx = dot(v, x);
    // f = theta + eta*y*c(theta,x)*x with dc/dm = -c(1-c), m = y*theta'x:
    //   v'*df/dtheta = v - eta*c(1-c)*(v'x)*x
    //   v'*df/dx     = eta*y*c*v - eta*c(1-c)*(v'x)*theta
    for (std::size_t i = 0; i < spec.d; ++i) {
      grad_theta.values[i] = v[i] - spec.eta * cc * vx * x[i];
      grad_action[i] = spec.eta * y * c * v[i] - spec.eta * cc * vx * th[i];
    }
    return;
  }

  // Soft k-means. With u_j = a - theta_j, r = softmax(-|u_j|^2) and
  // f_j = theta_j + eta*r_j*u_j, the chain through r contributes via
  //   c_j = r_j*(w_j - sum_l r_l*w_l),  w_j = eta*(v_j'u_j):
  //   v'*df/da      = sum_j eta*r_j*v_j - 2*sum_j c_j*u_j
  //   v'*df/dtheta_m = (1 - eta*r_m)*v_m + 2*c_m*u_m
  std::span<const double> a = action.features;
  soft_kmeans_responsibilities_into(theta, a, ws.resp);
  double swr = 0.0;
  for (std::size_t j = 0; j < spec.k; ++j) {
    auto tj = theta.block(j);
    auto vj = cotangent.block(j);
    double vu = 0.0;
    for (std::size_t i = 0; i < spec.d; ++i) {
      vu += vj[i] * (a[i] - tj[i]);
    }
    ws.w[j] = spec.eta * vu;
    swr += ws.resp[j] * ws.w[j];
  }
  for (std::size_t i = 0; i < spec.d; ++i) grad_action[i] = 0.0;
  for (std::size_t j = 0; j < spec.k; ++j) {
    auto tj = theta.block(j);
    auto vj = cotangent.block(j);
    auto gj = grad_theta.block(j);
    double rj = ws.resp[j];
    double cj = rj * (ws.w[j] - swr);
    for (std::size_t i = 0; i < spec.d; ++i) {
      double uji = a[i] - tj[i];
      grad_action[i] += spec.eta * rj * vj[i] - 2.0 * cj * uji;
      gj[i] = (1.0 - spec.eta * rj) * vj[i] + 2.0 * cj * uji;
    }
  }
}

inline std::pair<ModelParams, std::vector<double>> victim_vjp(
    const VictimSpec& spec, const ModelParams& theta, const DataPoint& action,
    const ModelParams& cotangent) {
  VictimWorkspace ws(spec);
  ModelParams grad_theta;
  std::vector<double> grad_action(spec.d);
  victim_vjp_into(spec, theta, action, cotangent, grad_theta, grad_action, ws);
  return {std::move(grad_theta), std::move(grad_action)};
}

}  // namespace poisonctl

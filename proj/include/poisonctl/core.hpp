#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace poisonctl {

/// One observation from the data stream: a feature vector plus an optional
/// class label (absent for unsupervised victims).
struct DataPoint {
  std::vector<double> features;
  std::optional<int> label;
};

enum class ModelKind { kLogisticRegression, kSoftKMeans };

/// Victim model parameters stored flat: k blocks of dimension d.
/// Logistic regression uses k == 1 (the weight vector); soft k-means uses
/// one block per centroid.
struct ModelParams {
  ModelKind kind = ModelKind::kLogisticRegression;
  std::size_t k = 1;
  std::size_t d = 0;
  std::vector<double> values;  // size k * d

  std::span<double> block(std::size_t j) {
    return std::span<double>(values).subspan(j * d, d);
  }
  std::span<const double> block(std::size_t j) const {
    return std::span<const double>(values).subspan(j * d, d);
  }

  bool finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

/// Attacker-visible state at one step: the victim's current parameters and
/// the data point that just arrived (pre-perturbation).
struct ControlState {
  ModelParams model;
  DataPoint incoming;
  std::size_t step = 0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

/// Discounted sum of a per-step cost trace: sum_t gamma^t costs[t].
inline double discounted_cumulative_cost(const std::vector<double>& costs,
                                         double gamma) {
  if (costs.empty()) {
    throw std::invalid_argument("discounted_cumulative_cost: empty cost trace");
  }
  if (!(gamma > 0.0) || gamma >= 1.0) {
    throw std::invalid_argument(
        "discounted_cumulative_cost: invalid discount " +
        std::to_string(gamma));
  }
  double total = 0.0;
  for (std::size_t t = 0; t < costs.size(); ++t) {
    total += std::pow(gamma, static_cast<double>(t)) * costs[t];
  }
  return total;
}

}  // namespace poisonctl

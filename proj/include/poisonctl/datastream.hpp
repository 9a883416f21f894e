#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "poisonctl/core.hpp"
#include "poisonctl/io.hpp"
#include "poisonctl/rng.hpp"

namespace poisonctl {

/// The data-generating environment: either a 1D Gaussian mixture or uniform
/// resampling (with replacement) of a fixed dataset.
struct EnvironmentSpec {
  enum class Kind { kGaussianMixture1D, kDatasetResample };
  Kind kind = Kind::kGaussianMixture1D;
  // Mixture parameters (kGaussianMixture1D).
  std::vector<double> means;
  std::vector<double> weights;
  double stddev = 1.0;
  std::optional<int> mixture_label;  // label attached to mixture draws, if any
  // Dataset (kDatasetResample).
  std::vector<DataPoint> points;

  std::size_t dim() const {
    if (kind == Kind::kGaussianMixture1D) return 1;
    return points.empty() ? 0 : points.front().features.size();
  }
};

inline void validate_environment(const EnvironmentSpec& spec) {
  if (spec.kind == EnvironmentSpec::Kind::kGaussianMixture1D) {
    if (spec.means.empty() || spec.means.size() != spec.weights.size()) {
      throw std::invalid_argument(
          "environment: mixture means/weights must be nonempty and equal "
          "length");
    }
    double total = std::accumulate(spec.weights.begin(), spec.weights.end(),
                                   0.0);
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("environment: mixture weights must sum to 1");
    }
    if (!(spec.stddev > 0.0)) {
      throw std::invalid_argument("environment: stddev must be positive");
    }
    return;
  }
  if (spec.points.empty()) {
    throw std::invalid_argument("environment: dataset is empty");
  }
}

/// One i.i.d. draw from the environment.
inline DataPoint env_sample(const EnvironmentSpec& spec, RngStream& rng) {
  if (spec.kind == EnvironmentSpec::Kind::kGaussianMixture1D) {
    double u = rng.next_uniform();
    std::size_t component = spec.means.size() - 1;
    double cum = 0.0;
    for (std::size_t i = 0; i < spec.weights.size(); ++i) {
      cum += spec.weights[i];
      if (u < cum) {
        component = i;
        break;
      }
    }
    DataPoint p;
    p.features = {spec.means[component] + spec.stddev * rng.next_gaussian()};
    p.label = spec.mixture_label;
    return p;
  }
  return spec.points[rng.next_below(spec.points.size())];
}

/// Everything the attacker has seen: pre-attack samples plus the stream so
/// far. Realizes the empirical distribution the planner samples futures from.
struct EmpiricalBuffer {
  std::vector<DataPoint> points;
  std::size_t pre_attack_count = 0;
};

inline void buffer_push(EmpiricalBuffer& buf, const DataPoint& z) {
  if (!buf.points.empty() &&
      buf.points.front().features.size() != z.features.size()) {
    throw std::invalid_argument("buffer_push: dimension mismatch");
  }
  buf.points.push_back(z);
}

/// h i.i.d. uniform-with-replacement draws from the buffer.
inline std::vector<DataPoint> buffer_sample_trajectory(
    const EmpiricalBuffer& buf, std::size_t h, RngStream& rng) {
  if (buf.points.empty()) {
    throw std::runtime_error("buffer_sample_trajectory: no data observed");
  }
  std::vector<DataPoint> out;
  out.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    out.push_back(buf.points[rng.next_below(buf.points.size())]);
  }
  return out;
}

/// Per-feature shift/scale fitted on a dataset. Constant features (stddev
/// below threshold) are mapped to 0 on apply.
struct ZScoreTransform {
  std::vector<double> mean;
  std::vector<double> stddev;  // population stddev; <= 0 marks constant
};

inline ZScoreTransform zscore_fit(const std::vector<DataPoint>& points) {
  if (points.size() < 2) {
    throw std::invalid_argument("zscore_fit: need at least 2 points");
  }
  std::size_t d = points.front().features.size();
  ZScoreTransform t;
  t.mean.assign(d, 0.0);
  t.stddev.assign(d, 0.0);
  for (const auto& p : points) {
    if (p.features.size() != d) {
      throw std::invalid_argument("zscore_fit: inconsistent dimensions");
    }
    for (std::size_t i = 0; i < d; ++i) t.mean[i] += p.features[i];
  }
  for (std::size_t i = 0; i < d; ++i) t.mean[i] /= points.size();
  for (const auto& p : points) {
    for (std::size_t i = 0; i < d; ++i) {
      double dv = p.features[i] - t.mean[i];
      t.stddev[i] += dv * dv;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    double sd = std::sqrt(t.stddev[i] / points.size());
    // Constant columns (up to accumulation noise) normalize to 0, not NaN.
    t.stddev[i] = (sd <= 1e-12 * (1.0 + std::abs(t.mean[i]))) ? 0.0 : sd;
  }
  return t;
}

inline DataPoint zscore_apply(const ZScoreTransform& t, const DataPoint& p) {
  if (p.features.size() != t.mean.size()) {
    throw std::invalid_argument("zscore_apply: dimension mismatch");
  }
  DataPoint out = p;
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    out.features[i] = (t.stddev[i] == 0.0)
                          ? 0.0
                          : (p.features[i] - t.mean[i]) / t.stddev[i];
  }
  return out;
}

inline std::pair<std::vector<DataPoint>, ZScoreTransform> zscore_fit_apply(
    const std::vector<DataPoint>& points) {
  ZScoreTransform t = zscore_fit(points);
  std::vector<DataPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(zscore_apply(t, p));
  return {std::move(out), std::move(t)};
}

/// Eigen-decomposition of a symmetric matrix (row-major, n x n) by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the matching
/// unit eigenvectors as rows of a row-major matrix. Each eigenvector's
/// largest-magnitude component is made positive, fixing the sign for
/// reproducibility.
inline std::pair<std::vector<double>, std::vector<double>> symmetric_eigen(
    std::vector<double> a, std::size_t n) {
  if (a.size() != n * n) {
    throw std::invalid_argument("symmetric_eigen: bad matrix size");
  }
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double frob0 = 0.0;
  for (double x : a) frob0 += x * x;
  const double off_tol = 1e-26 * (frob0 + 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    }
    if (off <= off_tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (apq == 0.0) continue;
        double app = a[p * n + p];
        double aqq = a[q * n + q];
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = a[q * n + p] = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          double aip = a[i * n + p];
          double aiq = a[i * n + q];
          a[i * n + p] = a[p * n + i] = c * aip - s * aiq;
          a[i * n + q] = a[q * n + i] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vip = v[i * n + p];
          double viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x * n + x] > a[y * n + y];
  });

  std::vector<double> eigvals(n);
  std::vector<double> eigvecs(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t col = order[j];
    eigvals[j] = a[col * n + col];
    std::size_t imax = 0;
    double amax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double x = v[i * n + col];
      eigvecs[j * n + i] = x;
      if (std::abs(x) > amax) {
        amax = std::abs(x);
        imax = i;
      }
    }
    if (eigvecs[j * n + imax] < 0.0) {
      for (std::size_t i = 0; i < n; ++i) eigvecs[j * n + i] = -eigvecs[j * n + i];
    }
  }
  return {std::move(eigvals), std::move(eigvecs)};
}

/// Affine projection onto the top principal components of a dataset.
struct PCAProjection {
  std::vector<double> mean;         // d
  std::vector<double> basis;        // d_target x d, row-major, orthonormal rows
  std::vector<double> eigenvalues;  // top d_target, descending
  std::size_t d = 0;
  std::size_t d_target = 0;
};

inline PCAProjection pca_fit(const std::vector<DataPoint>& points,
                             std::size_t d_target) {
  if (points.empty()) {
    throw std::invalid_argument("pca_fit: no points");
  }
  std::size_t d = points.front().features.size();
  if (d_target < 1 || d_target > d) {
    throw std::invalid_argument("pca_fit: target dimension out of range");
  }
  if (points.size() < d_target + 1) {
    throw std::invalid_argument("pca_fit: need at least d_target+1 points");
  }
  PCAProjection proj;
  proj.d = d;
  proj.d_target = d_target;
  proj.mean.assign(d, 0.0);
  for (const auto& p : points) {
    if (p.features.size() != d) {
      throw std::invalid_argument("pca_fit: inconsistent dimensions");
    }
    for (std::size_t i = 0; i < d; ++i) proj.mean[i] += p.features[i];
  }
  for (std::size_t i = 0; i < d; ++i) proj.mean[i] /= points.size();

  // Sample covariance (1/(n-1)).
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& p : points) {
    for (std::size_t i = 0; i < d; ++i) centered[i] = p.features[i] - proj.mean[i];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        cov[i * d + j] += centered[i] * centered[j];
      }
    }
  }
  double denom = static_cast<double>(points.size() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= denom;
      cov[j * d + i] = cov[i * d + j];
    }
  }

  auto [eigvals, eigvecs] = symmetric_eigen(std::move(cov), d);
  double top = eigvals.empty() ? 0.0 : eigvals[0];
  for (std::size_t j = 0; j < d_target; ++j) {
    if (!(eigvals[j] > 1e-10 * std::max(top, 1e-300)) || !(eigvals[j] > 0.0)) {
      throw std::runtime_error("pca_fit: insufficient rank for target " +
                               std::to_string(d_target));
    }
  }
  proj.eigenvalues.assign(eigvals.begin(), eigvals.begin() + d_target);
  proj.basis.assign(eigvecs.begin(), eigvecs.begin() + d_target * d);
  return proj;
}

inline DataPoint pca_apply(const PCAProjection& proj, const DataPoint& p) {
  if (p.features.size() != proj.d) {
    throw std::invalid_argument("pca_apply: dimension mismatch");
  }
  DataPoint out;
  out.label = p.label;
  out.features.assign(proj.d_target, 0.0);
  for (std::size_t j = 0; j < proj.d_target; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < proj.d; ++i) {
      s += proj.basis[j * proj.d + i] * (p.features[i] - proj.mean[i]);
    }
    out.features[j] = s;
  }
  return out;
}

/// Parses "raw:mapped" pairs, comma separated, e.g. "0:-1,1:1". Mapped
/// values must be -1 or 1.
inline std::map<std::string, int> parse_label_map(const std::string& raw) {
  std::map<std::string, int> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string pairstr;
  while (std::getline(ss, pairstr, ',')) {
    std::size_t colon = pairstr.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument(
          "label map entries must look like raw:mapped, got '" + pairstr +
          "'");
    }
    std::string key = trim(pairstr.substr(0, colon));
    std::string value = trim(pairstr.substr(colon + 1));
    double mapped = 0.0;
    if (!parse_double(value, mapped) || (mapped != -1.0 && mapped != 1.0)) {
      throw std::invalid_argument("label map values must be -1 or 1, got '" +
                                  value + "'");
    }
    if (!out.emplace(key, static_cast<int>(mapped)).second) {
      throw std::invalid_argument("label map has duplicate entry for '" + key +
                                  "'");
    }
  }
  return out;
}

/// CSV ingestion options. Labels are read from label_column and mapped to
/// {-1,+1}; with an empty label_map the raw cell must already be -1 or +1.
struct CsvOptions {
  bool has_header = false;
  std::optional<std::size_t> label_column;
  std::map<std::string, int> label_map;
};

inline std::vector<DataPoint> load_csv(const std::string& path,
                                       const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_csv: cannot open " + path);
  }
  std::vector<DataPoint> out;
  std::string line;
  std::size_t row = 0;
  std::size_t arity = 0;
  bool skipped_header = false;
  while (std::getline(in, line)) {
    ++row;
    if (opts.has_header && !skipped_header) {
      skipped_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (arity == 0) {
      arity = cells.size();
    } else if (cells.size() != arity) {
      throw std::runtime_error("load_csv: " + path + ": row " +
                               std::to_string(row) + ": expected " +
                               std::to_string(arity) + " fields, got " +
                               std::to_string(cells.size()));
    }
    if (opts.label_column.has_value() && *opts.label_column >= cells.size()) {
      throw std::runtime_error("load_csv: " + path + ": row " +
                               std::to_string(row) +
                               ": label column out of range");
    }
    DataPoint p;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (opts.label_column.has_value() && i == *opts.label_column) {
        int label = 0;
        if (!opts.label_map.empty()) {
          auto it = opts.label_map.find(cells[i]);
          if (it == opts.label_map.end()) {
            throw std::runtime_error("load_csv: " + path + ": row " +
                                     std::to_string(row) +
                                     ": unmapped label '" + cells[i] + "'");
          }
          label = it->second;
        } else {
          double lv = 0.0;
          if (!parse_double(cells[i], lv) || (lv != -1.0 && lv != 1.0)) {
            throw std::runtime_error("load_csv: " + path + ": row " +
                                     std::to_string(row) + ": label '" +
                                     cells[i] + "' not in {-1,+1}");
          }
          label = static_cast<int>(lv);
        }
        if (label != -1 && label != 1) {
          throw std::runtime_error("load_csv: " + path + ": row " +
                                   std::to_string(row) +
                                   ": label map must produce -1 or +1");
        }
        p.label = label;
        continue;
      }
      double value = 0.0;
      if (!parse_double(cells[i], value)) {
        throw std::runtime_error("load_csv: " + path + ": row " +
                                 std::to_string(row) + ": cannot parse '" +
                                 cells[i] + "'");
      }
      p.features.push_back(value);
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) {
    throw std::runtime_error("load_csv: " + path + ": no rows");
  }
  return out;
}

inline void save_csv(const std::string& path,
                     const std::vector<DataPoint>& points) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_csv: cannot open " + path);
  }
  for (const auto& p : points) {
    for (std::size_t i = 0; i < p.features.size(); ++i) {
      if (i > 0) out << ',';
      out << format_double(p.features[i]);
    }
    if (p.label.has_value()) out << ',' << *p.label;
    out << '\n';
  }
}

/// The dataset preprocessing pipeline: z-score, then (when the dimension
/// exceeds d_target) PCA reduction followed by a second z-score.
inline std::vector<DataPoint> normalize_dataset(std::vector<DataPoint> points,
                                                std::size_t d_target) {
  auto [normalized, zs] = zscore_fit_apply(points);
  points = std::move(normalized);
  std::size_t d = points.front().features.size();
  if (d > d_target) {
    PCAProjection proj = pca_fit(points, d_target);
    for (auto& p : points) p = pca_apply(proj, p);
    auto [renormalized, zs2] = zscore_fit_apply(points);
    points = std::move(renormalized);
  }
  return points;
}

}  // namespace poisonctl

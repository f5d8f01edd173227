#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "feddrive/core.hpp"
#include "feddrive/distributions.hpp"

namespace feddrive::critic {

/// Descriptive statistics of a metric matrix: counts, sums, squared sums,
/// extremes, plus the derived moments. Mean is s/n and variance is the
/// unbiased (o - n*mu^2)/(n-1).
struct StatsSummary {
  std::size_t n = 0;
  std::vector<double> s;       // per-metric sums
  std::vector<double> o;       // per-metric squared sums
  std::vector<double> u;       // per-metric maxima
  std::vector<double> v;       // per-metric minima
  std::vector<double> mu;      // s / n
  std::vector<double> sigma2;  // (o - n*mu^2) / (n - 1)
};

inline StatsSummary summarize(const Matrix& X) {
  if (X.rows() < 2) throw data_error("summarize needs at least 2 samples");
  const std::size_t n = X.rows(), d = X.cols();
  StatsSummary g;
  g.n = n;
  g.s.assign(d, 0.0);
  g.o.assign(d, 0.0);
  g.u.assign(d, -std::numeric_limits<double>::infinity());
  g.v.assign(d, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double x = X(r, j);
      g.s[j] += x;
      g.o[j] += x * x;
      g.u[j] = std::max(g.u[j], x);
      g.v[j] = std::min(g.v[j], x);
    }
  }
  g.mu.resize(d);
  g.sigma2.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    g.mu[j] = g.s[j] / static_cast<double>(n);
    g.sigma2[j] = (g.o[j] - static_cast<double>(n) * g.mu[j] * g.mu[j]) /
                  static_cast<double>(n - 1);
  }
  return g;
}

inline void check_normalizable(const std::vector<double>& u, const std::vector<double>& v,
                               const std::vector<MetricSpec>* specs = nullptr) {
  for (std::size_t j = 0; j < u.size(); ++j) {
    if (!(u[j] > v[j])) {
      throw degenerate_metric_error(specs ? (*specs)[j].name
                                          : "metric_" + std::to_string(j + 1));
    }
  }
}

/// Min-max normalization Z = (X - v) / (u - v).
inline Matrix min_max_normalize(const Matrix& X, const std::vector<double>& u,
                                const std::vector<double>& v) {
  check_normalizable(u, v);
  Matrix Z(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      Z(r, j) = (X(r, j) - v[j]) / (u[j] - v[j]);
    }
  }
  return Z;
}

inline std::vector<double> normalize_mean(const std::vector<double>& mu,
                                          const std::vector<double>& u,
                                          const std::vector<double>& v) {
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out[j] = (mu[j] - v[j]) / (u[j] - v[j]);
  return out;
}

inline std::vector<double> normalize_sigma(const std::vector<double>& sigma,
                                           const std::vector<double>& u,
                                           const std::vector<double>& v) {
  std::vector<double> out(sigma.size());
  for (std::size_t j = 0; j < sigma.size(); ++j) out[j] = sigma[j] / (u[j] - v[j]);
  return out;
}

/// Sum of outer products of mean-centered rows (no divisor); this is what a
/// client ships so the pool can be divided once by the pooled count.
inline Matrix raw_scatter(const Matrix& Z, const std::vector<double>& mu_z) {
  const std::size_t d = Z.cols();
  Matrix A(d, d);
  std::vector<double> c(d);
  for (std::size_t r = 0; r < Z.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) c[j] = Z(r, j) - mu_z[j];
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = j; k < d; ++k) A(j, k) += c[j] * c[k];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) A(j, k) = A(k, j);
  }
  return A;
}

/// Covariance in normalized space, A(j,k) = sum (z_j-mu_j)(z_k-mu_k) / (n-1).
inline Matrix covariance_scatter(const Matrix& Z, const std::vector<double>& mu_z) {
  if (Z.rows() < 2) throw data_error("covariance needs at least 2 samples");
  Matrix A = raw_scatter(Z, mu_z);
  const double div = static_cast<double>(Z.rows() - 1);
  for (double& x : A.data()) x /= div;
  return A;
}

/// Pearson matrix R(j,k) = A(j,k) / (sigma_j * sigma_k).
inline Matrix pearson_from_cov(const Matrix& A, const std::vector<double>& sigma) {
  const std::size_t d = A.cols();
  for (std::size_t j = 0; j < d; ++j) {
    if (!(sigma[j] > 0.0)) {
      throw degenerate_metric_error("metric_" + std::to_string(j + 1));
    }
  }
  Matrix R(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < d; ++k) R(j, k) = A(j, k) / (sigma[j] * sigma[k]);
  }
  return R;
}

/// CRITIC coefficients c_j = sigma_j * sum_k (1 - R(j,k)), normalized onto
/// the simplex. An all-zero coefficient vector (e.g. d = 1) falls back to
/// uniform weights.
inline std::vector<double> critic_weights(const std::vector<double>& sigma_z,
                                          const Matrix& R) {
  const std::size_t d = sigma_z.size();
  std::vector<double> c(d);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double conflict = 0.0;
    for (std::size_t k = 0; k < d; ++k) conflict += 1.0 - R(j, k);
    c[j] = sigma_z[j] * conflict;
    if (c[j] < -1e-9) {
      throw data_error("negative CRITIC coefficient for metric " + std::to_string(j + 1) +
                       "; correlation matrix is not a valid Pearson matrix");
    }
    c[j] = std::max(c[j], 0.0);
    total += c[j];
  }
  if (total <= 0.0) {
    return std::vector<double>(d, 1.0 / static_cast<double>(d));
  }
  for (double& w : c) w /= total;
  return c;
}

enum class ModelMode { central, federated, fedavg };

inline std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::central: return "central";
    case ModelMode::federated: return "federated";
    case ModelMode::fedavg: return "fedavg";
  }
  return "?";
}

inline ModelMode mode_from_string(const std::string& s) {
  if (s == "central") return ModelMode::central;
  if (s == "federated") return ModelMode::federated;
  if (s == "fedavg") return ModelMode::fedavg;
  throw config_error("unknown model mode: " + s);
}

/// The trained scoring model: simplex weights plus per-metric CDF parameters
/// and the normalization bounds they were estimated with. Immutable once
/// built; safe to share across scorers.
struct ScoringModel {
  std::vector<MetricSpec> specs;
  std::vector<double> weights;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<CdfParams> cdfs;
  int trained_rounds = 0;
  ModelMode mode = ModelMode::central;

  std::size_t dim() const { return specs.size(); }

  double score(const std::vector<double>& x) const {
    if (x.size() != specs.size()) {
      throw std::domain_error("metric vector dimension does not match model");
    }
    double y = 0.0;
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (weights[j] == 0.0) continue;  // dropped metric, no fitted CDF
      y += weights[j] * metric_score(specs[j], cdfs[j], mu[j], x[j]);
    }
    return y;
  }

  double score_row(const Matrix& X, std::size_t r) const {
    std::vector<double> x(X.row(r), X.row(r) + X.cols());
    return score(x);
  }

  std::vector<double> score_all(const Matrix& X) const {
    std::vector<double> out(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out[r] = score_row(X, r);
    return out;
  }
};

inline json model_to_json(const ScoringModel& m) {
  json j;
  j["specs"] = m.specs;
  j["weights"] = m.weights;
  j["mu"] = m.mu;
  j["sigma"] = m.sigma;
  j["u"] = m.u;
  j["v"] = m.v;
  j["trained_rounds"] = m.trained_rounds;
  j["mode"] = to_string(m.mode);
  return j;
}

inline ScoringModel model_from_json(const json& j) {
  ScoringModel m;
  m.specs = j.at("specs").get<std::vector<MetricSpec>>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.mu = j.at("mu").get<std::vector<double>>();
  m.sigma = j.at("sigma").get<std::vector<double>>();
  m.u = j.at("u").get<std::vector<double>>();
  m.v = j.at("v").get<std::vector<double>>();
  m.trained_rounds = j.at("trained_rounds").get<int>();
  m.mode = mode_from_string(j.at("mode").get<std::string>());
  m.cdfs.resize(m.specs.size());
  for (std::size_t k = 0; k < m.specs.size(); ++k) {
    if (m.weights[k] == 0.0 && m.specs[k].distribution == Distribution::normal &&
        !(m.sigma[k] > 0.0)) {
      continue;  // dropped metric kept as a placeholder
    }
    if (m.weights[k] == 0.0 && m.specs[k].distribution == Distribution::exponential &&
        !(m.mu[k] > 0.0)) {
      continue;
    }
    m.cdfs[k] = fit_distribution(m.specs[k], m.mu[k], m.sigma[k]);
  }
  return m;
}

/// What to do when a metric has zero spread (u == v): fail, or drop it from
/// the weighting (weight 0) and renormalize the rest.
enum class DegeneratePolicy { error, drop };

/// Assemble a model from global statistics. `active` marks metrics that
/// survive the degenerate check; dropped metrics get weight 0 and no CDF.
inline ScoringModel assemble_model(const std::vector<MetricSpec>& specs,
                                   const std::vector<double>& weights,
                                   const std::vector<double>& mu,
                                   const std::vector<double>& sigma,
                                   const std::vector<double>& u,
                                   const std::vector<double>& v,
                                   ModelMode mode, int rounds,
                                   const std::vector<bool>* active = nullptr) {
  ScoringModel m;
  m.specs = specs;
  m.weights = weights;
  m.mu = mu;
  m.sigma = sigma;
  m.u = u;
  m.v = v;
  m.mode = mode;
  m.trained_rounds = rounds;
  m.cdfs.resize(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) {
    if (active && !(*active)[j]) continue;
    m.cdfs[j] = fit_distribution(specs[j], mu[j], sigma[j]);
  }
  return m;
}

/// Centralized CRITIC-DM training: summarize, min-max normalize, Pearson
/// correlation, CRITIC weights, then per-metric CDF fits.
inline ScoringModel train_central(const Matrix& X, const std::vector<MetricSpec>& specs,
                                  DegeneratePolicy policy = DegeneratePolicy::error) {
  if (X.cols() != specs.size()) throw std::domain_error("spec count != metric columns");
  StatsSummary g = summarize(X);

  std::vector<bool> active(specs.size(), true);
  for (std::size_t j = 0; j < specs.size(); ++j) {
    if (!(g.u[j] > g.v[j])) {
      if (policy == DegeneratePolicy::error) throw degenerate_metric_error(specs[j].name);
      active[j] = false;
    }
  }

  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    if (active[j]) keep.push_back(j);
  }
  if (keep.empty()) throw data_error("all metrics are degenerate");

  Matrix Xk(X.rows(), keep.size());
  std::vector<double> uk(keep.size()), vk(keep.size()), muk(keep.size()), sk(keep.size());
  for (std::size_t c = 0; c < keep.size(); ++c) {
    uk[c] = g.u[keep[c]];
    vk[c] = g.v[keep[c]];
    muk[c] = g.mu[keep[c]];
    sk[c] = std::sqrt(g.sigma2[keep[c]]);
    for (std::size_t r = 0; r < X.rows(); ++r) Xk(r, c) = X(r, keep[c]);
  }

  Matrix Z = min_max_normalize(Xk, uk, vk);
  std::vector<double> mu_z = normalize_mean(muk, uk, vk);
  std::vector<double> sigma_z = normalize_sigma(sk, uk, vk);
  Matrix A = covariance_scatter(Z, mu_z);
  Matrix R = pearson_from_cov(A, sigma_z);
  std::vector<double> wk = critic_weights(sigma_z, R);

  std::vector<double> weights(specs.size(), 0.0);
  std::vector<double> sigma(specs.size(), 0.0);
  for (std::size_t c = 0; c < keep.size(); ++c) weights[keep[c]] = wk[c];
  for (std::size_t j = 0; j < specs.size(); ++j) sigma[j] = std::sqrt(g.sigma2[j]);

  return assemble_model(specs, weights, g.mu, sigma, g.u, g.v, ModelMode::central, 0,
                        &active);
}

}  // namespace feddrive::critic

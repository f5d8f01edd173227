#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "feddrive/core.hpp"
#include "feddrive/critic.hpp"

namespace feddrive::eval {

struct RegressionIndexes {
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

inline RegressionIndexes regression_indexes(const std::vector<double>& y_true,
                                            const std::vector<double>& y_pred) {
  if (y_true.empty() || y_true.size() != y_pred.size()) {
    throw std::domain_error("regression indexes need equal non-empty vectors");
  }
  const double n = static_cast<double>(y_true.size());
  double mean = 0.0;
  for (double y : y_true) mean += y;
  mean /= n;

  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double e = y_true[i] - y_pred[i];
    ss_res += e * e;
    abs_sum += std::fabs(e);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) {
    throw data_error("R^2 undefined: ground-truth scores have zero variance");
  }
  RegressionIndexes r;
  r.mse = ss_res / n;
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(r.mse);
  r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

/// How far a federated model sits from its centrally trained counterpart:
/// regression indexes of the scores (central as ground truth), the signed
/// mean score gap delta, and the weight-vector infinity-norm gap.
struct ConsistencyReport {
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  double delta = 0.0;      // mean(fed - central), signed
  double abs_delta = 0.0;  // mean |fed - central|
  double weight_gap = 0.0;
  std::vector<double> per_round_weight_error;

  json to_json() const {
    return json{{"mse", mse},
                {"mae", mae},
                {"rmse", rmse},
                {"r2", r2},
                {"delta", delta},
                {"abs_delta", abs_delta},
                {"weight_gap", weight_gap},
                {"per_round_weight_error", per_round_weight_error}};
  }
};

inline double inf_norm_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double g = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) g = std::max(g, std::fabs(a[j] - b[j]));
  return g;
}

inline ConsistencyReport consistency_report(
    const critic::ScoringModel& central, const critic::ScoringModel& fed,
    const Matrix& X,
    const std::vector<std::vector<double>>* weight_history = nullptr) {
  if (central.specs != fed.specs) {
    throw std::domain_error("models were trained over different metric specs");
  }
  const std::vector<double> y_c = central.score_all(X);
  const std::vector<double> y_f = fed.score_all(X);

  ConsistencyReport rep;
  const RegressionIndexes idx = regression_indexes(y_c, y_f);
  rep.mse = idx.mse;
  rep.mae = idx.mae;
  rep.rmse = idx.rmse;
  rep.r2 = idx.r2;
  for (std::size_t i = 0; i < y_c.size(); ++i) {
    rep.delta += y_f[i] - y_c[i];
    rep.abs_delta += std::fabs(y_f[i] - y_c[i]);
  }
  rep.delta /= static_cast<double>(y_c.size());
  rep.abs_delta /= static_cast<double>(y_c.size());
  rep.weight_gap = inf_norm_gap(central.weights, fed.weights);
  if (weight_history) {
    rep.per_round_weight_error.reserve(weight_history->size());
    for (const auto& w : *weight_history) {
      rep.per_round_weight_error.push_back(inf_norm_gap(central.weights, w));
    }
  }
  return rep;
}

/// Fixed-width histogram of scores (same bin count as training, default 50).
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

inline Histogram score_histogram(const std::vector<double>& scores, int bins = 50,
                                 double lo = 0.0, double hi = 1.0) {
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) {
    h.edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double s : scores) {
    double pos = (s - lo) / (hi - lo) * static_cast<double>(bins);
    auto b = static_cast<long>(std::floor(pos));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace feddrive::eval

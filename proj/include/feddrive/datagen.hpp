#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "feddrive/core.hpp"

namespace feddrive::datagen {

enum class Partition { iid, shards };

/// Parameters of the synthetic trip population. `latent_rho` mixes a shared
/// per-trip factor into the exponential metrics to induce the positive
/// cross-metric correlation seen in real trip data (0 = independent draws).
/// `ubi_rounding` reproduces integer event counts normalized by a random
/// trip distance.
struct PopulationSpec {
  std::vector<MetricSpec> specs;
  std::vector<double> target_mu;
  std::vector<double> target_sigma;  // normal metrics only
  std::size_t n_trips = 0;
  std::size_t clients = 1;
  Partition partition = Partition::shards;
  std::size_t n_shards = 1;
  std::uint64_t seed = 0;
  std::size_t sort_metric = 0;
  double latent_rho = 0.0;
  bool ubi_rounding = false;
  int distance_min_km = 3;  // UBI trip distance range, inclusive
  int distance_max_km = 10;
};

namespace detail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform_pos() {  // (0, 1]
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  double exponential(double mean) { return -mean * std::log(uniform_pos()); }
  double normal(double mu, double sigma) {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 2.0 * M_PI * uniform();
    return mu + sigma * r * std::cos(t);
  }
  std::uint64_t next() { return eng_(); }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace detail

/// Draws the synthetic population. Exponential metrics are non-negative with
/// the target mean; normal metrics hit the target (mu, sigma). Fixed seed
/// gives a bit-identical matrix.
inline Matrix gen_synthetic_population(const PopulationSpec& spec) {
  const std::size_t d = spec.specs.size();
  if (d == 0 || spec.n_trips == 0) throw config_error("empty population spec");
  if (spec.target_mu.size() != d) throw config_error("target_mu size mismatch");
  if (spec.ubi_rounding &&
      (spec.distance_min_km < 1 || spec.distance_max_km < spec.distance_min_km)) {
    throw config_error("trip distance range must satisfy 1 <= min <= max");
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (spec.specs[j].distribution == Distribution::exponential &&
        !(spec.target_mu[j] > 0.0)) {
      throw config_error("exponential metric needs a positive mean: " +
                         spec.specs[j].name);
    }
  }

  detail::Rng rng(derive_seed(spec.seed, "datagen"));
  const double rho = std::clamp(spec.latent_rho, 0.0, 0.95);
  Matrix X(spec.n_trips, d);
  for (std::size_t r = 0; r < spec.n_trips; ++r) {
    const double shared = rng.exponential(1.0);
    double distance = 1.0;
    if (spec.ubi_rounding) {
      const double span = spec.distance_max_km - spec.distance_min_km + 1;
      distance = spec.distance_min_km + std::floor(rng.uniform() * span);
    }
    for (std::size_t j = 0; j < d; ++j) {
      double x;
      if (spec.specs[j].distribution == Distribution::exponential) {
        const double own = rng.exponential(1.0);
        x = spec.target_mu[j] * (rho * shared + (1.0 - rho) * own);
        if (spec.ubi_rounding) {
          x = std::min(std::round(x), 10.0) / distance;
        }
      } else {
        x = rng.normal(spec.target_mu[j], spec.target_sigma[j]);
      }
      X(r, j) = x;
    }
  }
  return X;
}

/// Shards partition: rows sorted by one metric, cut into contiguous shards,
/// shards dealt randomly so every client holds at least one. Produces the
/// skewed local distributions used to stress federated training.
inline std::vector<Matrix> partition_non_iid(const Matrix& X, std::size_t clients,
                                             std::size_t n_shards, std::uint64_t seed,
                                             std::size_t sort_metric = 0) {
  if (n_shards < clients) throw config_error("need n_shards >= clients");
  if (X.rows() < n_shards) throw data_error("fewer rows than shards");

  std::vector<std::size_t> order(X.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return X(a, sort_metric) < X(b, sort_metric);
  });

  // shard boundaries, sizes differing by at most one
  const std::size_t n = X.rows();
  std::vector<std::pair<std::size_t, std::size_t>> shards;
  std::size_t start = 0;
  for (std::size_t s = 0; s < n_shards; ++s) {
    std::size_t len = n / n_shards + (s < n % n_shards ? 1 : 0);
    shards.emplace_back(start, start + len);
    start += len;
  }

  detail::Rng rng(derive_seed(seed, "partition"));
  std::vector<std::size_t> shard_ids(n_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), 0);
  std::shuffle(shard_ids.begin(), shard_ids.end(), rng.engine());

  std::vector<std::size_t> owner(n_shards);
  for (std::size_t s = 0; s < n_shards; ++s) {
    // first K shuffled shards guarantee one shard per client
    owner[shard_ids[s]] =
        s < clients ? s : static_cast<std::size_t>(rng.next() % clients);
  }

  std::vector<Matrix> out(clients);
  for (std::size_t s = 0; s < n_shards; ++s) {
    for (std::size_t i = shards[s].first; i < shards[s].second; ++i) {
      const std::size_t r = order[i];
      std::vector<double> row(X.row(r), X.row(r) + X.cols());
      out[owner[s]].append_row(row);
    }
  }
  return out;
}

inline std::vector<Matrix> partition_iid(const Matrix& X, std::size_t clients,
                                         std::uint64_t seed) {
  if (clients == 0) throw config_error("need at least one client");
  std::vector<std::size_t> order(X.rows());
  std::iota(order.begin(), order.end(), 0);
  detail::Rng rng(derive_seed(seed, "partition"));
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<Matrix> out(clients);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t r = order[i];
    std::vector<double> row(X.row(r), X.row(r) + X.cols());
    out[i % clients].append_row(row);
  }
  return out;
}

inline std::vector<Matrix> partition(const Matrix& X, const PopulationSpec& spec) {
  if (spec.partition == Partition::iid) {
    return partition_iid(X, spec.clients, spec.seed);
  }
  return partition_non_iid(X, spec.clients, spec.n_shards, spec.seed, spec.sort_metric);
}

/// Fleet-scale preset: 53 trucks, 606 trips each, the six truck metrics.
/// Units are scaled so every metric is O(1) (AvgSpd in 100 km/h, AvgRPM in
/// kRPM), keeping encrypted fixed-point error far below test tolerances.
inline PopulationSpec fleet_preset(std::uint64_t seed) {
  PopulationSpec p;
  p.specs = {
      {"#HarshAcc", Expectation::negative, Distribution::exponential},
      {"#HarshDec", Expectation::negative, Distribution::exponential},
      {"#HarshTurn", Expectation::negative, Distribution::exponential},
      {"IdleRatio", Expectation::negative, Distribution::normal},
      {"AvgSpd", Expectation::positive, Distribution::normal},
      {"AvgRPM", Expectation::oscillator, Distribution::normal},
  };
  p.target_mu = {0.15, 0.12, 0.05, 0.16, 0.62, 1.45};
  p.target_sigma = {0.0, 0.0, 0.0, 0.05, 0.15, 0.18};
  p.n_trips = 53 * 606;
  p.clients = 53;
  p.partition = Partition::shards;
  p.n_shards = 53;
  p.sort_metric = 4;  // sort by AvgSpd: one speed band per truck
  p.latent_rho = 0.0;
  p.seed = seed;
  return p;
}

/// UBI-scale preset: 200 virtual trips dealt to 40 clients over 40 shards.
/// Counts are integer 0..10 divided by a random trip distance, with a shared
/// latent factor correlating the event metrics.
inline PopulationSpec ubi_preset(std::uint64_t seed) {
  PopulationSpec p;
  p.specs = {
      {"AvgSpd", Expectation::oscillator, Distribution::exponential},
      {"#Accel", Expectation::negative, Distribution::exponential},
      {"#SuddenStart", Expectation::negative, Distribution::exponential},
      {"#AbruptLaneChange", Expectation::negative, Distribution::exponential},
      {"#IntenseBrake", Expectation::negative, Distribution::exponential},
      {"#SuddenStop", Expectation::negative, Distribution::exponential},
      {"#AbruptSteering", Expectation::negative, Distribution::exponential},
  };
  p.target_mu = {5.0, 2.5, 2.0, 1.5, 2.0, 1.0, 1.8};
  p.target_sigma = std::vector<double>(7, 0.0);
  p.n_trips = 200;
  p.clients = 40;
  p.partition = Partition::shards;
  p.n_shards = 40;
  p.sort_metric = 0;
  p.latent_rho = 0.3;
  p.ubi_rounding = true;
  p.distance_min_km = 3;
  p.distance_max_km = 10;
  p.seed = seed;
  return p;
}

}  // namespace feddrive::datagen

#pragma once

#include <algorithm>
#include <cmath>

#include "feddrive/core.hpp"

namespace feddrive {

/// Standard normal CDF via Hart's rational approximation (double precision,
/// abs error well under 1e-7). Self-contained so scores do not depend on the
/// platform's erf implementation.
inline double standard_normal_cdf(double x) {
  const double xabs = std::fabs(x);
  double e;
  if (xabs > 37.0) {
    e = 0.0;
  } else {
    const double ex = std::exp(-xabs * xabs / 2.0);
    if (xabs < 7.07106781186547) {
      double build = 3.52624965998911e-02 * xabs + 0.700383064443688;
      build = build * xabs + 6.37396220353165;
      build = build * xabs + 33.912866078383;
      build = build * xabs + 112.079291497871;
      build = build * xabs + 221.213596169931;
      build = build * xabs + 220.206867912376;
      e = ex * build;
      build = 8.83883476483184e-02 * xabs + 1.75566716318264;
      build = build * xabs + 16.064177579207;
      build = build * xabs + 86.7807322029461;
      build = build * xabs + 296.564248779674;
      build = build * xabs + 637.333633378831;
      build = build * xabs + 793.826512519948;
      build = build * xabs + 440.413735824752;
      e = e / build;
    } else {
      double build = xabs + 0.65;
      build = xabs + 4.0 / build;
      build = xabs + 3.0 / build;
      build = xabs + 2.0 / build;
      build = xabs + 1.0 / build;
      e = ex / build / 2.506628274631000502;
    }
  }
  return x > 0.0 ? 1.0 - e : e;
}

/// Fitted CDF of one metric. Exponential is parameterized by rate = 1/mean
/// with support x >= 0; normal by (mu, sigma).
struct CdfParams {
  Distribution family = Distribution::exponential;
  double mu = 0.0;
  double sigma = 0.0;
  double rate = 0.0;  // 1/mu, exponential only

  double cdf(double x) const {
    if (family == Distribution::exponential) {
      if (x < 0.0) return 0.0;
      return -std::expm1(-rate * x);
    }
    return standard_normal_cdf((x - mu) / sigma);
  }
};

inline CdfParams fit_distribution(const MetricSpec& spec, double mu, double sigma) {
  CdfParams p;
  p.family = spec.distribution;
  p.mu = mu;
  p.sigma = sigma;
  if (spec.distribution == Distribution::exponential) {
    if (!(mu > 0.0)) {
      throw fit_error("exponential fit requires mean > 0 for metric " + spec.name);
    }
    p.rate = 1.0 / mu;
  } else {
    if (!(sigma > 0.0)) {
      throw fit_error("normal fit requires sigma > 0 for metric " + spec.name);
    }
  }
  return p;
}

/// Metric-level score: positive metrics reward a high CDF value, negative a
/// low one, and oscillators reward closeness to the mean. The oscillator
/// form can dip below zero for extreme values under an exponential CDF, so
/// it is clamped into [0, 1].
inline double metric_score(const MetricSpec& spec, const CdfParams& cdf,
                           double mu_j, double x) {
  switch (spec.expectation) {
    case Expectation::positive:
      return cdf.cdf(x);
    case Expectation::negative:
      return 1.0 - cdf.cdf(x);
    case Expectation::oscillator: {
      const double s = 1.0 - 2.0 * std::fabs(cdf.cdf(mu_j) - cdf.cdf(x));
      return std::clamp(s, 0.0, 1.0);
    }
  }
  return 0.0;
}

}  // namespace feddrive

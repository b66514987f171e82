#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "mfegra/distributions.hpp"
#include "mfegra/errors.hpp"

namespace mfegra {

/// Monte Carlo estimate of the failure probability with its binomial
/// standard error.
struct FailureEstimate {
  double p_hat = 0.0;
  Eigen::Index m = 0;
  double std_error = 0.0;

  static FailureEstimate FromCounts(Eigen::Index failures, Eigen::Index m) {
    if (m < 1) throw ConfigError("FailureEstimate: m must be >= 1");
    FailureEstimate e;
    e.m = m;
    e.p_hat = static_cast<double>(failures) / static_cast<double>(m);
    e.std_error = std::sqrt(e.p_hat * (1.0 - e.p_hat) / static_cast<double>(m));
    return e;
  }
};

/// Failure indicator: 1 iff the (shifted) limit state is strictly positive.
/// The boundary itself counts as safe.
inline int indicator(double g_value) {
  if (!std::isfinite(g_value)) throw std::invalid_argument("indicator: non-finite limit state value");
  return g_value > 0.0 ? 1 : 0;
}

/// Failure fraction over precomputed limit-state values. Non-finite entries
/// follow the failed-evaluation convention and count as failures.
inline FailureEstimate estimate_pf_values(const Eigen::VectorXd& g_values) {
  if (g_values.size() < 1) throw ConfigError("estimate_pf_values: empty values");
  Eigen::Index failures = 0;
  for (Eigen::Index i = 0; i < g_values.size(); ++i) {
    if (!std::isfinite(g_values[i]) || g_values[i] > 0.0) ++failures;
  }
  return FailureEstimate::FromCounts(failures, g_values.size());
}

/// Monte Carlo probability of failure of `predictor` over the sample set.
/// A predictor that throws or returns a non-finite value at a sample counts
/// as a failure there, and the run continues.
inline FailureEstimate estimate_pf(const std::function<double(const Eigen::VectorXd&)>& predictor,
                                   const SampleSet& samples) {
  if (samples.size() < 1) throw ConfigError("estimate_pf: empty sample set");
  Eigen::Index failures = 0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    double g;
    try {
      g = predictor(samples.row(i));
    } catch (...) {
      ++failures;
      continue;
    }
    if (!std::isfinite(g) || g > 0.0) ++failures;
  }
  return FailureEstimate::FromCounts(failures, samples.size());
}

/// Relative error of a surrogate-based estimate against the reference.
inline double relative_error(double p_mf, double p_ref) {
  if (!(p_ref > 0.0)) throw std::invalid_argument("relative_error: reference must be > 0");
  return std::abs(p_mf - p_ref) / p_ref;
}

}  // namespace mfegra

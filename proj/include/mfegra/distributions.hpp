#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mfegra/errors.hpp"

namespace mfegra {

// ---------------------------------------------------------------------------
// Standard normal helpers
// ---------------------------------------------------------------------------

inline double norm_pdf(double x) {
  static constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
  static constexpr double inv_sqrt_2 = 0.7071067811865475244;
  return 0.5 * std::erfc(-x * inv_sqrt_2);
}

/// Inverse standard normal CDF. Rational approximation (Acklam) polished by
/// one Halley step, accurate to ~1e-15 over (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("norm_quantile: p outside [0,1]");
  }
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the erfc-based CDF.
  static constexpr double sqrt_2pi = 2.5066282746310005024;
  double e = norm_cdf(x) - p;
  double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform double in the open interval (0,1), 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Derives an independent seed stream from a run-level master seed. Each
/// (purpose, index) pair maps to a fixed, reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose,
                                 std::uint64_t index = 0) {
  return detail::splitmix64(master ^ detail::splitmix64(purpose * 0x9e3779b97f4a7c15ULL + index));
}

// ---------------------------------------------------------------------------
// Random-variable specifications
// ---------------------------------------------------------------------------

enum class DistKind { uniform, normal, truncated_normal };

/// One scalar input distribution. Uniform and truncated-normal use
/// [lower, upper]; the normal kinds use (mean, stddev).
struct RandomVariableSpec {
  DistKind kind = DistKind::uniform;
  double lower = 0.0;
  double upper = 1.0;
  double mean = 0.0;
  double stddev = 1.0;

  static RandomVariableSpec Uniform(double lo, double hi) {
    RandomVariableSpec s;
    s.kind = DistKind::uniform;
    s.lower = lo;
    s.upper = hi;
    s.validate();
    return s;
  }
  static RandomVariableSpec Normal(double mean, double stddev) {
    RandomVariableSpec s;
    s.kind = DistKind::normal;
    s.mean = mean;
    s.stddev = stddev;
    s.validate();
    return s;
  }
  static RandomVariableSpec TruncatedNormal(double lo, double hi, double mean, double stddev) {
    RandomVariableSpec s;
    s.kind = DistKind::truncated_normal;
    s.lower = lo;
    s.upper = hi;
    s.mean = mean;
    s.stddev = stddev;
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
      case DistKind::uniform:
        if (!(lower < upper)) throw ConfigError("uniform: requires lower < upper");
        break;
      case DistKind::normal:
        if (!(stddev > 0.0)) throw ConfigError("normal: requires stddev > 0");
        break;
      case DistKind::truncated_normal:
        if (!(lower < upper)) throw ConfigError("truncated-normal: requires lower < upper");
        if (!(stddev > 0.0)) throw ConfigError("truncated-normal: requires stddev > 0");
        break;
    }
  }

  /// Inverse CDF at u in (0,1). Truncated normal transforms u into the
  /// truncated quantile range first, so draws never leave [lower, upper].
  double quantile(double u) const {
    switch (kind) {
      case DistKind::uniform:
        return lower + u * (upper - lower);
      case DistKind::normal:
        return mean + stddev * norm_quantile(u);
      case DistKind::truncated_normal: {
        double alpha = norm_cdf((lower - mean) / stddev);
        double beta = norm_cdf((upper - mean) / stddev);
        double x = mean + stddev * norm_quantile(alpha + u * (beta - alpha));
        return std::clamp(x, lower, upper);
      }
    }
    return 0.0;  // unreachable
  }

  /// Smallest/largest attainable values (infinite for the unbounded normal).
  double support_lower() const {
    return kind == DistKind::normal ? -std::numeric_limits<double>::infinity() : lower;
  }
  double support_upper() const {
    return kind == DistKind::normal ? std::numeric_limits<double>::infinity() : upper;
  }
};

// ---------------------------------------------------------------------------
// Domain box and sample sets
// ---------------------------------------------------------------------------

struct DomainBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  DomainBox() = default;
  DomainBox(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
    validate();
  }

  static DomainBox FromSpecs(const std::vector<RandomVariableSpec>& specs) {
    Eigen::VectorXd lo(specs.size()), hi(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      lo[static_cast<Eigen::Index>(i)] = specs[i].support_lower();
      hi[static_cast<Eigen::Index>(i)] = specs[i].support_upper();
    }
    return DomainBox(std::move(lo), std::move(hi));
  }

  void validate() const {
    if (lower.size() == 0 || lower.size() != upper.size())
      throw ConfigError("DomainBox: empty or mismatched bounds");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw ConfigError("DomainBox: requires lower < upper per dimension");
  }

  Eigen::Index dim() const { return lower.size(); }
  Eigen::VectorXd width() const { return upper - lower; }

  bool contains(const Eigen::VectorXd& z, double tol = 0.0) const {
    for (Eigen::Index i = 0; i < dim(); ++i)
      if (z[i] < lower[i] - tol || z[i] > upper[i] + tol) return false;
    return true;
  }

  Eigen::VectorXd clamp(Eigen::VectorXd z) const {
    for (Eigen::Index i = 0; i < dim(); ++i) z[i] = std::clamp(z[i], lower[i], upper[i]);
    return z;
  }
};

/// A batch of points (one row per point) plus the seed that generated it.
struct SampleSet {
  Eigen::MatrixXd points;  // m x N_z
  std::uint64_t seed = 0;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  Eigen::VectorXd row(Eigen::Index i) const { return points.row(i).transpose(); }

  /// FNV-1a over the raw point bytes; used to check that studies score every
  /// algorithm against the identical sample set.
  std::uint64_t content_hash() const {
    const auto* bytes = reinterpret_cast<const unsigned char*>(points.data());
    std::size_t nbytes = static_cast<std::size_t>(points.size()) * sizeof(double);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < nbytes; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// Sampling operations
// ---------------------------------------------------------------------------

/// m i.i.d. joint draws from the given marginals (inputs are independent).
/// Draw order is row-major (point by point, dimension by dimension), so a
/// fixed seed reproduces the set bit for bit.
inline SampleSet draw_mc(const std::vector<RandomVariableSpec>& specs, Eigen::Index m,
                         std::uint64_t seed) {
  if (specs.empty()) throw ConfigError("draw_mc: specs must be nonempty");
  if (m < 1) throw ConfigError("draw_mc: m must be >= 1");
  for (const auto& s : specs) s.validate();

  std::mt19937_64 rng(seed);
  SampleSet out;
  out.seed = seed;
  out.points.resize(m, static_cast<Eigen::Index>(specs.size()));
  for (Eigen::Index i = 0; i < m; ++i)
    for (std::size_t j = 0; j < specs.size(); ++j)
      out.points(i, static_cast<Eigen::Index>(j)) = specs[j].quantile(detail::uniform01(rng));
  return out;
}

/// Latin hypercube design of n points in the box: each dimension is split
/// into n equal strata holding exactly one point. Plain LHS with random
/// within-stratum jitter and independent per-dimension permutations; no
/// optimization of the design.
inline SampleSet latin_hypercube(const DomainBox& domain, Eigen::Index n, std::uint64_t seed) {
  domain.validate();
  if (n < 1) throw ConfigError("latin_hypercube: n must be >= 1");

  std::mt19937_64 rng(seed);
  const Eigen::Index d = domain.dim();
  SampleSet out;
  out.seed = seed;
  out.points.resize(n, d);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    // Fisher-Yates, kept in-library so the shuffle is stable across stdlibs.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
    }
    const double lo = domain.lower[j];
    const double w = (domain.upper[j] - domain.lower[j]) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double u = detail::uniform01(rng);
      out.points(i, j) = lo + (static_cast<double>(perm[static_cast<std::size_t>(i)]) + u) * w;
    }
  }
  return out;
}

}  // namespace mfegra

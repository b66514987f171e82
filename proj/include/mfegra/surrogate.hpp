#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "mfegra/distributions.hpp"
#include "mfegra/errors.hpp"
#include "mfegra/optim.hpp"

namespace mfegra {

// ---------------------------------------------------------------------------
// Augmented inputs and hyperparameters
// ---------------------------------------------------------------------------

/// GP input: information source index plus a point in the random-variable
/// domain. Source 0 is the high-fidelity model; sources 1..k index the
/// discrepancy components.
struct AugmentedInput {
  int source = 0;
  Eigen::VectorXd z;
};

/// Squared-exponential kernel parameters for one GP component.
struct ComponentHyper {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;  // per dimension, strictly positive
};

/// Hyperparameters of the composite surrogate: one component for the
/// high-fidelity process plus one per discrepancy, constant prior means per
/// component, and a diagonal jitter expressed relative to the prior variance.
struct KernelHyperparams {
  std::vector<ComponentHyper> components;
  Eigen::VectorXd means;  // size components.size(); means[l>=1] are discrepancy offsets
  double jitter = 1e-10;

  int num_components() const { return static_cast<int>(components.size()); }

  void validate() const {
    if (components.empty()) throw std::invalid_argument("hyperparams: no components");
    if (means.size() != static_cast<Eigen::Index>(components.size()))
      throw std::invalid_argument("hyperparams: means/components size mismatch");
    if (!(jitter >= 0.0)) throw std::invalid_argument("hyperparams: jitter must be >= 0");
    for (const auto& c : components) {
      if (!(c.signal_variance >= 0.0))
        throw std::invalid_argument("hyperparams: signal variance must be >= 0");
      for (Eigen::Index i = 0; i < c.length_scales.size(); ++i)
        if (!(c.length_scales[i] > 0.0))
          throw std::invalid_argument("hyperparams: length scales must be > 0");
    }
  }
};

namespace detail {

template <typename A, typename B>
inline double se_kernel(const ComponentHyper& c, const Eigen::MatrixBase<A>& a,
                        const Eigen::MatrixBase<B>& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double d = (a[i] - b[i]) / c.length_scales[i];
    s += d * d;
  }
  return c.signal_variance * std::exp(-0.5 * s);
}

}  // namespace detail

/// Composite prior covariance over augmented inputs: the high-fidelity kernel
/// always contributes; a discrepancy kernel contributes only when both inputs
/// come from the same low-fidelity source.
inline double prior_cov(const AugmentedInput& a, const AugmentedInput& b,
                        const KernelHyperparams& h) {
  h.validate();
  double v = detail::se_kernel(h.components[0], a.z, b.z);
  if (a.source >= 1 && a.source == b.source)
    v += detail::se_kernel(h.components[static_cast<std::size_t>(a.source)], a.z, b.z);
  return v;
}

inline double prior_mean(const AugmentedInput& a, const KernelHyperparams& h) {
  double m = h.means[0];
  if (a.source >= 1) m += h.means[a.source];
  return m;
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

struct Observation {
  int source = 0;
  Eigen::VectorXd z;
  double y = 0.0;
};

/// Observations of the information sources. Rejects duplicate (source, z)
/// pairs (within 1e-12) and non-finite values on insertion.
struct TrainingSet {
  static constexpr double kDuplicateTol = 1e-12;

  std::vector<Observation> obs;

  std::size_t size() const { return obs.size(); }

  bool would_duplicate(int source, const Eigen::VectorXd& z) const {
    for (const auto& o : obs) {
      if (o.source != source || o.z.size() != z.size()) continue;
      if ((o.z - z).cwiseAbs().maxCoeff() <= kDuplicateTol) return true;
    }
    return false;
  }

  void add(int source, Eigen::VectorXd z, double y) {
    if (source < 0) throw std::invalid_argument("TrainingSet: source must be >= 0");
    if (!std::isfinite(y)) throw std::invalid_argument("TrainingSet: non-finite observation");
    if (would_duplicate(source, z))
      throw std::invalid_argument("TrainingSet: duplicate (source, z) observation");
    obs.push_back({source, std::move(z), y});
  }

  int max_source() const {
    int m = 0;
    for (const auto& o : obs) m = std::max(m, o.source);
    return m;
  }

  int count_source(int source) const {
    int n = 0;
    for (const auto& o : obs)
      if (o.source == source) ++n;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Fitting configuration
// ---------------------------------------------------------------------------

struct FitConfig {
  int multistarts = 8;         // LHS starts in log-hyperparameter space, on top of the init point
  int max_evals_per_start = 0; // 0 = auto (scales with parameter count)
  double ftol = 1e-7;
  std::uint64_t seed = 0;
};

namespace detail {

// Log10 search bounds from the hyperparameter optimization scheme:
// length-scales relative to the unit box, variances relative to the
// standardized outputs.
constexpr double kLogEllLo = -2.0, kLogEllHi = 1.0;
constexpr double kLogVarLo = -6.0, kLogVarHi = 2.0;
constexpr double kMaxJitter = 1e-6;
constexpr double kVarianceFloorFactor = 1e-12;
constexpr double kZeroInfoJitterMultiple = 10.0;

struct Standardized {
  Eigen::MatrixXd Xu;        // n x d, inputs scaled to the unit box
  std::vector<int> src;      // per-row source index
  Eigen::VectorXd y_std;     // standardized outputs
  double y_mean = 0.0;
  double y_sd = 1.0;
};

inline Standardized standardize(const TrainingSet& data, const DomainBox& domain) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index d = domain.dim();
  Standardized s;
  s.Xu.resize(n, d);
  s.src.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd y(n);
  const Eigen::VectorXd w = domain.width();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = data.obs[static_cast<std::size_t>(i)];
    if (o.z.size() != d) throw std::invalid_argument("fit: observation dim mismatch");
    s.Xu.row(i) = ((o.z - domain.lower).array() / w.array()).transpose();
    s.src[static_cast<std::size_t>(i)] = o.source;
    y[i] = o.y;
  }
  s.y_mean = y.mean();
  double var = n > 1 ? (y.array() - s.y_mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  s.y_sd = var > 1e-24 ? std::sqrt(var) : 1.0;
  s.y_std = (y.array() - s.y_mean) / s.y_sd;
  return s;
}

/// Dense squared-exponential Gram matrix between row sets A and B.
inline Eigen::MatrixXd se_gram(const ComponentHyper& c, const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B) {
  Eigen::MatrixXd As = A * c.length_scales.cwiseInverse().asDiagonal();
  Eigen::MatrixXd Bs = B * c.length_scales.cwiseInverse().asDiagonal();
  Eigen::VectorXd a2 = As.rowwise().squaredNorm(), b2 = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd D2 = (-2.0 * As * Bs.transpose()).rowwise() + b2.transpose();
  D2.colwise() += a2;
  return c.signal_variance * (-0.5 * D2.array().max(0.0)).exp().matrix();
}

/// Kernel matrix over standardized inputs, without jitter.
inline Eigen::MatrixXd build_kernel(const Eigen::MatrixXd& Xu, const std::vector<int>& src,
                                    const KernelHyperparams& h) {
  const Eigen::Index n = Xu.rows();
  Eigen::MatrixXd K = se_gram(h.components[0], Xu, Xu);
  for (int c = 1; c < h.num_components(); ++c) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (src[static_cast<std::size_t>(i)] == c) rows.push_back(i);
    if (rows.empty()) continue;
    Eigen::MatrixXd Xc(static_cast<Eigen::Index>(rows.size()), Xu.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) Xc.row(static_cast<Eigen::Index>(r)) = Xu.row(rows[r]);
    Eigen::MatrixXd G = se_gram(h.components[static_cast<std::size_t>(c)], Xc, Xc);
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < rows.size(); ++b)
        K(rows[a], rows[b]) += G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return K;
}

/// Cholesky with a relative-jitter ladder: multiplies the diagonal by
/// (1 + jitter), escalating jitter tenfold up to 1e-6 on failure.
/// Returns the factorization and the jitter that succeeded.
inline std::pair<Eigen::MatrixXd, double> cholesky_with_ladder(const Eigen::MatrixXd& K,
                                                               double base_jitter) {
  std::vector<double> attempted;
  double j = std::max(base_jitter, 1e-12);
  while (j <= kMaxJitter * (1.0 + 1e-12)) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal() *= (1.0 + j);
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) return {Eigen::MatrixXd(llt.matrixL()), j};
    attempted.push_back(j);
    j *= 10.0;
  }
  throw ConditioningError("kernel matrix factorization failed after jitter escalation",
                          attempted);
}

struct GlsFit {
  Eigen::VectorXd beta;   // per-component constant means (standardized)
  Eigen::VectorXd alpha;  // K^{-1} (y - H beta)
  double lml = 0.0;       // standardized-data log marginal likelihood
};

inline Eigen::MatrixXd mean_design(const std::vector<int>& src, int ncomp) {
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, ncomp);
  H.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    int s = src[static_cast<std::size_t>(i)];
    if (s >= 1) H(i, s) = 1.0;
  }
  return H;
}

/// Generalized least squares estimate of the constant component means given
/// the factorized kernel, then the resulting marginal likelihood.
inline GlsFit gls_profile(const Eigen::MatrixXd& L, const Eigen::MatrixXd& H,
                          const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  auto Lv = L.triangularView<Eigen::Lower>();
  Eigen::VectorXd Ly = Lv.solve(y);
  Eigen::MatrixXd LH = Lv.solve(H);
  Eigen::MatrixXd A = LH.transpose() * LH;
  A.diagonal().array() += 1e-10;  // sources absent from the data get a zero mean
  GlsFit g;
  g.beta = A.ldlt().solve(LH.transpose() * Ly);
  Eigen::VectorXd r = y - H * g.beta;
  Eigen::VectorXd Lr = Lv.solve(r);
  g.alpha = L.transpose().triangularView<Eigen::Upper>().solve(Lr);
  double logdet = 2.0 * L.diagonal().array().log().sum();
  g.lml = -0.5 * Lr.squaredNorm() - 0.5 * logdet -
          0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  return g;
}

inline KernelHyperparams to_standardized(const KernelHyperparams& raw, const DomainBox& domain,
                                         double y_mean, double y_sd) {
  KernelHyperparams h = raw;
  const Eigen::VectorXd w = domain.width();
  for (auto& c : h.components) {
    c.signal_variance = c.signal_variance / (y_sd * y_sd);
    c.length_scales = (c.length_scales.array() / w.array()).matrix();
  }
  h.means[0] = (raw.means[0] - y_mean) / y_sd;
  for (Eigen::Index l = 1; l < h.means.size(); ++l) h.means[l] = raw.means[l] / y_sd;
  return h;
}

inline KernelHyperparams to_raw(const KernelHyperparams& std_h, const DomainBox& domain,
                                double y_mean, double y_sd) {
  KernelHyperparams h = std_h;
  const Eigen::VectorXd w = domain.width();
  for (auto& c : h.components) {
    c.signal_variance = c.signal_variance * y_sd * y_sd;
    c.length_scales = (c.length_scales.array() * w.array()).matrix();
  }
  h.means[0] = y_mean + y_sd * std_h.means[0];
  for (Eigen::Index l = 1; l < h.means.size(); ++l) h.means[l] = y_sd * std_h.means[l];
  return h;
}

inline std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Posterior
// ---------------------------------------------------------------------------

class MfGpPosterior;
MfGpPosterior fit(const TrainingSet& data, const DomainBox& domain, const KernelHyperparams& init,
                  const FitConfig& cfg);

/// Fitted multifidelity GP. Immutable: queries are const and thread-safe;
/// updates return a new posterior.
class MfGpPosterior {
 public:
  MfGpPosterior() = default;

  int num_sources() const { return h_std_.num_components(); }
  const TrainingSet& training() const { return data_; }
  const DomainBox& domain() const { return domain_; }
  const KernelHyperparams& hyperparams() const { return h_raw_; }
  double jitter_used() const { return jitter_used_; }
  std::uint64_t revision() const { return revision_; }

  /// Log marginal likelihood of the (raw) training data at the fitted
  /// hyperparameters and means.
  double log_marginal_likelihood() const {
    return lml_std_ - static_cast<double>(data_.size()) * std::log(y_sd_);
  }

  double posterior_mean(const AugmentedInput& q) const {
    check_source(q.source);
    Eigen::VectorXd k = kernel_vector(q.source, scale_point(q.z));
    return y_mean_ + y_sd_ * (mean_std(q.source) + k.dot(alpha_));
  }

  double posterior_var(const AugmentedInput& q) const {
    check_source(q.source);
    Eigen::VectorXd k = kernel_vector(q.source, scale_point(q.z));
    Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
    double var = prior_var_std(q.source) - v.squaredNorm();
    return y_sd_ * y_sd_ * std::max(var, 0.0);
  }

  /// Mean and variance of the high-fidelity prediction at one point with a
  /// single kernel solve.
  std::pair<double, double> hf_stats(const Eigen::VectorXd& z) const {
    Eigen::VectorXd k = kernel_vector(0, scale_point(z));
    Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
    double mu = y_mean_ + y_sd_ * (mean_std(0) + k.dot(alpha_));
    double var = y_sd_ * y_sd_ * std::max(prior_var_std(0) - v.squaredNorm(), 0.0);
    return {mu, var};
  }

  double posterior_cov(const AugmentedInput& a, const AugmentedInput& b) const {
    check_source(a.source);
    check_source(b.source);
    Eigen::VectorXd ua = scale_point(a.z), ub = scale_point(b.z);
    Eigen::VectorXd va = L_.triangularView<Eigen::Lower>().solve(kernel_vector(a.source, ua));
    Eigen::VectorXd vb = L_.triangularView<Eigen::Lower>().solve(kernel_vector(b.source, ub));
    double prior = detail::se_kernel(h_std_.components[0], ua, ub);
    if (a.source >= 1 && a.source == b.source)
      prior += detail::se_kernel(h_std_.components[static_cast<std::size_t>(a.source)], ua, ub);
    return y_sd_ * y_sd_ * (prior - va.dot(vb));
  }

  /// Prior variance at any point of the given source (stationary kernels).
  double prior_variance(int source) const {
    check_source(source);
    return y_sd_ * y_sd_ * prior_var_std(source);
  }

  /// Floor used to keep lookahead variances out of the log singularity.
  double variance_floor() const {
    return y_sd_ * y_sd_ * detail::kVarianceFloorFactor * prior_var_std(0);
  }

  /// Variance at or below this level is indistinguishable from the jitter
  /// regularization: such points count as fully resolved.
  double resolution_floor() const {
    return y_sd_ * y_sd_ * detail::kZeroInfoJitterMultiple * jitter_used_ * prior_var_std(0);
  }

  /// Output scaling fixed at fit time (needed to reconstruct a posterior at
  /// fixed hyperparameters, e.g. from a checkpoint).
  std::pair<double, double> output_scaling() const { return {y_mean_, y_sd_}; }

  // -- batch queries ---------------------------------------------------------

  /// Posterior mean of the high-fidelity prediction at each row of zs.
  Eigen::VectorXd hf_mean(const Eigen::MatrixXd& zs) const {
    Eigen::VectorXd mu(zs.rows());
    constexpr Eigen::Index block = 8192;
    for (Eigen::Index i0 = 0; i0 < zs.rows(); i0 += block) {
      Eigen::Index m = std::min(block, zs.rows() - i0);
      Eigen::MatrixXd Ks = hf_cross_kernel(zs.middleRows(i0, m));
      mu.segment(i0, m) =
          ((y_mean_ + y_sd_ * mean_std(0)) + y_sd_ * (Ks * alpha_).array()).matrix();
    }
    return mu;
  }

  /// Posterior mean and variance of the high-fidelity prediction, blockwise.
  void hf_mean_var(const Eigen::MatrixXd& zs, Eigen::VectorXd& mu, Eigen::VectorXd& var) const {
    mu.resize(zs.rows());
    var.resize(zs.rows());
    constexpr Eigen::Index block = 8192;
    const double pv0 = prior_var_std(0);
    for (Eigen::Index i0 = 0; i0 < zs.rows(); i0 += block) {
      Eigen::Index m = std::min(block, zs.rows() - i0);
      Eigen::MatrixXd Ks = hf_cross_kernel(zs.middleRows(i0, m));
      mu.segment(i0, m) =
          ((y_mean_ + y_sd_ * mean_std(0)) + y_sd_ * (Ks * alpha_).array()).matrix();
      Eigen::MatrixXd V = L_.triangularView<Eigen::Lower>().solve(Ks.transpose());
      var.segment(i0, m) =
          (y_sd_ * y_sd_ *
           (pv0 - V.colwise().squaredNorm().transpose().array()).max(0.0)).matrix();
    }
  }

  /// Cached solves for a fixed set of high-fidelity query points, reused by
  /// the lookahead sweep across candidate information sources.
  struct HfQueryCache {
    Eigen::MatrixXd zs_unit;  // m x d (unit box)
    Eigen::MatrixXd V;        // n x m, L^{-1} K_*^T
    Eigen::VectorXd mu, var;  // raw units
    std::uint64_t revision = 0;
  };

  HfQueryCache make_hf_cache(const Eigen::MatrixXd& zs) const {
    HfQueryCache c;
    c.revision = revision_;
    c.zs_unit.resize(zs.rows(), zs.cols());
    const Eigen::VectorXd w = domain_.width();
    for (Eigen::Index i = 0; i < zs.rows(); ++i)
      c.zs_unit.row(i) = ((zs.row(i).transpose() - domain_.lower).array() / w.array()).transpose();
    Eigen::MatrixXd Ks = hf_cross_kernel(zs);
    c.V = L_.triangularView<Eigen::Lower>().solve(Ks.transpose());
    c.mu = ((y_mean_ + y_sd_ * mean_std(0)) + y_sd_ * (Ks * alpha_).array()).matrix();
    c.var = (y_sd_ * y_sd_ *
             (prior_var_std(0) - c.V.colwise().squaredNorm().transpose().array()).max(0.0))
                .matrix();
    return c;
  }

  // -- one-step lookahead ------------------------------------------------------

  /// Variance of the hypothetical future posterior mean at (0, z) when source
  /// `source` is evaluated at z_next: the squared posterior cross-covariance
  /// over the posterior variance at the hypothetical sample. Empty when that
  /// sample is already resolved to the jitter floor (no information left).
  std::optional<double> future_variance_reduction(const Eigen::VectorXd& z,
                                                  const Eigen::VectorXd& z_next,
                                                  int source) const {
    check_source(source);
    Eigen::VectorXd ub = scale_point(z_next);
    Eigen::VectorXd vb = L_.triangularView<Eigen::Lower>().solve(kernel_vector(source, ub));
    double pv_b = prior_var_std(source) - vb.squaredNorm();
    double denom_jitter = jitter_used_ * prior_var_std(source);
    if (pv_b <= detail::kZeroInfoJitterMultiple * denom_jitter) return std::nullopt;

    Eigen::VectorXd ua = scale_point(z);
    Eigen::VectorXd va = L_.triangularView<Eigen::Lower>().solve(kernel_vector(0, ua));
    double cross = detail::se_kernel(h_std_.components[0], ua, ub) - va.dot(vb);
    double sb2 = cross * cross / (pv_b + denom_jitter);
    return y_sd_ * y_sd_ * sb2;
  }

  /// Posterior variance of the high-fidelity prediction at z after one
  /// hypothetical evaluation of `source` at z_next; the standard one-point
  /// conditioning drop, floored for use inside logarithms.
  double lookahead_variance(const Eigen::VectorXd& z, const Eigen::VectorXd& z_next,
                            int source) const {
    double var0 = posterior_var({0, z});
    double red = future_variance_reduction(z, z_next, source).value_or(0.0);
    return std::max(var0 - red, variance_floor());
  }

  /// Batched future-variance-reduction over a cached query set. Returns an
  /// empty vector when the hypothetical sample carries no information.
  std::optional<Eigen::VectorXd> lookahead_reduction_batch(const HfQueryCache& cache,
                                                           const Eigen::VectorXd& z_next,
                                                           int source) const {
    check_source(source);
    if (cache.revision != revision_)
      throw std::logic_error("lookahead_reduction_batch: stale query cache");
    Eigen::VectorXd ub = scale_point(z_next);
    Eigen::VectorXd vb = L_.triangularView<Eigen::Lower>().solve(kernel_vector(source, ub));
    double pv_b = prior_var_std(source) - vb.squaredNorm();
    double denom_jitter = jitter_used_ * prior_var_std(source);
    if (pv_b <= detail::kZeroInfoJitterMultiple * denom_jitter) return std::nullopt;

    const auto& c0 = h_std_.components[0];
    Eigen::VectorXd cross(cache.zs_unit.rows());
    for (Eigen::Index i = 0; i < cache.zs_unit.rows(); ++i)
      cross[i] = detail::se_kernel(c0, cache.zs_unit.row(i).transpose(), ub);
    cross.noalias() -= cache.V.transpose() * vb;
    return (y_sd_ * y_sd_ / (pv_b + denom_jitter)) * cross.array().square().matrix();
  }

  /// New posterior with one more observation, keeping hyperparameters, means,
  /// and output scaling fixed.
  MfGpPosterior with_observation(const AugmentedInput& at, double y) const {
    check_source(at.source);
    MfGpPosterior g = *this;
    g.data_.add(at.source, at.z, y);
    g.rebuild_fixed();
    return g;
  }

 private:
  friend MfGpPosterior fit(const TrainingSet&, const DomainBox&, const KernelHyperparams&,
                           const FitConfig&);
  friend MfGpPosterior make_posterior_fixed(const TrainingSet&, const DomainBox&,
                                            const KernelHyperparams&, double, double);

  void check_source(int source) const {
    if (source < 0 || source >= num_sources())
      throw std::invalid_argument("MfGpPosterior: source index out of range");
  }

  Eigen::VectorXd scale_point(const Eigen::VectorXd& z) const {
    return ((z - domain_.lower).array() / domain_.width().array()).matrix();
  }

  double mean_std(int source) const {
    double m = h_std_.means[0];
    if (source >= 1) m += h_std_.means[source];
    return m;
  }

  double prior_var_std(int source) const {
    double v = h_std_.components[0].signal_variance;
    if (source >= 1) v += h_std_.components[static_cast<std::size_t>(source)].signal_variance;
    return v;
  }

  /// Kernel vector between a scaled query and the training rows.
  Eigen::VectorXd kernel_vector(int source, const Eigen::VectorXd& u) const {
    const Eigen::Index n = Xu_.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = detail::se_kernel(h_std_.components[0], u, Xu_.row(i).transpose());
      int si = src_[static_cast<std::size_t>(i)];
      if (source >= 1 && si == source)
        v += detail::se_kernel(h_std_.components[static_cast<std::size_t>(source)], u,
                               Xu_.row(i).transpose());
      k[i] = v;
    }
    return k;
  }

  /// Cross-kernel between raw query rows and the training set for source-0
  /// queries (discrepancy kernels never touch source-0 queries).
  Eigen::MatrixXd hf_cross_kernel(const Eigen::MatrixXd& zs) const {
    const Eigen::Index m = zs.rows(), n = Xu_.rows(), d = Xu_.cols();
    const auto& c0 = h_std_.components[0];
    const Eigen::VectorXd w = domain_.width();
    Eigen::MatrixXd A(m, d), B(n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      A.col(j) = ((zs.col(j).array() - domain_.lower[j]) / w[j]) / c0.length_scales[j];
      B.col(j) = Xu_.col(j).array() / c0.length_scales[j];
    }
    Eigen::VectorXd a2 = A.rowwise().squaredNorm(), b2 = B.rowwise().squaredNorm();
    Eigen::MatrixXd D2 = (-2.0 * A * B.transpose()).rowwise() + b2.transpose();
    D2.colwise() += a2;
    return (c0.signal_variance * (-0.5 * D2.array().max(0.0)).exp()).matrix();
  }

  /// Refactorize after appending data, with hyperparameters and scaling fixed.
  void rebuild_fixed() {
    auto s = restandardize_fixed();
    Eigen::MatrixXd K = detail::build_kernel(Xu_, src_, h_std_);
    auto [L, j] = detail::cholesky_with_ladder(K, jitter_used_);
    L_ = std::move(L);
    jitter_used_ = j;
    Eigen::MatrixXd H = detail::mean_design(src_, num_sources());
    Eigen::VectorXd r = s - H * h_std_.means;
    Eigen::VectorXd Lr = L_.triangularView<Eigen::Lower>().solve(r);
    alpha_ = L_.transpose().triangularView<Eigen::Upper>().solve(Lr);
    double logdet = 2.0 * L_.diagonal().array().log().sum();
    lml_std_ = -0.5 * Lr.squaredNorm() - 0.5 * logdet -
               0.5 * static_cast<double>(s.size()) * std::log(2.0 * M_PI);
    revision_ = detail::next_revision();
  }

  /// Rebuild scaled inputs and standardized outputs using the stored scaling.
  Eigen::VectorXd restandardize_fixed() {
    const auto n = static_cast<Eigen::Index>(data_.size());
    const Eigen::Index d = domain_.dim();
    Xu_.resize(n, d);
    src_.resize(static_cast<std::size_t>(n));
    Eigen::VectorXd y_std(n);
    const Eigen::VectorXd w = domain_.width();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = data_.obs[static_cast<std::size_t>(i)];
      Xu_.row(i) = ((o.z - domain_.lower).array() / w.array()).transpose();
      src_[static_cast<std::size_t>(i)] = o.source;
      y_std[i] = (o.y - y_mean_) / y_sd_;
    }
    return y_std;
  }

  DomainBox domain_;
  TrainingSet data_;
  KernelHyperparams h_std_;   // unit-box / standardized-output units
  KernelHyperparams h_raw_;   // original units (public view)
  double y_mean_ = 0.0;
  double y_sd_ = 1.0;
  Eigen::MatrixXd Xu_;
  std::vector<int> src_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;
  double jitter_used_ = 1e-10;
  double lml_std_ = 0.0;
  std::uint64_t revision_ = 0;
};

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Default hyperparameters: moderate length scales on the unit box, unit
/// standardized variance for the high-fidelity component and a smaller one
/// for each discrepancy.
inline KernelHyperparams default_hyperparams(const DomainBox& domain, int num_components,
                                             double y_sd = 1.0) {
  KernelHyperparams h;
  h.components.resize(static_cast<std::size_t>(num_components));
  h.means = Eigen::VectorXd::Zero(num_components);
  const Eigen::VectorXd w = domain.width();
  for (int c = 0; c < num_components; ++c) {
    auto& comp = h.components[static_cast<std::size_t>(c)];
    comp.signal_variance = (c == 0 ? 1.0 : 0.25) * y_sd * y_sd;
    comp.length_scales = 0.3 * w;
  }
  h.jitter = 1e-10;
  return h;
}

/// Exact log marginal likelihood of the data at the given hyperparameters
/// (means taken as given, not re-estimated). Used as the improvement oracle
/// for fit().
inline double log_marginal_likelihood(const TrainingSet& data, const DomainBox& domain,
                                      const KernelHyperparams& h_raw) {
  h_raw.validate();
  auto s = detail::standardize(data, domain);
  KernelHyperparams h = detail::to_standardized(h_raw, domain, s.y_mean, s.y_sd);
  Eigen::MatrixXd K = detail::build_kernel(s.Xu, s.src, h);
  auto [L, j] = detail::cholesky_with_ladder(K, h.jitter);
  (void)j;
  Eigen::MatrixXd H = detail::mean_design(s.src, h.num_components());
  Eigen::VectorXd r = s.y_std - H * h.means;
  Eigen::VectorXd Lr = L.triangularView<Eigen::Lower>().solve(r);
  double logdet = 2.0 * L.diagonal().array().log().sum();
  double lml_std = -0.5 * Lr.squaredNorm() - 0.5 * logdet -
                   0.5 * static_cast<double>(s.y_std.size()) * std::log(2.0 * M_PI);
  return lml_std - static_cast<double>(data.size()) * std::log(s.y_sd);
}

/// Internal constructor used by fit() and checkpoint loading: build the
/// posterior at fixed raw-unit hyperparameters and a fixed output scaling.
inline MfGpPosterior make_posterior_fixed(const TrainingSet& data, const DomainBox& domain,
                                          const KernelHyperparams& h_raw, double y_mean,
                                          double y_sd) {
  MfGpPosterior g;
  g.domain_ = domain;
  g.data_ = data;
  g.y_mean_ = y_mean;
  g.y_sd_ = y_sd;
  g.h_raw_ = h_raw;
  g.h_std_ = detail::to_standardized(h_raw, domain, y_mean, y_sd);
  g.jitter_used_ = g.h_std_.jitter;
  g.rebuild_fixed();
  return g;
}

/// Fits the multifidelity GP: standardizes the data, then maximizes the log
/// marginal likelihood over kernel hyperparameters by multistart Nelder-Mead
/// in log space, profiling the constant component means in closed form at
/// every step. The init point is always one of the starts, so the returned
/// likelihood never falls below the likelihood at init.
inline MfGpPosterior fit(const TrainingSet& data, const DomainBox& domain,
                         const KernelHyperparams& init, const FitConfig& cfg = {}) {
  if (data.size() == 0) throw std::invalid_argument("fit: empty training set");
  if (data.count_source(0) == 0)
    throw std::invalid_argument("fit: need at least one high-fidelity observation");
  for (std::size_t i = 0; i < data.obs.size(); ++i)
    for (std::size_t j = i + 1; j < data.obs.size(); ++j)
      if (data.obs[i].source == data.obs[j].source &&
          (data.obs[i].z - data.obs[j].z).cwiseAbs().maxCoeff() <= TrainingSet::kDuplicateTol)
        throw std::invalid_argument("fit: duplicate (source, z) observation");
  init.validate();
  domain.validate();
  if (init.num_components() <= data.max_source())
    throw std::invalid_argument("fit: init hyperparams cover fewer sources than the data");

  auto s = detail::standardize(data, domain);
  const int ncomp = init.num_components();
  const Eigen::Index d = domain.dim();
  KernelHyperparams h0 = detail::to_standardized(init, domain, s.y_mean, s.y_sd);
  Eigen::MatrixXd H = detail::mean_design(s.src, ncomp);

  // theta layout: per component [log10 sv, log10 ell_1..d]
  const Eigen::Index dim = static_cast<Eigen::Index>(ncomp) * (1 + d);
  Eigen::VectorXd lo(dim), hi(dim);
  for (int c = 0; c < ncomp; ++c) {
    Eigen::Index off = static_cast<Eigen::Index>(c) * (1 + d);
    lo[off] = detail::kLogVarLo;
    hi[off] = detail::kLogVarHi;
    for (Eigen::Index j = 0; j < d; ++j) {
      lo[off + 1 + j] = detail::kLogEllLo;
      hi[off + 1 + j] = detail::kLogEllHi;
    }
  }

  auto pack = [&](const KernelHyperparams& h) {
    Eigen::VectorXd th(dim);
    for (int c = 0; c < ncomp; ++c) {
      Eigen::Index off = static_cast<Eigen::Index>(c) * (1 + d);
      const auto& comp = h.components[static_cast<std::size_t>(c)];
      th[off] = std::log10(std::max(comp.signal_variance, 1e-300));
      for (Eigen::Index j = 0; j < d; ++j) th[off + 1 + j] = std::log10(comp.length_scales[j]);
      th[off] = std::clamp(th[off], lo[off], hi[off]);
      for (Eigen::Index j = 0; j < d; ++j)
        th[off + 1 + j] = std::clamp(th[off + 1 + j], lo[off + 1 + j], hi[off + 1 + j]);
    }
    return th;
  };
  auto unpack = [&](const Eigen::VectorXd& th) {
    KernelHyperparams h = h0;
    for (int c = 0; c < ncomp; ++c) {
      Eigen::Index off = static_cast<Eigen::Index>(c) * (1 + d);
      auto& comp = h.components[static_cast<std::size_t>(c)];
      comp.signal_variance = std::pow(10.0, th[off]);
      comp.length_scales.resize(d);
      for (Eigen::Index j = 0; j < d; ++j) comp.length_scales[j] = std::pow(10.0, th[off + 1 + j]);
    }
    return h;
  };

  auto objective = [&](const Eigen::VectorXd& th) -> double {
    KernelHyperparams h = unpack(th);
    Eigen::MatrixXd K = detail::build_kernel(s.Xu, s.src, h);
    K.diagonal() *= (1.0 + h.jitter);
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return detail::gls_profile(Eigen::MatrixXd(llt.matrixL()), H, s.y_std).lml;
  };

  // Starts: the init point plus an LHS over the log-space box.
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(pack(h0));
  if (cfg.multistarts > 0) {
    DomainBox logbox(lo, hi);
    SampleSet lhs = latin_hypercube(logbox, cfg.multistarts, derive_seed(cfg.seed, 0x66697473ULL));
    for (Eigen::Index i = 0; i < lhs.size(); ++i) starts.push_back(lhs.row(i));
  }

  const int max_evals = cfg.max_evals_per_start > 0
                            ? cfg.max_evals_per_start
                            : static_cast<int>(40 * dim + 80);
  Eigen::VectorXd best_th = starts[0];
  double best_f = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < starts.size(); ++i) {
    auto res = detail::nelder_mead_max(objective, starts[i], lo, hi, max_evals, cfg.ftol);
    if (res.f > best_f) {
      best_f = res.f;
      best_th = res.x;
    }
  }

  KernelHyperparams h_best = unpack(best_th);
  {
    auto [L0, jitter0] = detail::cholesky_with_ladder(detail::build_kernel(s.Xu, s.src, h_best),
                                                      h_best.jitter);
    h_best.means = detail::gls_profile(L0, H, s.y_std).beta;
    h_best.jitter = jitter0;
  }
  // Canonicalize through the raw representation so a posterior rebuilt from
  // its public hyperparameters (e.g. a checkpoint) is bit-identical.
  KernelHyperparams h_raw = detail::to_raw(h_best, domain, s.y_mean, s.y_sd);
  return make_posterior_fixed(data, domain, h_raw, s.y_mean, s.y_sd);
}

inline MfGpPosterior fit(const TrainingSet& data, const DomainBox& domain,
                         const FitConfig& cfg = {}, int num_components = 0) {
  auto s = detail::standardize(data, domain);
  if (num_components <= 0) num_components = data.max_source() + 1;
  return fit(data, domain, default_hyperparams(domain, num_components, s.y_sd), cfg);
}

}  // namespace mfegra

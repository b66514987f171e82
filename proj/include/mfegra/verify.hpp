#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mfegra/acquisition.hpp"
#include "mfegra/distributions.hpp"
#include "mfegra/surrogate.hpp"

// Self-check suites that re-derive the closed-form quantities through
// independent routes: numerical quadrature for the expected feasibility,
// refits for the one-step lookahead variance, and double-loop Monte Carlo for
// the information gain. Exposed both to the test suites and the CLI.

namespace mfegra::verify {

// ---------------------------------------------------------------------------
// Adaptive quadrature oracle for the expected feasibility
// ---------------------------------------------------------------------------

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace detail

/// The feasibility expectation computed by adaptive quadrature of the band
/// integral, standardized to t = (y - mu)/sigma. Split at the |y| kink.
inline double eff_quadrature(double mu, double sigma, double eps, double tol = 1e-10) {
  if (eps <= 0.0) return 0.0;
  auto integrand = [&](double t) {
    double y = mu + sigma * t;
    return (eps - std::abs(y)) * norm_pdf(t);
  };
  double a = (-eps - mu) / sigma;
  double b = (eps - mu) / sigma;
  // Outside ~38 sigma the density underflows; clip for the quadrature.
  a = std::max(a, -38.0);
  b = std::min(b, 38.0);
  if (!(b > a)) return 0.0;
  double kink = -mu / sigma;
  double total = 0.0;
  if (kink > a && kink < b) {
    total = detail::integrate(integrand, a, kink, tol) + detail::integrate(integrand, kink, b, tol);
  } else {
    total = detail::integrate(integrand, a, b, tol);
  }
  return total;
}

struct EffCheckResult {
  int cases = 0;
  int failures = 0;
  double max_abs_err = 0.0;
  bool pass = false;
};

/// Compares the closed-form expected feasibility against quadrature on
/// `cases` random (mu, sigma, eps) triples with sigma spanning [1e-3, 1e3],
/// at tolerance 1e-8 * max(1, eps). The pinned unit case is always included.
inline EffCheckResult check_eff_closed_form(int cases = 200, std::uint64_t seed = 2024) {
  EffCheckResult r;
  std::mt19937_64 rng(seed);
  auto u01 = [&]() { return mfegra::detail::uniform01(rng); };
  for (int i = 0; i < cases; ++i) {
    double sigma, mu, eps;
    if (i == 0) {
      mu = 0.0;
      sigma = 1.0;
      eps = 2.0;
    } else {
      sigma = std::pow(10.0, -3.0 + 6.0 * u01());
      mu = (u01() * 12.0 - 6.0) * sigma;
      eps = u01() * 4.0 * sigma;
    }
    double closed = expected_feasibility({mu, sigma, eps});
    double quad = eff_quadrature(mu, sigma, eps, 1e-11 * std::max(1.0, eps));
    double err = std::abs(closed - quad);
    double tol = 1e-8 * std::max(1.0, eps);
    r.max_abs_err = std::max(r.max_abs_err, err / std::max(1.0, eps));
    if (err > tol) ++r.failures;
    ++r.cases;
  }
  r.pass = r.failures == 0;
  return r;
}

// ---------------------------------------------------------------------------
// Random multifidelity GPs for the oracle suites
// ---------------------------------------------------------------------------

/// Small bi-fidelity GP posterior with randomized data and hyperparameters,
/// built at fixed hyperparameters (no optimization) for identity checks.
inline MfGpPosterior random_mf_gp(std::uint64_t seed, int num_low_fidelity = 1,
                                  int points_per_source = 5, Eigen::Index dim = 2) {
  std::mt19937_64 rng(seed);
  auto u01 = [&]() { return mfegra::detail::uniform01(rng); };
  DomainBox box(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));

  TrainingSet ts;
  int ncomp = num_low_fidelity + 1;
  for (int s = 0; s < ncomp; ++s) {
    for (int i = 0; i < points_per_source; ++i) {
      Eigen::VectorXd z(dim);
      for (Eigen::Index d = 0; d < dim; ++d) z[d] = u01();
      double y = 2.0 * u01() - 1.0;
      if (ts.would_duplicate(s, z)) continue;
      ts.add(s, z, y);
    }
  }

  KernelHyperparams h;
  h.components.resize(static_cast<std::size_t>(ncomp));
  h.means = Eigen::VectorXd::Zero(ncomp);
  for (int c = 0; c < ncomp; ++c) {
    auto& comp = h.components[static_cast<std::size_t>(c)];
    comp.signal_variance = 0.5 + 1.5 * u01();
    comp.length_scales.resize(dim);
    for (Eigen::Index d = 0; d < dim; ++d) comp.length_scales[d] = 0.2 + 0.4 * u01();
    h.means[c] = 0.4 * (u01() - 0.5);
  }
  h.jitter = 1e-10;
  return make_posterior_fixed(ts, box, h, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Refit route for the lookahead variance
// ---------------------------------------------------------------------------

struct LookaheadCheckResult {
  int cases = 0;
  int failures = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Confirms that the closed-form lookahead variance equals the posterior
/// variance of a GP refit with one extra hypothetical observation, within
/// `rel_tol` relative, on random bi-fidelity cases.
inline LookaheadCheckResult check_lookahead_refit(int cases = 20, std::uint64_t seed = 99,
                                                  double rel_tol = 1e-6) {
  LookaheadCheckResult r;
  std::mt19937_64 rng(seed);
  auto u01 = [&]() { return mfegra::detail::uniform01(rng); };
  for (int i = 0; i < cases; ++i) {
    MfGpPosterior gp = random_mf_gp(derive_seed(seed, 0x6c6f6f6bULL, static_cast<std::uint64_t>(i)));
    const Eigen::Index dim = gp.domain().dim();
    Eigen::VectorXd z(dim), zn(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      z[d] = u01();
      zn[d] = u01();
    }
    int source = static_cast<int>(rng() % static_cast<std::uint64_t>(gp.num_sources()));

    double closed = gp.lookahead_variance(z, zn, source);
    // Any finite hypothetical value works: the variance is outcome-independent.
    double refit = gp.with_observation({source, zn}, 123.456).posterior_var({0, z});
    refit = std::max(refit, gp.variance_floor());
    double rel = std::abs(closed - refit) / std::max(refit, gp.variance_floor());
    r.max_rel_err = std::max(r.max_rel_err, rel);
    if (rel > rel_tol) ++r.failures;
    ++r.cases;
  }
  r.pass = r.failures == 0;
  return r;
}

// ---------------------------------------------------------------------------
// Double-loop Monte Carlo route for the information gain
// ---------------------------------------------------------------------------

struct IgSourceComparison {
  int source = 0;
  double closed_form = 0.0;
  double double_loop = 0.0;
  double std_error = 0.0;
  bool within_3se = false;
};

struct IgCheckResult {
  int cases = 0;
  int passed = 0;
  int required = 0;
  std::vector<IgSourceComparison> details;
  bool pass = false;
};

/// Per-source total gain via the explicit double loop: draw the hypothetical
/// outcome from the present predictive, refit, accumulate the per-point
/// Gaussian KL, and average over outcomes.
inline IgSourceComparison ig_double_loop(const MfGpPosterior& gp, const Eigen::VectorXd& z_next,
                                         int source, const Eigen::MatrixXd& zs, int outer_draws,
                                         std::uint64_t seed) {
  IgSourceComparison cmp;
  cmp.source = source;

  Eigen::VectorXd mu_p, var_p;
  gp.hf_mean_var(zs, mu_p, var_p);
  const double floor = gp.variance_floor();

  double mean_b = gp.posterior_mean({source, z_next});
  double var_b = std::max(gp.posterior_var({source, z_next}), 0.0);
  double sd_b = std::sqrt(var_b);

  std::mt19937_64 rng(seed);
  std::vector<double> sums;
  sums.reserve(static_cast<std::size_t>(outer_draws));
  for (int t = 0; t < outer_draws; ++t) {
    double y_f = mean_b + sd_b * norm_quantile(mfegra::detail::uniform01(rng));
    MfGpPosterior future = gp.with_observation({source, z_next}, y_f);
    Eigen::VectorXd mu_f, var_f;
    future.hf_mean_var(zs, mu_f, var_f);
    double total = 0.0;
    for (Eigen::Index i = 0; i < zs.rows(); ++i) {
      double vp = std::max(var_p[i], floor);
      double vf = std::max(var_f[i], floor);
      double dmu = mu_p[i] - mu_f[i];
      total += 0.5 * std::log(vf / vp) + (vp + dmu * dmu) / (2.0 * vf) - 0.5;
    }
    sums.push_back(total);
  }
  double mean = 0.0;
  for (double s : sums) mean += s;
  mean /= static_cast<double>(sums.size());
  double ss = 0.0;
  for (double s : sums) ss += (s - mean) * (s - mean);
  double se = std::sqrt(ss / (static_cast<double>(sums.size()) - 1.0) /
                        static_cast<double>(sums.size()));

  double closed = 0.0;
  for (Eigen::Index i = 0; i < zs.rows(); ++i)
    closed += kl_gain_term(gp, zs.row(i).transpose(), z_next, source);

  cmp.closed_form = closed;
  cmp.double_loop = mean;
  cmp.std_error = se;
  cmp.within_3se = std::abs(closed - mean) <= 3.0 * se + 1e-12;
  return cmp;
}

/// Compares the closed-form per-source gain with the double-loop estimate on
/// random bi-fidelity GPs. A case passes when every source agrees within
/// three standard errors; the suite passes when at least `required` do.
inline IgCheckResult check_information_gain(int gps = 10, int outer_draws = 200,
                                            std::uint64_t seed = 7717, int required = 9,
                                            Eigen::Index n_integration = 40) {
  IgCheckResult r;
  r.required = required;
  for (int g = 0; g < gps; ++g) {
    std::uint64_t case_seed = derive_seed(seed, 0x6967ULL, static_cast<std::uint64_t>(g));
    MfGpPosterior gp = random_mf_gp(case_seed, 1, 5);
    std::mt19937_64 rng(derive_seed(case_seed, 1));
    auto u01 = [&]() { return mfegra::detail::uniform01(rng); };
    const Eigen::Index dim = gp.domain().dim();
    Eigen::VectorXd z_next(dim);
    for (Eigen::Index d = 0; d < dim; ++d) z_next[d] = u01();
    Eigen::MatrixXd zs(n_integration, dim);
    for (Eigen::Index i = 0; i < n_integration; ++i)
      for (Eigen::Index d = 0; d < dim; ++d) zs(i, d) = u01();

    bool ok = true;
    for (int src = 0; src < gp.num_sources(); ++src) {
      auto cmp = ig_double_loop(gp, z_next, src, zs, outer_draws, derive_seed(case_seed, 2, static_cast<std::uint64_t>(src)));
      ok = ok && cmp.within_3se;
      r.details.push_back(cmp);
    }
    if (ok) ++r.passed;
    ++r.cases;
  }
  r.pass = r.passed >= required;
  return r;
}

}  // namespace mfegra::verify

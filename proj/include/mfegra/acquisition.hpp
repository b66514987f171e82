#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "mfegra/distributions.hpp"
#include "mfegra/errors.hpp"
#include "mfegra/optim.hpp"
#include "mfegra/surrogate.hpp"

namespace mfegra {

// ---------------------------------------------------------------------------
// Feasibility measures
// ---------------------------------------------------------------------------

/// Normal prediction at a point together with the half-width of the band
/// around the zero contour.
struct FeasibilityQuery {
  double mu = 0.0;
  double sigma = 1.0;
  double eps = 0.0;

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("FeasibilityQuery: sigma must be > 0");
    if (!(eps >= 0.0)) throw std::invalid_argument("FeasibilityQuery: eps must be >= 0");
  }
};

/// Expected margin by which the prediction falls inside the +/-eps band
/// around the zero contour; the closed form of the truncated expectation
/// E[eps - min(|y|, eps)]. Always in [0, eps].
inline double expected_feasibility(const FeasibilityQuery& q) {
  q.validate();
  if (q.eps == 0.0) return 0.0;
  const double inv = 1.0 / q.sigma;
  const double z0 = -q.mu * inv;
  const double zm = (-q.eps - q.mu) * inv;
  const double zp = (q.eps - q.mu) * inv;
  double v = q.mu * (2.0 * norm_cdf(z0) - norm_cdf(zm) - norm_cdf(zp)) -
             q.sigma * (2.0 * norm_pdf(z0) - norm_pdf(zm) - norm_pdf(zp)) +
             q.eps * (norm_cdf(zp) - norm_cdf(zm));
  return std::clamp(v, 0.0, q.eps);
}

/// Probability that the prediction lies inside the +/-eps band.
inline double probability_of_feasibility(const FeasibilityQuery& q) {
  q.validate();
  const double inv = 1.0 / q.sigma;
  double v = norm_cdf((q.eps - q.mu) * inv) - norm_cdf((-q.eps - q.mu) * inv);
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class WeightingMode { none, eff, pf };

enum class SearchMode { continuous, candidate_restricted };

struct AcquisitionConfig {
  WeightingMode weighting = WeightingMode::eff;
  double eps_multiplier = 2.0;       // eps(z) = multiplier * sigma(0,z)
  Eigen::Index ig_candidates = 2000; // size of the information-gain set, drawn from pi

  // Continuous location search: space-filling scan, coordinate pattern
  // search, then multistart local refinement.
  Eigen::Index scan_points = 512;
  int pattern_iterations = 200;
  int refine_starts = 10;
  int refine_max_evals = 150;
};

namespace detail {

constexpr double kKlTermCap = 1e3;

/// One KL lookahead term from present variance and mean-shift variance, in
/// consistent units. `capped` flips when the future variance sits at the
/// floor while information remains.
inline double kl_term_core(double var_present, double sigma_bar2, double floor, bool* capped) {
  if (var_present <= floor || sigma_bar2 <= 0.0) return 0.0;
  double var_future = var_present - sigma_bar2;
  if (var_future <= floor) {
    var_future = floor;
    double d = 0.5 * std::log(var_future / var_present) +
               (var_present + sigma_bar2) / (2.0 * var_future) - 0.5;
    if (d > kKlTermCap) {
      if (capped) *capped = true;
      return kKlTermCap;
    }
    return d;
  }
  double r = sigma_bar2 / var_present;
  return 0.5 * (std::log1p(-r) + 2.0 * r / (1.0 - r));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Candidate set for the information-gain sum
// ---------------------------------------------------------------------------

/// Fixed set of realizations where the lookahead gain is integrated, with the
/// present-GP statistics cached per posterior revision.
struct CandidateSetZ {
  SampleSet samples;
  MfGpPosterior::HfQueryCache cache;

  explicit CandidateSetZ(SampleSet s = {}) : samples(std::move(s)) {}

  Eigen::Index size() const { return samples.size(); }

  void refresh(const MfGpPosterior& gp) {
    if (cache.revision != gp.revision()) cache = gp.make_hf_cache(samples.points);
  }
};

// ---------------------------------------------------------------------------
// Location stage
// ---------------------------------------------------------------------------

struct LocationChoice {
  Eigen::VectorXd z;
  double eff = 0.0;
  Eigen::Index candidate_index = -1;  // set in candidate-restricted mode
};

/// Expected feasibility of the high-fidelity prediction at z with the band
/// half-width tied to the prediction spread. Points whose variance has
/// collapsed to the jitter resolution floor count as resolved (zero).
inline double expected_feasibility_at(const MfGpPosterior& gp, const Eigen::VectorXd& z,
                                      double eps_multiplier) {
  auto [mu, var] = gp.hf_stats(z);
  if (var <= gp.resolution_floor()) return 0.0;
  double sigma = std::sqrt(var);
  return expected_feasibility({mu, sigma, eps_multiplier * sigma});
}

namespace detail {

/// EFF from precomputed batch statistics, with the same resolution cut.
inline double eff_from_stats(double mu, double var, double eps_multiplier, double floor) {
  if (var <= floor) return 0.0;
  double sigma = std::sqrt(var);
  return expected_feasibility({mu, sigma, eps_multiplier * sigma});
}

}  // namespace detail

/// Picks the next sampling location by maximizing expected feasibility with
/// eps(z) tied to the prediction spread. Continuous mode runs a seeded
/// space-filling scan, coordinate pattern search from the best scan point,
/// then multistart local refinement; candidate mode is the exact argmax over
/// the candidate rows (ties to the lowest index).
inline LocationChoice select_location(const MfGpPosterior& gp, const DomainBox& domain,
                                      SearchMode mode, const SampleSet* candidates,
                                      const AcquisitionConfig& cfg, std::uint64_t seed) {
  const double floor = gp.resolution_floor();
  if (mode == SearchMode::candidate_restricted) {
    if (candidates == nullptr || candidates->size() == 0)
      throw ConfigError("select_location: candidate-restricted mode needs a nonempty candidate set");
    Eigen::VectorXd mu, var;
    gp.hf_mean_var(candidates->points, mu, var);
    LocationChoice best;
    best.candidate_index = 0;
    best.eff = -1.0;
    for (Eigen::Index i = 0; i < candidates->size(); ++i) {
      double e = detail::eff_from_stats(mu[i], var[i], cfg.eps_multiplier, floor);
      if (e > best.eff) {
        best.eff = e;
        best.candidate_index = i;
      }
    }
    best.z = candidates->row(best.candidate_index);
    best.eff = std::max(best.eff, 0.0);
    return best;
  }

  auto objective = [&](const Eigen::VectorXd& z) {
    return expected_feasibility_at(gp, z, cfg.eps_multiplier);
  };

  // Space-filling scan (batched) seeds the pattern search.
  SampleSet scan = latin_hypercube(domain, cfg.scan_points, derive_seed(seed, 0x7363616eULL));
  Eigen::VectorXd mu, var;
  gp.hf_mean_var(scan.points, mu, var);
  Eigen::Index best_i = 0;
  double best_scan = -1.0;
  for (Eigen::Index i = 0; i < scan.size(); ++i) {
    double e = detail::eff_from_stats(mu[i], var[i], cfg.eps_multiplier, floor);
    if (e > best_scan) {
      best_scan = e;
      best_i = i;
    }
  }

  std::vector<Eigen::VectorXd> trail;
  auto ps = detail::pattern_search_max(objective, scan.row(best_i), domain.lower, domain.upper,
                                       cfg.pattern_iterations, &trail);

  // Refinement starts: the best pattern incumbents, then fresh LHS points.
  std::vector<Eigen::VectorXd> starts;
  for (auto it = trail.rbegin(); it != trail.rend() && starts.size() < static_cast<std::size_t>(cfg.refine_starts) / 2; ++it)
    starts.push_back(*it);
  SampleSet extra = latin_hypercube(domain, std::max<Eigen::Index>(1, cfg.refine_starts), derive_seed(seed, 0x726566696eULL));
  for (Eigen::Index i = 0; i < extra.size() && starts.size() < static_cast<std::size_t>(cfg.refine_starts); ++i)
    starts.push_back(extra.row(i));

  Eigen::VectorXd best_z = ps.x;
  double best_f = ps.f;
  for (const auto& s : starts) {
    auto r = detail::nelder_mead_max(objective, s, domain.lower, domain.upper, cfg.refine_max_evals);
    if (r.f > best_f) {
      best_f = r.f;
      best_z = r.x;
    }
  }
  return {best_z, std::max(best_f, 0.0), -1};
}

// ---------------------------------------------------------------------------
// Source stage
// ---------------------------------------------------------------------------

/// Expected KL divergence between the present high-fidelity prediction at z
/// and the hypothetical future one after evaluating `source` at z_next,
/// marginalized over the simulated outcome.
inline double kl_gain_term(const MfGpPosterior& gp, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& z_next, int source) {
  double var0 = gp.posterior_var({0, z});
  double sb2 = gp.future_variance_reduction(z, z_next, source).value_or(0.0);
  return detail::kl_term_core(var0, sb2, gp.variance_floor(), nullptr);
}

/// Per-source summary of the weighted lookahead gain over the candidate set.
struct SourceGain {
  int source = 0;
  double raw_gain = 0.0;    // sum over Z of w(z) * D(z | z_next, source)
  double cost = 1.0;
  double normalized = 0.0;  // raw_gain / cost
  int capped_terms = 0;
};

/// Cost-normalized argmax; ties resolve toward the smaller source index
/// (higher fidelity).
inline int pick_best_source(const std::vector<SourceGain>& gains) {
  if (gains.empty()) throw ConfigError("pick_best_source: no gains");
  int best = 0;
  for (std::size_t l = 1; l < gains.size(); ++l)
    if (gains[l].normalized > gains[static_cast<std::size_t>(best)].normalized)
      best = static_cast<int>(l);
  return best;
}

/// Selects the information source for the chosen location: the exact argmax
/// over sources of the cost-normalized, weighted lookahead gain summed over
/// the fixed candidate set. Weights come from the present GP with eps tied to
/// the present prediction spread.
inline std::pair<int, std::vector<SourceGain>> select_source(const MfGpPosterior& gp,
                                                             const Eigen::VectorXd& z_next,
                                                             CandidateSetZ& Z,
                                                             const Eigen::VectorXd& costs,
                                                             WeightingMode mode,
                                                             double eps_multiplier = 2.0) {
  const int nsrc = gp.num_sources();
  if (costs.size() != nsrc) throw ConfigError("select_source: costs size mismatch");
  for (Eigen::Index i = 0; i < costs.size(); ++i)
    if (!(costs[i] > 0.0)) throw ConfigError("select_source: costs must be > 0");
  if (Z.size() == 0) throw ConfigError("select_source: empty candidate set");

  Z.refresh(gp);
  const Eigen::Index m = Z.size();
  const double floor = gp.variance_floor();
  const double resolved = gp.resolution_floor();

  Eigen::VectorXd w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    switch (mode) {
      case WeightingMode::none:
        w[i] = 1.0;
        break;
      case WeightingMode::eff:
        w[i] = detail::eff_from_stats(Z.cache.mu[i], Z.cache.var[i], eps_multiplier, resolved);
        break;
      case WeightingMode::pf: {
        double var = Z.cache.var[i];
        if (var <= resolved) {
          w[i] = 0.0;
        } else {
          double sigma = std::sqrt(var);
          w[i] = probability_of_feasibility({Z.cache.mu[i], sigma, eps_multiplier * sigma});
        }
        break;
      }
    }
  }

  std::vector<SourceGain> gains(static_cast<std::size_t>(nsrc));
  for (int l = 0; l < nsrc; ++l) {
    auto& g = gains[static_cast<std::size_t>(l)];
    g.source = l;
    g.cost = costs[l];
    auto reduction = gp.lookahead_reduction_batch(Z.cache, z_next, l);
    if (reduction) {
      double sum = 0.0;  // fixed-order reduction keeps runs reproducible
      for (Eigen::Index i = 0; i < m; ++i) {
        bool capped = false;
        sum += w[i] * detail::kl_term_core(Z.cache.var[i], (*reduction)[i], floor, &capped);
        if (capped) ++g.capped_terms;
      }
      g.raw_gain = sum;
    }
    g.normalized = g.raw_gain / g.cost;
  }
  return {pick_best_source(gains), gains};
}

}  // namespace mfegra

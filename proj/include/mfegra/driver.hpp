#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mfegra/acquisition.hpp"
#include "mfegra/distributions.hpp"
#include "mfegra/errors.hpp"
#include "mfegra/reliability.hpp"
#include "mfegra/surrogate.hpp"

namespace mfegra {

// ---------------------------------------------------------------------------
// Problem and run configuration
// ---------------------------------------------------------------------------

/// The reliability problem: k+1 models of the limit state (index 0 is the
/// high-fidelity one), per-source evaluation costs in units of one
/// high-fidelity solve, the input domain and distributions, and the failure
/// threshold. The limit state is shifted so that failure means g > 0.
struct ProblemDefinition {
  std::vector<std::function<double(const Eigen::VectorXd&)>> evaluators;
  Eigen::VectorXd costs;
  DomainBox domain;
  std::vector<RandomVariableSpec> input_specs;
  double failure_threshold = 0.0;

  int num_sources() const { return static_cast<int>(evaluators.size()); }

  void validate() const {
    if (evaluators.empty()) throw ConfigError("problem: needs at least the high-fidelity model");
    if (costs.size() != static_cast<Eigen::Index>(evaluators.size()))
      throw ConfigError("problem: costs/evaluators size mismatch");
    for (Eigen::Index i = 0; i < costs.size(); ++i)
      if (!(costs[i] > 0.0)) throw ConfigError("problem: costs must be > 0");
    if (std::abs(costs[0] - 1.0) > 1e-12)
      throw ConfigError("problem: normalize costs so the high-fidelity model costs 1");
    domain.validate();
    if (input_specs.size() != static_cast<std::size_t>(domain.dim()))
      throw ConfigError("problem: input_specs/domain dim mismatch");
    for (const auto& s : input_specs) s.validate();
  }

  /// Shifted limit state for one source; may throw or return non-finite
  /// values, which the driver maps to the failed-evaluation sentinel.
  double limit_state(int source, const Eigen::VectorXd& z) const {
    return evaluators[static_cast<std::size_t>(source)](z) - failure_threshold;
  }

  /// The same problem reduced to the high-fidelity model only.
  ProblemDefinition restricted_to_hf() const {
    ProblemDefinition p;
    p.evaluators = {evaluators[0]};
    p.costs = Eigen::VectorXd::Ones(1);
    p.domain = domain;
    p.input_specs = input_specs;
    p.failure_threshold = failure_threshold;
    return p;
  }
};

/// Seed stream purposes derived from the run master seed.
namespace seed_purpose {
constexpr std::uint64_t kDoe = 1;
constexpr std::uint64_t kIgSet = 2;
constexpr std::uint64_t kPfSet = 3;
constexpr std::uint64_t kFit = 4;
constexpr std::uint64_t kLocation = 5;
}  // namespace seed_purpose

struct RunConfig {
  int doe_size = 10;
  std::vector<int> doe_sources;  // empty: evaluate every model at the initial design
  double eff_threshold = 1e-10;
  int max_iterations = 1000;
  double max_cost = std::numeric_limits<double>::infinity();
  SearchMode mode = SearchMode::continuous;
  AcquisitionConfig acquisition;
  FitConfig fit;
  std::uint64_t master_seed = 0;
  double failed_eval_sentinel = 1e6;
  Eigen::Index pf_snapshot_samples = 0;  // draw an own pi set when no shared set is passed

  void validate() const {
    if (doe_size < 1) throw ConfigError("config: doe_size must be >= 1");
    if (!doe_sources.empty() &&
        std::find(doe_sources.begin(), doe_sources.end(), 0) == doe_sources.end())
      throw ConfigError("config: the initial design must include the high-fidelity model");
    if (!(eff_threshold > 0.0)) throw ConfigError("config: eff_threshold must be > 0");
    if (max_iterations < 0) throw ConfigError("config: max_iterations must be >= 0");
    if (!(max_cost > 0.0)) throw ConfigError("config: max_cost must be > 0");
    if (!(failed_eval_sentinel > 0.0) || !std::isfinite(failed_eval_sentinel))
      throw ConfigError("config: sentinel must be a finite positive value");
    if (acquisition.ig_candidates < 1) throw ConfigError("config: ig_candidates must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Run history
// ---------------------------------------------------------------------------

enum class StopReason { running, eff_threshold, iteration_budget, cost_budget };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::running: return "running";
    case StopReason::eff_threshold: return "eff_threshold";
    case StopReason::iteration_budget: return "iteration_budget";
    case StopReason::cost_budget: return "cost_budget";
  }
  return "?";
}

struct Evaluation {
  int source = 0;
  Eigen::VectorXd z;
  double y = 0.0;  // shifted limit state value, or the sentinel on failure
  double cost = 0.0;
  bool failed = false;
};

/// One record per driver step. Iteration 0 is the initial design; a record
/// with source == -1 and no evaluations is the final stopping probe.
struct IterationRecord {
  int iteration = 0;
  Eigen::VectorXd z_next;
  int source = -1;
  double max_eff = std::numeric_limits<double>::quiet_NaN();
  std::vector<SourceGain> gains;
  std::vector<Evaluation> evaluations;
  double cumulative_cost = 0.0;
  std::optional<FailureEstimate> pf_snapshot;
};

struct RunHistory {
  std::vector<IterationRecord> records;
  StopReason stop = StopReason::running;

  double final_cost() const { return records.empty() ? 0.0 : records.back().cumulative_cost; }

  int count_evaluations(int source) const {
    int n = 0;
    for (const auto& r : records)
      for (const auto& e : r.evaluations)
        if (e.source == source) ++n;
    return n;
  }
};

struct RunOutput {
  MfGpPosterior gp;
  RunHistory history;
};

/// Continuation state for resuming an interrupted run (see checkpoint.hpp).
/// The history carries only what the caller wants prepended; the cost ledger
/// continues from cumulative_cost.
struct ResumeState {
  TrainingSet data;
  KernelHyperparams hyperparams;
  double y_mean = 0.0;
  double y_sd = 1.0;
  int next_iteration = 1;
  double cumulative_cost = 0.0;
  RunHistory history;
};

// ---------------------------------------------------------------------------
// The adaptive sampling loop
// ---------------------------------------------------------------------------

namespace detail {

inline Evaluation evaluate_model(const ProblemDefinition& problem, int source,
                                 const Eigen::VectorXd& z, double sentinel) {
  Evaluation e;
  e.source = source;
  e.z = z;
  e.cost = problem.costs[source];
  double y;
  bool ok = true;
  try {
    y = problem.limit_state(source, z);
    ok = std::isfinite(y);
  } catch (...) {
    ok = false;
  }
  e.failed = !ok;
  e.y = ok ? y : sentinel;
  return e;
}

inline std::optional<FailureEstimate> pf_snapshot(const MfGpPosterior& gp,
                                                  const SampleSet* pf_set) {
  if (pf_set == nullptr || pf_set->size() == 0) return std::nullopt;
  return estimate_pf_values(gp.hf_mean(pf_set->points));
}

}  // namespace detail

/// Runs the two-stage adaptive refinement: an initial Latin hypercube design
/// evaluated on every model, then per iteration a location chosen by maximum
/// expected feasibility and an information source chosen by cost-normalized
/// weighted lookahead gain. Selecting the high-fidelity source evaluates all
/// models at the new point and re-optimizes the hyperparameters; any other
/// source adds a single observation at fixed hyperparameters. Stops when the
/// maximum expected feasibility falls below the threshold (checked before the
/// budgets) or a budget runs out.
///
/// `shared_pf` supplies the Monte Carlo set used for per-iteration failure
/// probability snapshots; surrogate-only snapshot evaluations never enter the
/// cost ledger. `candidates` restricts the location search when the config
/// asks for candidate-restricted mode (defaults to the shared pf set).
inline RunOutput run_mfegra(const ProblemDefinition& problem, const RunConfig& config,
                            const SampleSet* shared_pf = nullptr,
                            const SampleSet* candidates = nullptr,
                            const std::function<void(const MfGpPosterior&, const RunHistory&, int)>&
                                on_iteration = {},
                            const ResumeState* resume = nullptr) {
  problem.validate();
  config.validate();
  const int nsrc = problem.num_sources();
  const std::uint64_t master = config.master_seed;

  SampleSet own_pf;
  const SampleSet* pf_set = shared_pf;
  if (pf_set == nullptr && config.pf_snapshot_samples > 0) {
    own_pf = draw_mc(problem.input_specs, config.pf_snapshot_samples,
                     derive_seed(master, seed_purpose::kPfSet));
    pf_set = &own_pf;
  }

  const SampleSet* location_candidates = candidates != nullptr ? candidates : pf_set;
  if (config.mode == SearchMode::candidate_restricted &&
      (location_candidates == nullptr || location_candidates->size() == 0))
    throw ConfigError("run: candidate-restricted mode needs a candidate set");

  RunHistory history;
  TrainingSet data;
  MfGpPosterior gp;
  double cum_cost = 0.0;
  int start_iter = 1;

  if (resume == nullptr) {
    // Initial design: every model at every point unless the config restricts
    // the design sources.
    std::vector<int> doe_sources = config.doe_sources;
    if (doe_sources.empty())
      for (int l = 0; l < nsrc; ++l) doe_sources.push_back(l);
    for (int l : doe_sources)
      if (l < 0 || l >= nsrc) throw ConfigError("config: doe source index out of range");

    SampleSet doe = latin_hypercube(problem.domain, config.doe_size,
                                    derive_seed(master, seed_purpose::kDoe));
    IterationRecord rec0;
    rec0.iteration = 0;
    for (Eigen::Index i = 0; i < doe.size(); ++i) {
      for (int l : doe_sources) {
        Evaluation e =
            detail::evaluate_model(problem, l, doe.row(i), config.failed_eval_sentinel);
        cum_cost += e.cost;
        if (!data.would_duplicate(e.source, e.z)) data.add(e.source, e.z, e.y);
        rec0.evaluations.push_back(std::move(e));
      }
    }
    rec0.cumulative_cost = cum_cost;

    FitConfig fit_cfg = config.fit;
    fit_cfg.seed = derive_seed(master, seed_purpose::kFit, 0);
    gp = fit(data, problem.domain, fit_cfg, nsrc);

    rec0.pf_snapshot = detail::pf_snapshot(gp, pf_set);
    history.records.push_back(std::move(rec0));
    if (on_iteration) on_iteration(gp, history, 0);
  } else {
    data = resume->data;
    history = resume->history;
    cum_cost = resume->cumulative_cost;
    start_iter = resume->next_iteration;
    gp = make_posterior_fixed(data, problem.domain, resume->hyperparams, resume->y_mean,
                              resume->y_sd);
  }

  CandidateSetZ ig_set;
  if (nsrc > 1)
    ig_set = CandidateSetZ(draw_mc(problem.input_specs, config.acquisition.ig_candidates,
                                   derive_seed(master, seed_purpose::kIgSet)));

  history.stop = StopReason::running;
  for (int iter = start_iter; iter <= config.max_iterations; ++iter) {
    LocationChoice loc =
        select_location(gp, problem.domain, config.mode, location_candidates,
                        config.acquisition, derive_seed(master, seed_purpose::kLocation,
                                                        static_cast<std::uint64_t>(iter)));

    // Threshold first, then the cost budget, per the stopping tie rule.
    if (loc.eff < config.eff_threshold || cum_cost >= config.max_cost) {
      IterationRecord probe;
      probe.iteration = iter;
      probe.z_next = loc.z;
      probe.max_eff = loc.eff;
      probe.cumulative_cost = cum_cost;
      history.records.push_back(std::move(probe));
      history.stop = loc.eff < config.eff_threshold ? StopReason::eff_threshold
                                                    : StopReason::cost_budget;
      break;
    }

    IterationRecord rec;
    rec.iteration = iter;
    rec.z_next = loc.z;
    rec.max_eff = loc.eff;

    int chosen = 0;
    if (nsrc > 1) {
      auto [src, gains] = select_source(gp, loc.z, ig_set, problem.costs,
                                        config.acquisition.weighting,
                                        config.acquisition.eps_multiplier);
      chosen = src;
      rec.gains = std::move(gains);
    } else {
      rec.gains = {SourceGain{0, 0.0, problem.costs[0], 0.0, 0}};
    }
    rec.source = chosen;

    // High-fidelity selection evaluates every model at the new point.
    std::vector<int> to_evaluate;
    if (chosen == 0) {
      for (int l = 0; l < nsrc; ++l) to_evaluate.push_back(l);
    } else {
      to_evaluate.push_back(chosen);
    }

    std::vector<Observation> added;
    for (int l : to_evaluate) {
      Evaluation e = detail::evaluate_model(problem, l, loc.z, config.failed_eval_sentinel);
      cum_cost += e.cost;
      if (!data.would_duplicate(e.source, e.z)) {
        data.add(e.source, e.z, e.y);
        added.push_back({e.source, e.z, e.y});
      }
      rec.evaluations.push_back(std::move(e));
    }
    rec.cumulative_cost = cum_cost;

    if (chosen == 0) {
      FitConfig fit_cfg = config.fit;
      fit_cfg.seed = derive_seed(master, seed_purpose::kFit, static_cast<std::uint64_t>(iter));
      gp = fit(data, problem.domain, gp.hyperparams(), fit_cfg);
    } else {
      for (const auto& o : added) gp = gp.with_observation({o.source, o.z}, o.y);
    }

    rec.pf_snapshot = detail::pf_snapshot(gp, pf_set);
    history.records.push_back(std::move(rec));
    if (on_iteration) on_iteration(gp, history, iter);
  }

  if (history.stop == StopReason::running) history.stop = StopReason::iteration_budget;
  return {std::move(gp), std::move(history)};
}

/// Single-fidelity baseline: the same loop restricted to the high-fidelity
/// model, so the source stage degenerates and every iteration costs one
/// high-fidelity solve.
inline RunOutput run_egra(const ProblemDefinition& problem, const RunConfig& config,
                          const SampleSet* shared_pf = nullptr,
                          const SampleSet* candidates = nullptr,
                          const std::function<void(const MfGpPosterior&, const RunHistory&, int)>&
                              on_iteration = {},
                          const ResumeState* resume = nullptr) {
  return run_mfegra(problem.restricted_to_hf(), config, shared_pf, candidates, on_iteration,
                    resume);
}

}  // namespace mfegra

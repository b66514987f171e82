#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "mfegra/driver.hpp"

namespace mfegra::bench {

// ---------------------------------------------------------------------------
// Analytic multimodal benchmark
// ---------------------------------------------------------------------------

/// Three-fidelity analytic limit state on [-4,7] x [-3,8]; the low-fidelity
/// models add smooth sinusoidal discrepancies to the high-fidelity one.
inline double eval_analytic(int source, const Eigen::VectorXd& z) {
  if (source < 0 || source > 2) throw ConfigError("eval_analytic: source must be in {0,1,2}");
  if (z.size() != 2) throw ConfigError("eval_analytic: expects 2-D input");
  const double z1 = z[0], z2 = z[1];
  const double g0 = (z1 * z1 + 4.0) * (z2 - 1.0) / 20.0 - std::sin(2.5 * z1) - 2.0;
  if (source == 0) return g0;
  if (source == 1) return g0 + std::sin(5.0 * z1 / 22.0 + 5.0 * z2 / 44.0 + 1.25);
  return g0 + 3.0 * std::sin(5.0 * z1 / 11.0 + 5.0 * z2 / 11.0 + 35.0 / 11.0);
}

inline ProblemDefinition analytic_problem() {
  ProblemDefinition p;
  for (int l = 0; l < 3; ++l)
    p.evaluators.push_back([l](const Eigen::VectorXd& z) { return eval_analytic(l, z); });
  p.costs = (Eigen::VectorXd(3) << 1.0, 0.01, 0.001).finished();
  p.domain = DomainBox((Eigen::VectorXd(2) << -4.0, -3.0).finished(),
                       (Eigen::VectorXd(2) << 7.0, 8.0).finished());
  p.input_specs = {RandomVariableSpec::Uniform(-4.0, 7.0), RandomVariableSpec::Uniform(-3.0, 8.0)};
  return p;
}

// ---------------------------------------------------------------------------
// Study specification
// ---------------------------------------------------------------------------

enum class AlgorithmKind { mfegra, egra };

struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::mfegra;
  WeightingMode weighting = WeightingMode::eff;  // source-stage weights (mfegra only)

  std::string label() const {
    if (kind == AlgorithmKind::egra) return "egra";
    switch (weighting) {
      case WeightingMode::none: return "mfegra-none";
      case WeightingMode::eff: return "mfegra-eff";
      case WeightingMode::pf: return "mfegra-pf";
    }
    return "mfegra";
  }
};

/// Study seed purposes, derived from the study seed.
namespace study_seed {
constexpr std::uint64_t kPfSet = 11;
constexpr std::uint64_t kReplication = 12;
}  // namespace study_seed

struct StudySpec {
  ProblemDefinition problem = analytic_problem();
  int replications = 10;
  RunConfig config;  // template; master seed is derived per replication
  std::vector<AlgorithmSpec> algorithms = {{AlgorithmKind::mfegra, WeightingMode::eff},
                                           {AlgorithmKind::egra, WeightingMode::eff}};
  Eigen::Index pf_samples = 100000;  // shared pi set: snapshots, reference, candidates
  std::uint64_t seed = 0;
  std::string out_dir;  // empty: no CSV artifacts
  int workers = 0;      // 0: hardware concurrency

  void validate() const {
    if (replications < 1) throw ConfigError("study: replications must be >= 1");
    if (algorithms.empty()) throw ConfigError("study: algorithm list must be nonempty");
    if (pf_samples < 1) throw ConfigError("study: pf_samples must be >= 1");
    problem.validate();
    config.validate();
  }
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ReplicationResult {
  int replication = 0;
  bool failed = false;
  std::string error;
  RunHistory history;
  MfGpPosterior final_gp;
  std::vector<std::pair<double, double>> curve;  // (cumulative cost, relative error)
};

struct AlgorithmResult {
  AlgorithmSpec spec;
  std::vector<ReplicationResult> reps;
  int excluded = 0;

  std::vector<double> grid;  // union of recorded costs, carry-forward aligned
  std::vector<double> err_p25, err_median, err_p75;
  std::map<double, double> median_cost_to_threshold;  // threshold -> median crossing cost
};

struct ConvergenceReport {
  std::vector<AlgorithmResult> algorithms;
  double reference_pf = 0.0;
  std::uint64_t sample_hash = 0;
  Eigen::Index pf_samples = 0;

  const AlgorithmResult* find(const std::string& label) const {
    for (const auto& a : algorithms)
      if (a.spec.label() == label) return &a;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Curve utilities
// ---------------------------------------------------------------------------

/// (cost, relative error) staircase of a run against a fixed reference.
inline std::vector<std::pair<double, double>> error_curve(const RunHistory& history,
                                                          double reference_pf) {
  std::vector<std::pair<double, double>> curve;
  for (const auto& r : history.records)
    if (r.pf_snapshot)
      curve.push_back({r.cumulative_cost, relative_error(r.pf_snapshot->p_hat, reference_pf)});
  return curve;
}

/// Carry-forward evaluation of a staircase at an arbitrary cost.
inline double curve_value_at(const std::vector<std::pair<double, double>>& curve, double cost) {
  if (curve.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = curve.front().second;
  for (const auto& [c, e] : curve) {
    if (c > cost) break;
    v = e;
  }
  return v;
}

/// Cost of the last crossing below the threshold, linearly interpolated
/// between the bracketing records. Infinity when the curve never settles
/// below; the first recorded cost when it never rises above.
inline double last_crossing_cost(const std::vector<std::pair<double, double>>& curve,
                                 double threshold) {
  if (curve.empty()) return std::numeric_limits<double>::infinity();
  int last_above = -1;
  for (int i = 0; i < static_cast<int>(curve.size()); ++i)
    if (curve[static_cast<std::size_t>(i)].second >= threshold) last_above = i;
  if (last_above < 0) return curve.front().first;
  if (last_above + 1 >= static_cast<int>(curve.size()))
    return std::numeric_limits<double>::infinity();
  auto [c0, e0] = curve[static_cast<std::size_t>(last_above)];
  auto [c1, e1] = curve[static_cast<std::size_t>(last_above + 1)];
  if (!(e0 > e1)) return c1;
  return c0 + (c1 - c0) * (e0 - threshold) / (e0 - e1);
}

/// Linearly interpolated quantile (the common type-7 convention).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  double h = q * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

namespace detail {

inline void aggregate(AlgorithmResult& a, const std::vector<double>& thresholds) {
  std::vector<const ReplicationResult*> ok;
  for (const auto& r : a.reps)
    if (!r.failed && !r.curve.empty()) ok.push_back(&r);
  a.excluded = static_cast<int>(a.reps.size() - ok.size());
  if (ok.empty()) return;

  std::vector<double> grid;
  for (const auto* r : ok)
    for (const auto& [c, e] : r->curve) grid.push_back(c);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double x, double y) { return std::abs(x - y) < 1e-12; }),
             grid.end());
  a.grid = grid;

  a.err_p25.resize(grid.size());
  a.err_median.resize(grid.size());
  a.err_p75.resize(grid.size());
  std::vector<double> vals(ok.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t r = 0; r < ok.size(); ++r) vals[r] = curve_value_at(ok[r]->curve, grid[i]);
    a.err_p25[i] = quantile(vals, 0.25);
    a.err_median[i] = quantile(vals, 0.50);
    a.err_p75[i] = quantile(vals, 0.75);
  }

  for (double t : thresholds) {
    std::vector<double> crossings;
    for (const auto* r : ok) crossings.push_back(last_crossing_cost(r->curve, t));
    a.median_cost_to_threshold[t] = quantile(crossings, 0.50);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(12);
  return out;
}

}  // namespace detail

/// Per-iteration raw history of one algorithm's replications.
inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<ReplicationResult>& reps, int num_sources,
                              Eigen::Index dim, double reference_pf) {
  auto out = detail::open_csv(path);
  out << "replication,iteration";
  for (Eigen::Index d = 0; d < dim; ++d) out << ",z" << d;
  out << ",source,max_eff";
  for (int l = 0; l < num_sources; ++l) out << ",gain_src" << l;
  out << ",evals_this_iter,cum_cost,pf_hat,rel_err\n";
  for (const auto& rep : reps) {
    if (rep.failed) continue;
    for (const auto& r : rep.history.records) {
      out << rep.replication << "," << r.iteration;
      for (Eigen::Index d = 0; d < dim; ++d)
        out << "," << (r.z_next.size() > d ? r.z_next[d] : std::numeric_limits<double>::quiet_NaN());
      out << "," << r.source << "," << r.max_eff;
      for (int l = 0; l < num_sources; ++l)
        out << ","
            << (l < static_cast<int>(r.gains.size()) ? r.gains[static_cast<std::size_t>(l)].normalized
                                                     : std::numeric_limits<double>::quiet_NaN());
      out << "," << r.evaluations.size() << "," << r.cumulative_cost;
      if (r.pf_snapshot && reference_pf > 0.0)
        out << "," << r.pf_snapshot->p_hat << ","
            << relative_error(r.pf_snapshot->p_hat, reference_pf);
      else if (r.pf_snapshot)
        out << "," << r.pf_snapshot->p_hat << ",nan";
      else
        out << ",nan,nan";
      out << "\n";
    }
  }
}

/// Convergence curves (percentiles over replications), one group per
/// algorithm; the EFF and weighted-gain evolution files mirror the adaptive
/// sampling diagnostics.
inline void emit_plot_data(const ConvergenceReport& report, const std::filesystem::path& dir) {
  if (report.algorithms.empty()) throw ConfigError("emit_plot_data: empty report");
  std::filesystem::create_directories(dir);

  {
    auto out = detail::open_csv(dir / "report.csv");
    out << "algorithm,cost,err_p25,err_median,err_p75\n";
    for (const auto& a : report.algorithms)
      for (std::size_t i = 0; i < a.grid.size(); ++i)
        out << a.spec.label() << "," << a.grid[i] << "," << a.err_p25[i] << "," << a.err_median[i]
            << "," << a.err_p75[i] << "\n";
  }
  {
    auto out = detail::open_csv(dir / "eff_evolution.csv");
    out << "algorithm,replication,iteration,cum_cost,max_eff\n";
    for (const auto& a : report.algorithms)
      for (const auto& rep : a.reps) {
        if (rep.failed) continue;
        for (const auto& r : rep.history.records)
          if (r.iteration > 0 && std::isfinite(r.max_eff))
            out << a.spec.label() << "," << rep.replication << "," << r.iteration << ","
                << r.cumulative_cost << "," << r.max_eff << "\n";
      }
  }
  {
    auto out = detail::open_csv(dir / "ig_evolution.csv");
    int max_src = 1;
    for (const auto& a : report.algorithms)
      for (const auto& rep : a.reps)
        for (const auto& r : rep.history.records)
          max_src = std::max(max_src, static_cast<int>(r.gains.size()));
    out << "algorithm,replication,iteration,cum_cost,source";
    for (int l = 0; l < max_src; ++l) out << ",gain_src" << l;
    out << "\n";
    for (const auto& a : report.algorithms)
      for (const auto& rep : a.reps) {
        if (rep.failed) continue;
        for (const auto& r : rep.history.records) {
          if (r.gains.size() < 2) continue;  // source stage ran only in multifidelity runs
          out << a.spec.label() << "," << rep.replication << "," << r.iteration << ","
              << r.cumulative_cost << "," << r.source;
          for (int l = 0; l < max_src; ++l)
            out << ","
                << (l < static_cast<int>(r.gains.size())
                        ? r.gains[static_cast<std::size_t>(l)].normalized
                        : std::numeric_limits<double>::quiet_NaN());
          out << "\n";
        }
      }
  }
}

// ---------------------------------------------------------------------------
// Study runner
// ---------------------------------------------------------------------------

/// Runs R independent replications per algorithm: distinct design seeds,
/// shared across algorithms so every method starts from the same designs, and
/// one shared Monte Carlo set for the reference estimate, the snapshots, and
/// candidate-restricted search. Replications execute on a small worker pool;
/// aggregation is a deterministic single-threaded reduction.
inline ConvergenceReport run_study(const StudySpec& spec,
                                   const std::vector<double>& thresholds = {1e-2, 1e-3}) {
  spec.validate();

  SampleSet pf_set = draw_mc(spec.problem.input_specs, spec.pf_samples,
                             derive_seed(spec.seed, study_seed::kPfSet));
  Eigen::VectorXd g_ref(pf_set.size());
  for (Eigen::Index i = 0; i < pf_set.size(); ++i) {
    double g;
    try {
      g = spec.problem.limit_state(0, pf_set.row(i));
    } catch (...) {
      g = spec.config.failed_eval_sentinel;
    }
    g_ref[i] = std::isfinite(g) ? g : spec.config.failed_eval_sentinel;
  }
  FailureEstimate reference = estimate_pf_values(g_ref);
  if (!(reference.p_hat > 0.0))
    throw ConfigError("study: reference failure probability is zero; relative error undefined");

  ConvergenceReport report;
  report.reference_pf = reference.p_hat;
  report.sample_hash = pf_set.content_hash();
  report.pf_samples = pf_set.size();
  report.algorithms.resize(spec.algorithms.size());

  struct Job {
    std::size_t algo;
    int rep;
  };
  std::vector<Job> jobs;
  for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
    report.algorithms[a].spec = spec.algorithms[a];
    report.algorithms[a].reps.resize(static_cast<std::size_t>(spec.replications));
    for (int r = 0; r < spec.replications; ++r) jobs.push_back({a, r});
  }

  auto run_job = [&](const Job& job) {
    const AlgorithmSpec& algo = spec.algorithms[job.algo];
    ReplicationResult& slot = report.algorithms[job.algo].reps[static_cast<std::size_t>(job.rep)];
    slot.replication = job.rep;
    RunConfig cfg = spec.config;
    cfg.master_seed =
        derive_seed(spec.seed, study_seed::kReplication, static_cast<std::uint64_t>(job.rep));
    cfg.acquisition.weighting = algo.weighting;
    try {
      RunOutput out = algo.kind == AlgorithmKind::egra
                          ? run_egra(spec.problem, cfg, &pf_set)
                          : run_mfegra(spec.problem, cfg, &pf_set);
      slot.history = std::move(out.history);
      slot.final_gp = std::move(out.gp);
      slot.curve = error_curve(slot.history, reference.p_hat);
    } catch (const std::exception& e) {
      slot.failed = true;
      slot.error = e.what();
    }
  };

  unsigned hw = std::thread::hardware_concurrency();
  int workers = spec.workers > 0 ? spec.workers : static_cast<int>(hw > 0 ? hw : 2);
  workers = std::min<int>(workers, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (const auto& j : jobs) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          run_job(jobs[i]);
        }
      });
    for (auto& t : pool) t.join();
  }

  for (auto& a : report.algorithms) detail::aggregate(a, thresholds);

  if (!spec.out_dir.empty()) {
    std::filesystem::path dir(spec.out_dir);
    std::filesystem::create_directories(dir);
    emit_plot_data(report, dir);
    for (const auto& a : report.algorithms)
      write_history_csv(dir / ("history_" + a.spec.label() + ".csv"), a.reps,
                        spec.problem.num_sources(), spec.problem.domain.dim(),
                        report.reference_pf);
  }
  return report;
}

}  // namespace mfegra::bench

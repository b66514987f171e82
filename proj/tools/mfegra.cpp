// Benchmark harness for multifidelity active-learning reliability analysis on
// the built-in analytic test problem. Subcommands: pf (reference estimate),
// run (single replication), study (multi-replication comparison), oracle
// (independent verification suites).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "mfegra/mfegra.hpp"

namespace {

using namespace mfegra;

WeightingMode parse_weighting(const std::string& s) {
  if (s == "none") return WeightingMode::none;
  if (s == "eff") return WeightingMode::eff;
  if (s == "pf") return WeightingMode::pf;
  throw ConfigError("unknown weighting '" + s + "' (expected none|eff|pf)");
}

SearchMode parse_mode(const std::string& s) {
  if (s == "continuous") return SearchMode::continuous;
  if (s == "candidates") return SearchMode::candidate_restricted;
  throw ConfigError("unknown mode '" + s + "' (expected continuous|candidates)");
}

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string weighting = "eff";
  std::string mode = "continuous";
  double budget_cost = 80.0;
  int budget_iters = 400;
  double eff_threshold = 1e-10;
  int doe = 10;
  Eigen::Index zset = 2000;
  Eigen::Index pf_samples = 100000;
  std::string out;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--weighting", weighting, "Gain weighting: none|eff|pf")
        ->check(CLI::IsMember({"none", "eff", "pf"}));
    cmd->add_option("--mode", mode, "Location search: continuous|candidates")
        ->check(CLI::IsMember({"continuous", "candidates"}));
    cmd->add_option("--budget-cost", budget_cost, "Equivalent-cost budget");
    cmd->add_option("--budget-iters", budget_iters, "Iteration budget");
    cmd->add_option("--eff-threshold", eff_threshold, "Stopping threshold on max EFF");
    cmd->add_option("--doe", doe, "Initial design size");
    cmd->add_option("--zset", zset, "Information-gain candidate set size");
    cmd->add_option("--pf-samples", pf_samples, "Monte Carlo set size for failure estimates");
    cmd->add_option("--out", out, "Output directory for CSV artifacts");
  }

  RunConfig to_config() const {
    RunConfig cfg;
    cfg.master_seed = seed;
    cfg.doe_size = doe;
    cfg.eff_threshold = eff_threshold;
    cfg.max_iterations = budget_iters;
    cfg.max_cost = budget_cost;
    cfg.mode = parse_mode(mode);
    cfg.acquisition.weighting = parse_weighting(weighting);
    cfg.acquisition.ig_candidates = zset;
    cfg.pf_snapshot_samples = pf_samples;
    cfg.validate();
    return cfg;
  }
};

int cmd_pf(Eigen::Index samples, std::uint64_t seed) {
  ProblemDefinition p = bench::analytic_problem();
  SampleSet set = draw_mc(p.input_specs, samples, derive_seed(seed, seed_purpose::kPfSet));
  Eigen::VectorXd g(set.size());
  for (Eigen::Index i = 0; i < set.size(); ++i) g[i] = p.limit_state(0, set.row(i));
  FailureEstimate est = estimate_pf_values(g);
  std::cout.precision(10);
  std::cout << "pf_hat=" << est.p_hat << " m=" << est.m << " std_error=" << est.std_error
            << " seed=" << seed << "\n";
  return 0;
}

int cmd_run(const CommonOpts& opts, const std::string& algo, const std::string& dump,
            const std::string& resume_path) {
  ProblemDefinition p = bench::analytic_problem();
  RunConfig cfg = opts.to_config();

  std::function<void(const MfGpPosterior&, const RunHistory&, int)> hook;
  if (!dump.empty()) {
    hook = [&](const MfGpPosterior& gp, const RunHistory& h, int iter) {
      save_checkpoint(dump, gp, iter + 1, cfg.master_seed, h.final_cost());
    };
  }

  ResumeState resume_state;
  const ResumeState* resume = nullptr;
  if (!resume_path.empty()) {
    LoadedCheckpoint c = load_checkpoint(resume_path);
    resume_state.data = std::move(c.data);
    resume_state.hyperparams = std::move(c.hyperparams);
    resume_state.y_mean = c.y_mean;
    resume_state.y_sd = c.y_sd;
    resume_state.next_iteration = c.next_iteration;
    resume_state.cumulative_cost = c.cumulative_cost;
    cfg.master_seed = c.master_seed;
    resume = &resume_state;
  }

  RunOutput out = algo == "egra" ? run_egra(p, cfg, nullptr, nullptr, hook, resume)
                                 : run_mfegra(p, cfg, nullptr, nullptr, hook, resume);

  std::cout.precision(10);
  std::cout << "algorithm=" << algo << " stop=" << to_string(out.history.stop)
            << " records=" << out.history.records.size()
            << " cost=" << out.history.final_cost();
  for (int l = 0; l < p.num_sources(); ++l)
    std::cout << " evals_g" << l << "=" << out.history.count_evaluations(l);
  std::cout << "\n";

  double reference_pf = 0.0;
  if (opts.pf_samples > 0) {
    SampleSet set =
        draw_mc(p.input_specs, opts.pf_samples, derive_seed(cfg.master_seed, seed_purpose::kPfSet));
    Eigen::VectorXd g(set.size());
    for (Eigen::Index i = 0; i < set.size(); ++i) g[i] = p.limit_state(0, set.row(i));
    FailureEstimate ref = estimate_pf_values(g);
    FailureEstimate mf = estimate_pf_values(out.gp.hf_mean(set.points));
    reference_pf = ref.p_hat;
    std::cout << "pf_ref=" << ref.p_hat << " pf_surrogate=" << mf.p_hat
              << " rel_err=" << relative_error(mf.p_hat, ref.p_hat) << "\n";
  }

  if (!opts.out.empty()) {
    std::filesystem::create_directories(opts.out);
    bench::ReplicationResult rep;
    rep.replication = 0;
    rep.history = out.history;
    bench::write_history_csv(std::filesystem::path(opts.out) / "history.csv", {rep},
                             algo == "egra" ? 1 : p.num_sources(), p.domain.dim(), reference_pf);
    std::cout << "wrote " << opts.out << "/history.csv\n";
  }
  return 0;
}

int cmd_study(const CommonOpts& opts, int reps, const std::vector<std::string>& algos,
              const std::vector<std::string>& weightings, int workers) {
  bench::StudySpec spec;
  spec.replications = reps;
  spec.config = opts.to_config();
  spec.config.pf_snapshot_samples = 0;  // the study supplies the shared set
  spec.pf_samples = opts.pf_samples;
  spec.seed = opts.seed;
  spec.out_dir = opts.out;
  spec.workers = workers;
  spec.algorithms.clear();
  for (const auto& a : algos) {
    if (a == "egra") {
      spec.algorithms.push_back({bench::AlgorithmKind::egra, WeightingMode::eff});
    } else if (a == "mfegra") {
      for (const auto& w : weightings)
        spec.algorithms.push_back({bench::AlgorithmKind::mfegra, parse_weighting(w)});
    } else {
      throw ConfigError("unknown algorithm '" + a + "' (expected mfegra|egra)");
    }
  }

  bench::ConvergenceReport report = bench::run_study(spec);
  std::cout.precision(10);
  std::cout << "reference_pf=" << report.reference_pf << " m=" << report.pf_samples
            << " sample_hash=" << report.sample_hash << "\n";
  for (const auto& a : report.algorithms) {
    std::cout << a.spec.label() << ": reps=" << a.reps.size() << " excluded=" << a.excluded;
    for (const auto& [thr, cost] : a.median_cost_to_threshold)
      std::cout << " cost_to_" << thr << "=" << cost;
    std::cout << "\n";
  }
  if (!opts.out.empty()) std::cout << "wrote CSV artifacts to " << opts.out << "\n";
  return 0;
}

int cmd_oracle(int cases, int gps, int outer, std::uint64_t seed) {
  int status = 0;
  auto eff = verify::check_eff_closed_form(cases, seed);
  std::cout << (eff.pass ? "PASS" : "FAIL") << " eff-quadrature: " << eff.cases
            << " cases, max scaled error " << eff.max_abs_err << "\n";
  status |= eff.pass ? 0 : 1;

  auto look = verify::check_lookahead_refit(20, seed);
  std::cout << (look.pass ? "PASS" : "FAIL") << " lookahead-refit: " << look.cases
            << " cases, max relative error " << look.max_rel_err << "\n";
  status |= look.pass ? 0 : 1;

  auto ig = verify::check_information_gain(gps, outer, seed, gps - 1);
  std::cout << (ig.pass ? "PASS" : "FAIL") << " information-gain double-loop: " << ig.passed << "/"
            << ig.cases << " cases within 3 standard errors\n";
  status |= ig.pass ? 0 : 1;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multifidelity active-learning reliability benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Key=value config file; keys live in a [subcommand] section");

  // pf
  auto* pf = app.add_subcommand("pf", "Reference failure probability of the analytic problem");
  Eigen::Index pf_m = 1000000;
  std::uint64_t pf_seed = 0;
  pf->add_option("--samples", pf_m, "Monte Carlo sample count");
  pf->add_option("--seed", pf_seed, "Sampling seed");

  // run
  auto* run = app.add_subcommand("run", "Single adaptive-refinement replication");
  CommonOpts run_opts;
  run_opts.add_to(run);
  std::string run_algo = "mfegra";
  std::string dump, resume;
  run->add_option("--algo", run_algo, "Algorithm: mfegra|egra")
      ->check(CLI::IsMember({"mfegra", "egra"}));
  run->add_option("--dump", dump, "Write a resumable checkpoint after each iteration");
  run->add_option("--resume", resume, "Resume from a checkpoint file");

  // study
  auto* study = app.add_subcommand("study", "Multi-replication comparison study");
  CommonOpts study_opts;
  study_opts.add_to(study);
  int reps = 10;
  int workers = 0;
  std::vector<std::string> algos = {"mfegra", "egra"};
  std::vector<std::string> weightings;
  study->add_option("--reps", reps, "Number of replications per algorithm");
  study->add_option("--algos", algos, "Algorithms to run (mfegra egra)")
      ->delimiter(',');
  study->add_option("--weightings", weightings,
                    "Weighting variants to compare for mfegra (defaults to --weighting)")
      ->delimiter(',');
  study->add_option("--workers", workers, "Concurrent replications (0 = hardware)");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Closed-form verification suites");
  int oracle_cases = 200, oracle_gps = 10, oracle_outer = 200;
  std::uint64_t oracle_seed = 2024;
  oracle->add_option("--cases", oracle_cases, "Feasibility quadrature cases");
  oracle->add_option("--gps", oracle_gps, "Random GPs for the gain comparison");
  oracle->add_option("--outer", oracle_outer, "Outer Monte Carlo draws per gain estimate");
  oracle->add_option("--seed", oracle_seed, "Suite seed");

  try {
    app.parse(argc, argv);
    if (pf->parsed()) return cmd_pf(pf_m, pf_seed);
    if (run->parsed()) return cmd_run(run_opts, run_algo, dump, resume);
    if (study->parsed()) {
      if (weightings.empty()) weightings = {study_opts.weighting};
      return cmd_study(study_opts, reps, algos, weightings, workers);
    }
    if (oracle->parsed()) return cmd_oracle(oracle_cases, oracle_gps, oracle_outer, oracle_seed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mfegra::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const mfegra::ConditioningError& e) {
    std::cerr << "numerical conditioning failure: " << e.what() << " (jitter ladder:";
    for (double j : e.jitter_ladder()) std::cerr << " " << j;
    std::cerr << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <random>

#include "mfegra/bench.hpp"

using namespace mfegra;
using namespace mfegra::bench;

namespace {

Eigen::VectorXd pt(double a, double b) { return (Eigen::VectorXd(2) << a, b).finished(); }

StudySpec small_spec(std::uint64_t seed, int reps, int iters) {
  StudySpec spec;
  spec.replications = reps;
  spec.seed = seed;
  spec.pf_samples = 3000;
  spec.config.doe_size = 8;
  spec.config.max_iterations = iters;
  spec.config.acquisition.ig_candidates = 300;
  spec.config.acquisition.scan_points = 256;
  spec.workers = 2;
  return spec;
}

}  // namespace

TEST_CASE("analytic models match their formulas at the origin") {
  REQUIRE(eval_analytic(0, pt(0, 0)) == Catch::Approx(-2.2));
  REQUIRE(eval_analytic(1, pt(0, 0)) == Catch::Approx(-2.2 + std::sin(1.25)).margin(1e-12));
  REQUIRE(eval_analytic(1, pt(0, 0)) == Catch::Approx(-1.2510).margin(5e-5));
  REQUIRE(eval_analytic(2, pt(0, 0)) ==
          Catch::Approx(-2.2 + 3.0 * std::sin(35.0 / 11.0)).margin(1e-12));
  REQUIRE(eval_analytic(2, pt(0, 0)) == Catch::Approx(-2.3206).margin(5e-5));
  REQUIRE_THROWS_AS(eval_analytic(3, pt(0, 0)), ConfigError);
  REQUIRE_THROWS_AS(eval_analytic(-1, pt(0, 0)), ConfigError);
}

TEST_CASE("low-fidelity discrepancies are the stated sinusoids to machine precision") {
  std::mt19937_64 rng(1);
  auto u = [&]() { return static_cast<double>(rng() % 1000000) / 1000000.0; };
  for (int i = 0; i < 10000; ++i) {
    double z1 = -4.0 + 11.0 * u();
    double z2 = -3.0 + 11.0 * u();
    Eigen::VectorXd z = pt(z1, z2);
    double d1 = eval_analytic(1, z) - eval_analytic(0, z);
    double d2 = eval_analytic(2, z) - eval_analytic(0, z);
    REQUIRE(d1 == Catch::Approx(std::sin(5.0 * z1 / 22.0 + 5.0 * z2 / 44.0 + 1.25)).margin(1e-14));
    REQUIRE(d2 ==
            Catch::Approx(3.0 * std::sin(5.0 * z1 / 11.0 + 5.0 * z2 / 11.0 + 35.0 / 11.0))
                .margin(1e-14));
  }
}

TEST_CASE("staircase crossing interpolates the last descent below threshold") {
  std::vector<std::pair<double, double>> curve = {
      {10.0, 0.2}, {11.0, 0.05}, {12.0, 5e-4}, {13.0, 2e-3}, {14.0, 4e-4}, {15.0, 1e-4}};
  // Last record at/above 1e-3 is cost 13; interpolate toward cost 14.
  double c = last_crossing_cost(curve, 1e-3);
  REQUIRE(c == Catch::Approx(13.0 + (2e-3 - 1e-3) / (2e-3 - 4e-4)).margin(1e-12));

  // Never settles below: infinity.
  REQUIRE(std::isinf(last_crossing_cost({{1.0, 0.5}, {2.0, 0.01}, {3.0, 0.7}}, 1e-1)));
  // Never rises above: the first recorded cost.
  REQUIRE(last_crossing_cost({{4.0, 1e-6}, {5.0, 1e-7}}, 1e-3) == 4.0);
}

TEST_CASE("carry-forward evaluation of staircases") {
  std::vector<std::pair<double, double>> curve = {{10.0, 0.5}, {12.0, 0.1}, {20.0, 0.01}};
  REQUIRE(curve_value_at(curve, 5.0) == 0.5);    // before the first record
  REQUIRE(curve_value_at(curve, 10.0) == 0.5);
  REQUIRE(curve_value_at(curve, 13.7) == 0.1);
  REQUIRE(curve_value_at(curve, 1e9) == 0.01);
}

TEST_CASE("quantiles interpolate linearly") {
  std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
  REQUIRE(quantile(v, 0.5) == Catch::Approx(2.5));
  REQUIRE(quantile(v, 0.25) == Catch::Approx(1.75));
  REQUIRE(quantile(v, 0.0) == 1.0);
  REQUIRE(quantile(v, 1.0) == 4.0);
}

TEST_CASE("failed replications are excluded and flagged") {
  AlgorithmResult a;
  a.reps.resize(3);
  a.reps[0].curve = {{10.0, 0.5}, {11.0, 0.01}};
  a.reps[1].failed = true;
  a.reps[1].error = "synthetic";
  a.reps[2].curve = {{10.0, 0.3}, {11.5, 0.02}};
  bench::detail::aggregate(a, {1e-1});
  REQUIRE(a.excluded == 1);
  REQUIRE(a.grid.size() == 3);
  REQUIRE(a.median_cost_to_threshold.at(1e-1) > 10.0);
}

TEST_CASE("smoke study: one replication, two iterations") {
  StudySpec spec = small_spec(7, 1, 2);
  spec.algorithms = {{AlgorithmKind::mfegra, WeightingMode::eff}};
  ConvergenceReport rep = run_study(spec);
  REQUIRE(rep.algorithms.size() == 1);
  const auto& a = rep.algorithms[0];
  REQUIRE(a.excluded == 0);
  REQUIRE(a.reps.size() == 1);
  // Initial design plus two adaptive iterations on the curve.
  REQUIRE(a.reps[0].curve.size() == 3);
  REQUIRE(a.grid.size() == 3);
  REQUIRE(rep.reference_pf > 0.25);
  REQUIRE(rep.reference_pf < 0.36);
}

TEST_CASE("percentile curves bracket the median pointwise") {
  StudySpec spec = small_spec(17, 3, 4);
  ConvergenceReport rep = run_study(spec);
  for (const auto& a : rep.algorithms) {
    REQUIRE_FALSE(a.grid.empty());
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
      REQUIRE(a.err_p25[i] <= a.err_median[i] + 1e-15);
      REQUIRE(a.err_median[i] <= a.err_p75[i] + 1e-15);
    }
  }
}

TEST_CASE("every algorithm scores against the identical sample set") {
  StudySpec spec = small_spec(27, 2, 3);
  ConvergenceReport rep = run_study(spec);
  REQUIRE(rep.sample_hash != 0);
  REQUIRE(rep.pf_samples == spec.pf_samples);
  // Same replication seeds produce identical initial designs across algorithms.
  const auto& mf = rep.algorithms[0].reps[0].history.records[0];
  const auto& eg = rep.algorithms[1].reps[0].history.records[0];
  REQUIRE(mf.evaluations[0].z == eg.evaluations[0].z);
}

TEST_CASE("plot data files have the documented shape") {
  StudySpec spec = small_spec(37, 2, 3);
  spec.out_dir = "bench_csv_test";
  ConvergenceReport rep = run_study(spec);
  (void)rep;

  std::ifstream report("bench_csv_test/report.csv");
  REQUIRE(report.good());
  std::string header;
  std::getline(report, header);
  REQUIRE(header == "algorithm,cost,err_p25,err_median,err_p75");
  int mf_rows = 0, egra_rows = 0;
  for (std::string line; std::getline(report, line);) {
    if (line.rfind("mfegra-eff,", 0) == 0) ++mf_rows;
    if (line.rfind("egra,", 0) == 0) ++egra_rows;
  }
  REQUIRE(mf_rows >= 3);
  REQUIRE(egra_rows >= 3);

  std::ifstream hist("bench_csv_test/history_mfegra-eff.csv");
  REQUIRE(hist.good());
  std::getline(hist, header);
  REQUIRE(header ==
          "replication,iteration,z0,z1,source,max_eff,gain_src0,gain_src1,gain_src2,"
          "evals_this_iter,cum_cost,pf_hat,rel_err");

  REQUIRE(std::filesystem::exists("bench_csv_test/eff_evolution.csv"));
  REQUIRE(std::filesystem::exists("bench_csv_test/ig_evolution.csv"));
  std::filesystem::remove_all("bench_csv_test");
}

TEST_CASE("empty algorithm lists are rejected") {
  StudySpec spec = small_spec(47, 1, 1);
  spec.algorithms.clear();
  REQUIRE_THROWS_AS(run_study(spec), ConfigError);
  ConvergenceReport empty;
  REQUIRE_THROWS_AS(emit_plot_data(empty, "nowhere"), ConfigError);
}

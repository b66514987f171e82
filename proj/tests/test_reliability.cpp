#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mfegra/reliability.hpp"

using namespace mfegra;

TEST_CASE("indicator uses the strict sign convention") {
  REQUIRE(indicator(-2.2) == 0);
  REQUIRE(indicator(1e-12) == 1);
  REQUIRE(indicator(0.0) == 0);  // the boundary is safe
  REQUIRE_THROWS_AS(indicator(std::nan("")), std::invalid_argument);
  REQUIRE_THROWS_AS(indicator(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("failure fraction over value lists") {
  Eigen::VectorXd g(4);
  g << 1.0, -0.5, 0.3, -2.0;
  FailureEstimate e = estimate_pf_values(g);
  REQUIRE(e.p_hat == 0.5);
  REQUIRE(e.m == 4);
  REQUIRE(e.std_error == Catch::Approx(std::sqrt(0.25 / 4.0)));
  REQUIRE_THROWS_AS(estimate_pf_values(Eigen::VectorXd()), ConfigError);
}

TEST_CASE("estimator stays in range and matches the counting identity") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 500);
    Eigen::VectorXd a(m), b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      a[i] = static_cast<double>(rng() % 2000) / 1000.0 - 1.0;
      b[i] = a[i] + (static_cast<double>(rng() % 100) / 1000.0 - 0.05);
    }
    FailureEstimate ea = estimate_pf_values(a), eb = estimate_pf_values(b);
    REQUIRE(ea.p_hat >= 0.0);
    REQUIRE(ea.p_hat <= 1.0);
    // |p_a - p_b| * m is an integer difference of failure counts.
    double diff = std::abs(ea.p_hat - eb.p_hat) * static_cast<double>(m);
    REQUIRE(diff == Catch::Approx(std::round(diff)).margin(1e-9));
  }
}

TEST_CASE("predictor failures count as failures") {
  SampleSet s;
  s.points.resize(4, 1);
  s.points << 0.0, 1.0, 2.0, 3.0;
  FailureEstimate e = estimate_pf([](const Eigen::VectorXd& z) {
    if (z[0] == 1.0) throw std::runtime_error("solver died");
    if (z[0] == 2.0) return std::numeric_limits<double>::quiet_NaN();
    return -1.0;
  }, s);
  REQUIRE(e.p_hat == 0.5);
}

TEST_CASE("relative error arithmetic") {
  REQUIRE(relative_error(0.3021, 0.3021) == 0.0);
  REQUIRE(relative_error(0.30, 0.3021) == Catch::Approx(0.0069513406));
  REQUIRE(relative_error(0.6, 0.3) == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(relative_error(0.1, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(relative_error(0.1, -0.5), std::invalid_argument);
}

TEST_CASE("shared-set discipline: same set, error reflects disagreement only") {
  std::vector<RandomVariableSpec> specs = {RandomVariableSpec::Uniform(-1, 1)};
  SampleSet s = draw_mc(specs, 5000, 31);
  auto truth = [](const Eigen::VectorXd& z) { return z[0]; };
  auto approx = [](const Eigen::VectorXd& z) { return z[0] - 0.01; };
  FailureEstimate ref = estimate_pf(truth, s);
  FailureEstimate mf = estimate_pf(approx, s);
  Eigen::Index disagree = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    disagree += indicator(truth(s.row(i))) != indicator(approx(s.row(i)));
  REQUIRE(std::abs(ref.p_hat - mf.p_hat) * static_cast<double>(s.size()) <=
          static_cast<double>(disagree) + 1e-9);
}

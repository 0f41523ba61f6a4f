#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rlcert/dual_solver.hpp"

using namespace rlcert;

namespace {

const DivergenceSpec kTv = DivergenceSpec::total_variation();

std::vector<DivergenceSpec> all_specs() {
  return {DivergenceSpec::hockey_stick(0.5), DivergenceSpec::hockey_stick(1.0), DivergenceSpec::hockey_stick(3.0),
          kTv, DivergenceSpec::power_renyi(0.5), DivergenceSpec::power_renyi(2.0), DivergenceSpec::power_renyi(4.0)};
}

bool definite(const DivergenceSpec& s) {
  return s.kind != DivergenceSpec::Kind::hockey_stick || s.param == 1.0;
}

std::vector<double> random_samples(std::mt19937_64& gen, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

}  // namespace

TEST(DualObjective, WorkedExamples) {
  const std::vector<double> fives{5, 5, 5};
  EXPECT_NEAR(*dual_objective(fives, {}, kTv, 0.0, 1.0, 5.0), 5.0, 1e-15);
  const std::vector<double> coin{0, 1};
  EXPECT_NEAR(*dual_objective(coin, {}, kTv, 0.25, 1.0, 0.25), 0.25, 1e-15);
  EXPECT_FALSE(dual_objective(coin, {}, DivergenceSpec::hockey_stick(1.0), 0.1, 1.0, 1.0).has_value());
  EXPECT_THROW(dual_objective(coin, {}, kTv, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(SolveDual, WorkedExamples) {
  const std::vector<double> coin{0, 1};
  EXPECT_NEAR(solve_dual(coin, kTv, 0.25).objective, 0.25, 1e-6);
  EXPECT_NEAR(solve_dual(coin, DivergenceSpec::hockey_stick(1.0), 0.5).objective, 0.0, 1e-6);
}

TEST(SolveDual, DegenerateSamplesGiveTheConstant) {
  const std::vector<double> c(17, 3.5);
  for (const auto& spec : all_specs()) EXPECT_NEAR(solve_dual(c, spec, 0.0).objective, 3.5, 1e-6) << spec.name();
}

TEST(SolveDual, ZeroBudgetGivesTheMean) {
  std::mt19937_64 gen(11);
  for (const auto& spec : all_specs()) {
    if (!definite(spec)) continue;
    const auto v = random_samples(gen, 50, -2.0, 7.0);
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    EXPECT_NEAR(solve_dual(v, spec, 0.0).objective, mean, 1e-6) << spec.name();
  }
}

TEST(SolveDual, SolutionIsFeasibleAndReproducesObjective) {
  std::mt19937_64 gen(3);
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 40, 0.0, 10.0);
    const auto sol = solve_dual(v, spec, 0.3);
    ASSERT_TRUE(sol.feasible);
    const auto direct = dual_objective(v, {}, spec, 0.3, sol.nu, sol.eta);
    ASSERT_TRUE(direct.has_value()) << spec.name();
    EXPECT_NEAR(*direct, sol.objective, 1e-8 * (1.0 + std::abs(sol.objective))) << spec.name();
  }
}

TEST(SolveDual, NonincreasingInBudget) {
  std::mt19937_64 gen(5);
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 60, 0.0, 1.0);
    double prev = INFINITY;
    for (double e = 0.0; e <= 2.0; e += 0.1) {
      const double b = solve_dual(v, spec, e).objective;
      EXPECT_LE(b, prev + 1e-9) << spec.name() << " eps=" << e;
      prev = b;
    }
  }
}

TEST(SolveDual, ScaleEquivariant) {
  std::mt19937_64 gen(9);
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 30, 0.0, 1.0);
    std::vector<double> w;
    for (double x : v) w.push_back(37.0 * x - 4.0);
    const double a = solve_dual(v, spec, 0.2).objective;
    const double b = solve_dual(w, spec, 0.2).objective;
    EXPECT_NEAR(b, 37.0 * a - 4.0, 1e-7 * 37.0) << spec.name();
  }
}

TEST(SolveDual, EveryFeasiblePointIsBelowTheOptimum) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> lognu(-3.0, 3.0), eta(-3.0, 3.0);
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 25, 0.0, 1.0);
    const double best = solve_dual(v, spec, 0.15).objective;
    for (int k = 0; k < 2000; ++k) {
      const auto g = dual_objective(v, {}, spec, 0.15, std::exp(lognu(gen)), eta(gen));
      if (g) EXPECT_LE(*g, best + 1e-9) << spec.name();
    }
  }
}

TEST(SolveDual, SupportFloorKeepsConjugateFinite) {
  const std::vector<double> v{3, 4, 5};
  const RewardSupport support{0.0, 10.0};
  for (const auto& spec : all_specs()) {
    const auto sol = solve_dual(v, spec, 0.1, support);
    EXPECT_TRUE(std::isfinite(certificate_term_range(spec, 0.1, sol.nu, sol.eta, support))) << spec.name();
    EXPECT_LE(sol.objective, solve_dual(v, spec, 0.1).objective + 1e-9) << spec.name();
  }
  EXPECT_THROW(solve_dual(v, kTv, 0.1, RewardSupport{4.0, 10.0}), std::invalid_argument);
}

TEST(SolveDual, WeightedMatchesRepeatedSamples) {
  const std::vector<double> atoms{0.0, 2.0, 5.0};
  const std::vector<double> weights{1.0, 2.0, 1.0};
  const std::vector<double> repeated{0.0, 2.0, 2.0, 5.0};
  for (const auto& spec : all_specs()) {
    EXPECT_NEAR(solve_dual(atoms, weights, spec, 0.2).objective, solve_dual(repeated, spec, 0.2).objective, 1e-9);
  }
}

TEST(SolveDual, RejectsBadInput) {
  const std::vector<double> empty;
  EXPECT_THROW(solve_dual(empty, kTv, 0.1), std::invalid_argument);
  const std::vector<double> v{1.0};
  EXPECT_THROW(solve_dual(v, kTv, -0.1), std::invalid_argument);
}

TEST(CertificateValue, MatchesDirectFormula) {
  std::mt19937_64 gen(23);
  const RewardSupport support{0.0, 10.0};
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 300, 0.0, 10.0);
    const auto sol = solve_dual(v, spec, 0.2, support);
    CompensatedSum h;
    for (double j : v) h += *certificate_term(spec, 0.2, sol.nu, sol.eta, j);
    const double direct = sol.nu * (sol.eta - h.value() / v.size() - 0.01);
    EXPECT_NEAR(certificate_value(spec, 0.2, sol.nu, sol.eta, v, 0.01), direct, 1e-8) << spec.name();
    const double range = certificate_term_range(spec, 0.2, sol.nu, sol.eta, support);
    const double direct_range = *certificate_term(spec, 0.2, sol.nu, sol.eta, 0.0) -
                                *certificate_term(spec, 0.2, sol.nu, sol.eta, 10.0);
    EXPECT_NEAR(range, direct_range, 1e-9 * (1.0 + direct_range)) << spec.name();
  }
}

TEST(CertificateValue, PowerZeroBudgetReachesTheMean) {
  // At eps_d = 0 the power objective rises toward the mean as nu grows; the
  // excess form keeps the large-nu evaluation exact.
  std::mt19937_64 gen(29);
  const auto v = random_samples(gen, 2000, 0.0, 200.0);
  double mean = 0.0;
  for (double x : v) mean += x / v.size();
  for (double beta : {0.25, 0.5, 2.0, 4.0}) {
    const auto spec = DivergenceSpec::power_renyi(beta);
    const auto sol = solve_dual(v, spec, 0.0, RewardSupport{0.0, 200.0});
    EXPECT_NEAR(sol.objective, mean, 1e-6) << beta;
    EXPECT_NEAR(certificate_value(spec, 0.0, sol.nu, sol.eta, v, 0.0), mean, 1e-6) << beta;
  }
}

TEST(Hoeffding, FrozenValues) {
  EXPECT_EQ(hoeffding_radius(0.0, 100, 0.01), 0.0);
  EXPECT_NEAR(hoeffding_radius(1.0, 10000, 0.01), 0.016276236307187292, 1e-15);
  EXPECT_NEAR(hoeffding_radius(1.0, 40000, 0.01), 0.008138118153593646, 1e-15);
  EXPECT_THROW(hoeffding_radius(1.0, 0, 0.01), std::invalid_argument);
}

TEST(ExpectationUpperBound, Examples) {
  const std::vector<double> ones{1, 1, 1};
  EXPECT_DOUBLE_EQ(expectation_upper_bound(ones, 0.0), 1.0);
  const std::vector<double> coin{0, 1};
  EXPECT_DOUBLE_EQ(expectation_upper_bound(coin, 0.1), 0.6);
  EXPECT_THROW(expectation_upper_bound(std::vector<double>{}, 0.0), std::invalid_argument);
}

TEST(CdfBaseline, SingleThresholdExample) {
  const std::vector<double> coin{0, 1};
  const std::vector<double> g{0.5};
  const double base = cdf_baseline(coin, g, {0.0, 1.0}, kTv, 0.0);
  EXPECT_NEAR(base, 0.25, 1e-9);  // staircase 0.5 * a + 0.5 * g_1
  EXPECT_LE(base, solve_dual(coin, kTv, 0.0, RewardSupport{0.0, 1.0}).objective + 1e-9);
}

TEST(CdfBaseline, DominatedByTheDual) {
  std::mt19937_64 gen(17);
  const RewardSupport range{0.0, 1.0};
  for (const auto& spec : all_specs()) {
    const auto v = random_samples(gen, 200, 0.0, 1.0);
    const double dual = solve_dual(v, spec, 0.2, range).objective;
    for (int n : {1, 3, 10, 40}) {
      EXPECT_LE(cdf_baseline(v, uniform_thresholds(range, n), range, spec, 0.2), dual + 1e-9) << spec.name();
    }
  }
}

TEST(CdfBaseline, ThresholdsAtSampleValuesCloseTheGap) {
  const std::vector<double> v{0.1, 0.4, 0.4, 0.7, 0.9};
  const RewardSupport range{0.0, 1.0};
  const std::vector<double> g{0.1, 0.4, 0.7, 0.9};
  const double dual = solve_dual(v, kTv, 0.1, range).objective;
  const double fine = cdf_baseline(v, g, range, kTv, 0.1);
  const double coarse = cdf_baseline(v, uniform_thresholds(range, 1), range, kTv, 0.1);
  EXPECT_NEAR(fine, dual, 1e-9);
  EXPECT_LE(dual - fine, dual - coarse + 1e-12);
}

TEST(CdfBaseline, ConfidenceCorrectionOnlyLowers) {
  std::mt19937_64 gen(19);
  const RewardSupport range{0.0, 1.0};
  const auto v = random_samples(gen, 500, 0.0, 1.0);
  const auto g = uniform_thresholds(range, 5);
  const double plain = cdf_baseline(v, g, range, kTv, 0.1);
  const double corrected = cdf_baseline(v, g, range, kTv, 0.1, {true, 0.01});
  EXPECT_LE(corrected, plain);
}

TEST(CdfBaseline, RejectsUnorderedThresholds) {
  const std::vector<double> v{0.2, 0.8};
  const std::vector<double> g{0.6, 0.3};
  EXPECT_THROW(cdf_baseline(v, g, {0.0, 1.0}, kTv, 0.1), std::invalid_argument);
}

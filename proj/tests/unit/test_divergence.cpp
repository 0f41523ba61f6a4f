#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rlcert/divergence.hpp"
#include "rlcert/oracles.hpp"

using namespace rlcert;

namespace {

std::vector<DivergenceSpec> all_specs() {
  return {DivergenceSpec::hockey_stick(0.5), DivergenceSpec::hockey_stick(1.0), DivergenceSpec::hockey_stick(2.0),
          DivergenceSpec::hockey_stick(5.0), DivergenceSpec::total_variation(), DivergenceSpec::power_renyi(0.5),
          DivergenceSpec::power_renyi(2.0), DivergenceSpec::power_renyi(4.0)};
}

}  // namespace

TEST(FValue, WorkedExamples) {
  EXPECT_DOUBLE_EQ(f_value(DivergenceSpec::hockey_stick(2.0), 1.0), 0.0);
  EXPECT_DOUBLE_EQ(f_value(DivergenceSpec::total_variation(), 3.0), 1.0);
  EXPECT_DOUBLE_EQ(f_value(DivergenceSpec::power_renyi(2.0), 2.0), 3.0);
}

TEST(FValue, RejectsNegativeArgument) {
  EXPECT_THROW(f_value(DivergenceSpec::total_variation(), -0.1), std::invalid_argument);
}

TEST(DivergenceSpec, ParameterDomain) {
  EXPECT_THROW(DivergenceSpec::hockey_stick(0.0), std::invalid_argument);
  EXPECT_THROW(DivergenceSpec::power_renyi(1.0), std::invalid_argument);
  EXPECT_THROW(DivergenceSpec::power_renyi(0.0), std::invalid_argument);
  EXPECT_THROW(DivergenceSpec::power_renyi(-2.0), std::invalid_argument);
  EXPECT_NO_THROW(DivergenceSpec::power_renyi(0.3));
}

TEST(DivergenceSpec, Parse) {
  EXPECT_EQ(parse_divergence("tv"), DivergenceSpec::total_variation());
  EXPECT_EQ(parse_divergence("hs:2"), DivergenceSpec::hockey_stick(2.0));
  EXPECT_EQ(parse_divergence("power:0.5"), DivergenceSpec::power_renyi(0.5));
  EXPECT_THROW(parse_divergence("kl"), std::invalid_argument);
  EXPECT_THROW(parse_divergence("hs"), std::invalid_argument);
}

TEST(FValue, ConvexAndTangentAtOne) {
  for (const auto& spec : all_specs()) {
    EXPECT_DOUBLE_EQ(f_value(spec, 1.0), 0.0) << spec.name();
    const double slope = f_derivative(spec, 1.0);
    for (double x = 0.0; x <= 20.0; x += 0.173) {
      for (double y = x; y <= 20.0; y += 1.37) {
        const double mid = f_value(spec, 0.5 * (x + y));
        EXPECT_LE(mid, 0.5 * (f_value(spec, x) + f_value(spec, y)) + 1e-12) << spec.name();
      }
      EXPECT_GE(f_value(spec, x), slope * (x - 1.0) - 1e-12) << spec.name() << " x=" << x;
    }
  }
}

TEST(Conjugate, WorkedExamples) {
  EXPECT_DOUBLE_EQ(*conjugate(DivergenceSpec::hockey_stick(2.0), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(*conjugate(DivergenceSpec::total_variation(), -2.0), -0.5);
  EXPECT_FALSE(conjugate(DivergenceSpec::total_variation(), 0.6).has_value());
  EXPECT_FALSE(conjugate(DivergenceSpec::hockey_stick(1.0), 1.0 + 1e-9).has_value());
  EXPECT_TRUE(conjugate(DivergenceSpec::hockey_stick(1.0), 1.0).has_value());
  EXPECT_FALSE(conjugate(DivergenceSpec::power_renyi(0.5), 0.0).has_value());
  EXPECT_TRUE(conjugate(DivergenceSpec::power_renyi(2.0), 1e6).has_value());
}

TEST(Conjugate, MatchesGridOracleInsideDomain) {
  for (const auto& spec : all_specs()) {
    for (double y : {-3.0, -1.0, -0.4, -0.05, 0.0, 0.2, 0.45, 0.9, 1.5}) {
      if (!in_conjugate_domain(spec, y)) continue;
      const auto oracle = oracle::numeric_conjugate_oracle(spec, y);
      if (!oracle) continue;  // supremum beyond the grid (power, large y)
      EXPECT_NEAR(*conjugate(spec, y), *oracle, 1e-8) << spec.name() << " y=" << y;
    }
  }
}

TEST(Conjugate, OracleFlagsDivergentSupremum) {
  EXPECT_FALSE(oracle::numeric_conjugate_oracle(DivergenceSpec::total_variation(), 0.6).has_value());
  EXPECT_FALSE(oracle::numeric_conjugate_oracle(DivergenceSpec::hockey_stick(2.0), 1.2).has_value());
}

TEST(Conjugate, FenchelYoungWithEqualityAtArgmax) {
  for (const auto& spec : all_specs()) {
    for (double y = -4.0; y <= 3.0; y += 0.0625) {
      if (!in_conjugate_domain(spec, y)) continue;
      const double fs = *conjugate(spec, y);
      for (double x = 0.0; x <= 30.0; x += 0.21) EXPECT_LE(x * y, f_value(spec, x) + fs + 1e-9);
      const double xs = conjugate_argmax(spec, y);
      EXPECT_NEAR(xs * y - f_value(spec, xs), fs, 1e-6) << spec.name() << " y=" << y;
    }
  }
}

TEST(Conjugate, NondecreasingInArgument) {
  for (const auto& spec : all_specs()) {
    double prev = -INFINITY;
    for (double y = -5.0; y <= 3.0; y += 0.01) {
      const auto v = conjugate(spec, y);
      if (!v) break;
      EXPECT_GE(*v, prev - 1e-15);
      prev = *v;
    }
  }
}

// Reference values from an independent quadrature (scipy.integrate.quad).
TEST(ConjugateExcess, MatchesConjugateMinusArgument) {
  for (const auto& spec : all_specs()) {
    const double anchor = conjugate_anchor(spec);
    for (double z = -6.0; z <= 3.0; z += 0.05) {
      const double y = anchor + z;
      const auto direct = conjugate(spec, y);
      const auto excess = conjugate_excess(spec, z);
      ASSERT_EQ(direct.has_value(), excess.has_value()) << spec.name() << " z=" << z;
      if (!direct) continue;
      EXPECT_NEAR(*excess, *direct - y, 1e-12 * (1.0 + std::abs(y) + std::abs(*direct))) << spec.name() << " z=" << z;
      EXPECT_GE(*excess, 0.0) << spec.name();
    }
  }
}

TEST(ConjugateExcess, QuadraticNearTheAnchor) {
  // f*(f'(1) + z) - f'(1) - z = z^2 / (2 f''(1)) + O(z^3), f''(1) = beta.
  for (double beta : {0.5, 2.0, 4.0}) {
    const auto spec = DivergenceSpec::power_renyi(beta);
    for (double z : {1e-4, -1e-6, 3e-9}) {
      EXPECT_NEAR(*conjugate_excess(spec, z) / (z * z), 1.0 / (2.0 * beta), 1e-3) << beta;
    }
  }
}

TEST(Budgets, FrozenQuadratureValues) {
  EXPECT_NEAR(hs_budget(1.0, 1.0, 1.0), 0.38292492254802624, 1e-12);
  EXPECT_NEAR(tv_budget(1.0, 1.0), 0.38292492254802624, 1e-12);
  EXPECT_NEAR(hs_budget(1.0, 1.0, 2.0), 0.1906101152367584, 1e-9);
  EXPECT_NEAR(hs_budget(1.0, 1.0, 0.5), 0.09530505761837915, 1e-9);
  EXPECT_NEAR(tv_budget(1.0, 10.0), 0.039877611676744945, 1e-12);
}

TEST(Budgets, ZeroRadius) {
  EXPECT_EQ(tv_budget(0.0, 0.7), 0.0);
  for (double lambda : {0.3, 1.0, 4.0}) EXPECT_EQ(hs_budget(0.0, 0.7, lambda), 0.0);
  EXPECT_NEAR(oracle::numeric_budget_oracle(DivergenceSpec::total_variation(), 0.0, 1.0), 0.0, 1e-10);
}

TEST(Budgets, RejectBadScale) {
  EXPECT_THROW(hs_budget(1.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(tv_budget(1.0, -1.0), std::invalid_argument);
}

TEST(Budgets, MonotoneInRadiusAndScale) {
  for (double lambda : {0.5, 1.0, 2.0, 5.0}) {
    double prev = 0.0;
    for (double e = 0.0; e <= 3.0; e += 0.05) {
      const double v = hs_budget(e, 0.5, lambda);
      EXPECT_GE(v, prev - 1e-15);
      prev = v;
    }
    prev = INFINITY;
    for (double s = 0.1; s <= 3.0; s += 0.05) {
      const double v = hs_budget(1.0, s, lambda);
      EXPECT_LE(v, prev + 1e-15);
      prev = v;
    }
  }
}

TEST(Budgets, HockeyStickAtOneIsTotalVariation) {
  for (double e = 0.0; e <= 5.0; e += 0.1)
    for (double s : {0.1, 0.5, 2.0}) EXPECT_NEAR(hs_budget(e, s, 1.0), tv_budget(e, s), 1e-12);
}

TEST(Budgets, MatchQuadratureOracle) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> eps(0.0, 3.0), sig(0.1, 2.0), lam(0.5, 5.0);
  for (int k = 0; k < 40; ++k) {
    const double e = eps(gen), s = sig(gen), l = lam(gen);
    EXPECT_NEAR(hs_budget(e, s, l), oracle::numeric_budget_oracle(DivergenceSpec::hockey_stick(l), e, s), 1e-8);
    EXPECT_NEAR(tv_budget(e, s), oracle::numeric_budget_oracle(DivergenceSpec::total_variation(), e, s), 1e-8);
  }
}

TEST(Budgets, L0WorkedExample) {
  EXPECT_NEAR(l0_step_moment(0.2, 2, 2.0), 3.25, 1e-12);
  EXPECT_NEAR(l0_budget(1, 0.2, 2, 2.0), 2.25, 1e-12);
  EXPECT_NEAR(l0_budget(2, 0.2, 2, 2.0), 3.25 * 3.25 - 1.0, 1e-12);
  EXPECT_EQ(l0_budget(0, 0.2, 2, 2.0), 0.0);
}

TEST(Budgets, L0UniformSmoothingIsFree) {
  for (int n : {2, 3, 5})
    for (double beta : {0.5, 2.0, 4.0}) EXPECT_NEAR(l0_budget(7, double(n - 1) / n, n, beta), 0.0, 1e-12);
}

TEST(Budgets, L0RejectsDegenerateFlipProbability) {
  EXPECT_THROW(l0_budget(1, 0.0, 2, 2.0), std::invalid_argument);
  EXPECT_THROW(l0_budget(1, 1.0, 2, 2.0), std::invalid_argument);
}

// The per-step moment is the power divergence of the two categorical action
// distributions; compare with the direct sum over actions.
TEST(Budgets, L0StepMomentIsCategoricalDivergence) {
  for (int n : {2, 3, 4}) {
    for (double p : {0.05, 0.2, 0.4}) {
      for (double beta : {0.5, 2.0, 3.0}) {
        std::vector<double> clean(n, p / (n - 1)), attacked(n, p / (n - 1));
        clean[0] = 1.0 - p;
        attacked[1] = 1.0 - p;
        double d = 0.0;
        for (int a = 0; a < n; ++a) d += clean[a] * f_value(DivergenceSpec::power_renyi(beta), attacked[a] / clean[a]);
        EXPECT_NEAR(l0_budget(1, p, n, beta), d, 1e-10);
      }
    }
  }
}

TEST(Budgets, DispatchRespectsCompatibility) {
  const auto gauss = SmoothingConfig::gaussian(0.5);
  const auto flip = SmoothingConfig::action_flip(0.2);
  const PerturbationBudget l2{PerturbationBudget::Norm::l2, 1.0};
  const PerturbationBudget l0{PerturbationBudget::Norm::l0_steps, 1.0};
  EXPECT_NEAR(divergence_budget(DivergenceSpec::total_variation(), l2, gauss, 2), tv_budget(1.0, 0.5), 1e-15);
  EXPECT_NEAR(divergence_budget(DivergenceSpec::power_renyi(2.0), l0, flip, 2), 2.25, 1e-12);
  EXPECT_THROW(divergence_budget(DivergenceSpec::total_variation(), l2, flip, 2), std::invalid_argument);
  EXPECT_THROW(divergence_budget(DivergenceSpec::total_variation(), l0, flip, 2), std::invalid_argument);
  EXPECT_THROW(divergence_budget(DivergenceSpec::power_renyi(2.0), l2, gauss, 2), std::invalid_argument);
}

#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <set>
#include <sstream>

#include "rlcert/core_model.hpp"
#include "rlcert/rng.hpp"

using namespace rlcert;

TEST(CumulativeReward, Examples) {
  const std::vector<double> ones{1, 1, 1};
  EXPECT_DOUBLE_EQ(cumulative_reward(ones, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(cumulative_reward(ones, 0.0), 1.0);
  const std::vector<double> r{1, 2, 4};
  EXPECT_DOUBLE_EQ(cumulative_reward(r, 0.5), 3.0);
  EXPECT_THROW(cumulative_reward(r, 1.5), std::invalid_argument);
}

TEST(CumulativeReward, FromRecord) {
  TrajectoryRecord rec;
  for (double x : {1.0, 2.0, 4.0}) rec.steps.push_back({{0.0}, {0.0}, 0, x});
  EXPECT_DOUBLE_EQ(cumulative_reward(rec, 0.5), 3.0);
}

TEST(CompensatedSum, TenthsAddUp) {
  CompensatedSum s;
  for (int i = 0; i < 1000000; ++i) s += 0.1;
  EXPECT_NEAR(s.value() / 1e6, 0.1, 1e-15);
}

TEST(SampleSet, RoundTripIsBitExact) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  RewardSampleSet set;
  set.env_id = "cartpole";
  set.smoothing = SmoothingConfig::gaussian(0.2);
  set.seed_base = 12345;
  set.gamma = 0.99;
  set.horizon = 200;
  set.metadata["attack"] = "l2";
  for (int i = 0; i < 500; ++i) set.values.push_back(u(gen));
  set.values.push_back(1.0 / 3.0);
  set.values.push_back(5e-324);

  std::stringstream ss;
  write_sample_set(ss, set);
  const auto back = read_sample_set(ss);
  ASSERT_EQ(back.values.size(), set.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), set.values.data(), set.values.size() * sizeof(double)), 0);
  EXPECT_EQ(back.env_id, set.env_id);
  EXPECT_EQ(back.smoothing.sigma, 0.2);
  EXPECT_EQ(back.seed_base, 12345u);
  EXPECT_EQ(back.gamma, 0.99);
  EXPECT_EQ(back.horizon, 200);
  EXPECT_EQ(back.metadata.at("attack"), "l2");
}

TEST(SampleSet, ActionFlipHeaderRoundTrip) {
  RewardSampleSet set;
  set.env_id = "chain";
  set.smoothing = SmoothingConfig::action_flip(0.1);
  set.horizon = 3;
  set.values = {0, 1, 2};
  std::stringstream ss;
  write_sample_set(ss, set);
  const auto back = read_sample_set(ss);
  EXPECT_EQ(back.smoothing.kind, SmoothingConfig::Kind::action_flip);
  EXPECT_EQ(back.smoothing.flip_prob, 0.1);
}

TEST(SampleSet, RejectsMalformedInput) {
  std::stringstream none("1\n2\n");
  EXPECT_THROW(read_sample_set(none), std::runtime_error);
  std::stringstream empty("# rlcert-samples v1 env=x smoothing=action_flip p=0.1 seed_base=0 gamma=1 T=3\n");
  EXPECT_THROW(read_sample_set(empty), std::runtime_error);
  std::stringstream junk("# rlcert-samples v1 env=x smoothing=action_flip p=0.1 seed_base=0 gamma=1 T=3\nabc\n");
  EXPECT_THROW(read_sample_set(junk), std::runtime_error);
}

TEST(SmoothingConfig, Validation) {
  EXPECT_THROW(SmoothingConfig::gaussian(0.0), std::invalid_argument);
  EXPECT_THROW(SmoothingConfig::action_flip(1.5), std::invalid_argument);
  EXPECT_NO_THROW(SmoothingConfig::action_flip(0.0));
}

TEST(PerturbationBudget, Validation) {
  EXPECT_THROW((PerturbationBudget{PerturbationBudget::Norm::l2, -1.0}.validate(10)), std::invalid_argument);
  EXPECT_THROW((PerturbationBudget{PerturbationBudget::Norm::l0_steps, 1.5}.validate(10)), std::invalid_argument);
  EXPECT_THROW((PerturbationBudget{PerturbationBudget::Norm::l0_steps, 11}.validate(10)), std::invalid_argument);
  EXPECT_NO_THROW((PerturbationBudget{PerturbationBudget::Norm::l0_steps, 10}.validate(10)));
  EXPECT_TRUE(compatible(SmoothingConfig::gaussian(1.0), PerturbationBudget::Norm::l1));
  EXPECT_FALSE(compatible(SmoothingConfig::gaussian(1.0), PerturbationBudget::Norm::l0_steps));
  EXPECT_EQ(parse_norm("l0"), PerturbationBudget::Norm::l0_steps);
}

TEST(CounterRng, KeyedDeterminism) {
  CounterRng a(5, 7, NoiseStream::observation), b(5, 7, NoiseStream::observation);
  CounterRng c(5, 8, NoiseStream::observation), d(5, 7, NoiseStream::action_flip);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
  firsts.insert(CounterRng(5, 7, NoiseStream::observation)());
  firsts.insert(c());
  firsts.insert(d());
  EXPECT_EQ(firsts.size(), 3u);
}

TEST(CounterRng, GaussianMoments) {
  CounterRng r(1, 0, NoiseStream::observation);
  CompensatedSum s, s2;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s.value() / n, 0.0, 0.01);
  EXPECT_NEAR(s2.value() / n, 1.0, 0.01);
}

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/environments.hpp"
#include "rlcert/policies.hpp"
#include "rlcert/rng.hpp"

namespace rlcert {

/// Phase-2 (evaluation) seeds start this far above the phase-1 seed base.
inline constexpr std::uint64_t kEvalSeedOffset = std::uint64_t{1} << 20;

/// Per-step interference with a smoothed rollout. Either hook may be empty.
struct Adversary {
  /// Adds a perturbation to the observation before the smoothing noise.
  std::function<void(int t, const Environment& env, std::vector<double>& obs)> observation;
  /// Replaces the centre action of action-flip smoothing before the flip is drawn.
  std::function<int(int t, const Environment& env, std::span<const double> obs, int center)> action;
};

/// Action of the smoothed policy at step t. Noise is keyed by (seed, t).
inline int smoothed_action(const PolicyHandle& policy, const SmoothingConfig& smoothing, const Environment& env,
                           std::uint64_t seed, int t, const Adversary* adversary = nullptr,
                           std::vector<double>* observed = nullptr) {
  const auto state = env.state();
  std::vector<double> obs(state.begin(), state.end());
  const auto step = static_cast<std::uint64_t>(t);
  int action = 0;
  if (smoothing.kind == SmoothingConfig::Kind::gaussian_observation) {
    if (adversary && adversary->observation) adversary->observation(t, env, obs);
    CounterRng noise(seed, step, NoiseStream::observation);
    action = gaussian_smooth_act(policy, obs, smoothing.sigma, noise);
  } else {
    if (!policy.has_q_values()) throw std::invalid_argument("action-flip smoothing needs a policy with q_values");
    int center = argmax(policy.q_values(obs));
    if (adversary && adversary->action) center = adversary->action(t, env, obs, center);
    CounterRng noise(seed, step, NoiseStream::action_flip);
    action = flip_around(center, policy.num_actions, smoothing.flip_prob, noise);
  }
  if (observed) *observed = std::move(obs);
  return action;
}

/// Plays one smoothed episode from reset(seed) and returns its cumulative reward.
inline double run_smoothed_episode(Environment& env, const PolicyHandle& policy, const SmoothingConfig& smoothing,
                                   std::uint64_t seed, double gamma, const Adversary* adversary = nullptr,
                                   TrajectoryRecord* record = nullptr) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  env.reset(seed);
  if (record) {
    record->steps.clear();
    record->horizon = env.descriptor().horizon;
    record->seed = seed;
  }
  CompensatedSum total;
  double discount = 1.0;
  std::vector<double> observed;
  for (int t = 0; !env.done(); ++t) {
    const auto before = env.state();
    TrajectoryStep step;
    if (record) step.state.assign(before.begin(), before.end());
    const int a = smoothed_action(policy, smoothing, env, seed, t, adversary, record ? &observed : nullptr);
    const auto r = env.step(a);
    total += discount * r.reward;
    discount *= gamma;
    if (record) {
      step.observation = observed;
      step.action = a;
      step.reward = r.reward;
      record->steps.push_back(std::move(step));
    }
  }
  if (record) record->cumulative_reward = total.value();
  return total.value();
}

/// Runs body(i, env) for i in [0, count) on `workers` threads, one
/// environment per worker. Which worker runs which index is irrelevant as
/// long as body only writes to slot i.
inline void parallel_episodes(std::size_t count, int workers, const EnvFactory& make_env,
                              const std::function<void(std::size_t, Environment&)>& body) {
  const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      auto env = make_env();
      for (std::size_t i = next++; i < count; i = next++) body(i, *env);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = count;
    }
  };
  if (n_threads == 1 || count <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < std::min(n_threads, count); ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

/// m smoothed episodes; episode i uses seed seed_base + i.
inline RewardSampleSet smoothing_reward_set(const EnvFactory& make_env, const std::string& env_id,
                                            const PolicyHandle& policy, const SmoothingConfig& smoothing,
                                            std::size_t m, std::uint64_t seed_base, double gamma = 1.0,
                                            int workers = 1) {
  if (m == 0) throw std::invalid_argument("need at least one episode");
  smoothing.validate();
  RewardSampleSet set;
  set.env_id = env_id;
  set.smoothing = smoothing;
  set.seed_base = seed_base;
  set.gamma = gamma;
  set.horizon = make_env()->descriptor().horizon;
  set.values.assign(m, 0.0);
  parallel_episodes(m, workers, make_env, [&](std::size_t i, Environment& env) {
    set.values[i] = run_smoothed_episode(env, policy, smoothing, seed_base + i, gamma);
  });
  return set;
}

inline RewardSampleSet smoothing_reward_set(const std::string& env_id, const PolicyHandle& policy,
                                            const SmoothingConfig& smoothing, std::size_t m,
                                            std::uint64_t seed_base, double gamma = 1.0, int workers = 1) {
  return smoothing_reward_set(environment_factory(env_id), env_id, policy, smoothing, m, seed_base, gamma, workers);
}

struct SampleStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline SampleStats empirical_mean_and_range(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("statistics of an empty sample");
  CompensatedSum sum;
  for (double v : values) sum += v;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return {sum.value() / static_cast<double>(values.size()), *mn, *mx};
}

}  // namespace rlcert

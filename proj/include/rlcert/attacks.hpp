#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/environments.hpp"
#include "rlcert/policies.hpp"
#include "rlcert/rollout.hpp"

namespace rlcert {

struct AttackOptions {
  std::size_t episodes = 1000;
  std::uint64_t seed_base = 0;
  double gamma = 1.0;
  int workers = 1;
  // Observation attacks only.
  int num_candidates = 8;
  int score_horizon = 20;
  int score_reps = 5;
};

struct AttackResult {
  RewardSampleSet samples;
  /// Largest perturbation norm (observation attacks) or flip count (l0) used in any episode.
  double max_budget_used = 0.0;
};

namespace detail {

inline double vector_norm(std::span<const double> v, PerturbationBudget::Norm norm) {
  double s = 0.0;
  for (double x : v) s += norm == PerturbationBudget::Norm::l1 ? std::abs(x) : x * x;
  return norm == PerturbationBudget::Norm::l1 ? s : std::sqrt(s);
}

inline RewardSampleSet attacked_set_header(const Environment& env, const SmoothingConfig& smoothing,
                                           const AttackOptions& opt) {
  RewardSampleSet set;
  set.env_id = env.id();
  set.smoothing = smoothing;
  set.seed_base = opt.seed_base;
  set.gamma = opt.gamma;
  set.horizon = env.descriptor().horizon;
  set.values.assign(opt.episodes, 0.0);
  return set;
}

// Seeds for look-ahead rollouts; never equal to a real episode's noise key.
inline std::uint64_t lookahead_seed(std::uint64_t episode_seed, int rep) {
  return mix64(mix64(episode_seed) ^ (0x5a17c0de00000000ULL + static_cast<std::uint64_t>(rep)));
}

}  // namespace detail

/// Candidate perturbations of norm exactly epsilon: random directions
/// followed by the signed coordinate directions.
inline std::vector<std::vector<double>> perturbation_candidates(int dim, double epsilon, PerturbationBudget::Norm norm,
                                                                int num_random, std::uint64_t seed) {
  std::vector<std::vector<double>> out;
  CounterRng rng(seed, 0, NoiseStream::attack);
  for (int k = 0; k < num_random; ++k) {
    std::vector<double> d(dim);
    for (double& x : d) x = rng.gaussian();
    const double n = detail::vector_norm(d, norm);
    for (double& x : d) x = n > 0.0 ? epsilon * x / n : 0.0;
    out.push_back(std::move(d));
  }
  for (int j = 0; j < dim; ++j) {
    for (double sign : {1.0, -1.0}) {
      std::vector<double> d(dim, 0.0);
      d[j] = sign * epsilon;
      out.push_back(std::move(d));
    }
  }
  return out;
}

/// Spends the whole l2 (or l1) budget on the initial observation. Each
/// candidate is scored by short smoothed look-ahead rollouts on a copy of
/// the environment with independent noise; the lowest-scoring one is played.
inline AttackResult observation_attack(const EnvFactory& make_env, const PolicyHandle& policy,
                                       const SmoothingConfig& smoothing, PerturbationBudget::Norm norm, double epsilon,
                                       const AttackOptions& opt) {
  if (smoothing.kind != SmoothingConfig::Kind::gaussian_observation) {
    throw std::invalid_argument("observation attacks need gaussian observation smoothing");
  }
  if (norm == PerturbationBudget::Norm::l0_steps) throw std::invalid_argument("observation attacks use l2 or l1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (opt.episodes == 0) throw std::invalid_argument("need at least one episode");
  smoothing.validate();

  auto probe = make_env();
  AttackResult result{detail::attacked_set_header(*probe, smoothing, opt), 0.0};
  result.samples.metadata = {{"attack", norm_name(norm)}, {"epsilon", detail::format_double(epsilon)},
                             {"candidates", std::to_string(opt.num_candidates)}};
  const int dim = probe->descriptor().state_dim;
  std::mutex mu;

  parallel_episodes(opt.episodes, opt.workers, make_env, [&](std::size_t i, Environment& env) {
    const std::uint64_t seed = opt.seed_base + i;
    env.reset(seed);
    const auto candidates = perturbation_candidates(dim, epsilon, norm, opt.num_candidates, seed);

    std::size_t chosen = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size() && epsilon > 0.0; ++c) {
      Adversary adv;
      adv.observation = [&](int t, const Environment&, std::vector<double>& obs) {
        if (t == 0)
          for (int j = 0; j < dim; ++j) obs[j] += candidates[c][j];
      };
      CompensatedSum score;
      for (int rep = 0; rep < opt.score_reps; ++rep) {
        auto sim = env.clone();
        const auto look_seed = detail::lookahead_seed(seed, rep);
        for (int t = 0; t < opt.score_horizon && !sim->done(); ++t) {
          score += sim->step(smoothed_action(policy, smoothing, *sim, look_seed, t, &adv)).reward;
        }
      }
      if (score.value() < best_score) {
        best_score = score.value();
        chosen = c;
      }
    }

    const std::vector<double> delta = epsilon > 0.0 ? candidates[chosen] : std::vector<double>(dim, 0.0);
    const double used = detail::vector_norm(delta, norm);
    if (used > epsilon + 1e-9) throw std::logic_error("observation attack exceeded its budget");
    Adversary adv;
    adv.observation = [&](int t, const Environment&, std::vector<double>& obs) {
      if (t == 0)
        for (int j = 0; j < dim; ++j) obs[j] += delta[j];
    };
    result.samples.values[i] = run_smoothed_episode(env, policy, smoothing, seed, opt.gamma, &adv);
    std::lock_guard lock(mu);
    result.max_budget_used = std::max(result.max_budget_used, used);
  });
  return result;
}

/// While flips remain and max Q - min Q exceeds the threshold, moves the
/// centre of the action-flip distribution to the argmin-Q action. The
/// smoothing flip is then drawn as usual.
inline AttackResult l0_action_attack(const EnvFactory& make_env, const PolicyHandle& policy,
                                     const SmoothingConfig& smoothing, int max_flips, double gap_threshold,
                                     const AttackOptions& opt) {
  if (smoothing.kind != SmoothingConfig::Kind::action_flip) {
    throw std::invalid_argument("the l0 action attack needs action-flip smoothing");
  }
  if (!policy.has_q_values()) throw std::invalid_argument("the l0 action attack needs a policy with q_values");
  if (max_flips < 0) throw std::invalid_argument("max_flips must be >= 0");
  if (opt.episodes == 0) throw std::invalid_argument("need at least one episode");
  smoothing.validate();

  auto probe = make_env();
  AttackResult result{detail::attacked_set_header(*probe, smoothing, opt), 0.0};
  result.samples.metadata = {{"attack", "l0"}, {"max_flips", std::to_string(max_flips)},
                             {"gap_threshold", detail::format_double(gap_threshold)}};
  std::mutex mu;

  parallel_episodes(opt.episodes, opt.workers, make_env, [&](std::size_t i, Environment& env) {
    int flips = 0;
    Adversary adv;
    adv.action = [&](int, const Environment&, std::span<const double> obs, int center) {
      if (flips >= max_flips) return center;
      const auto q = policy.q_values(obs);
      const auto [mn, mx] = std::minmax_element(q.begin(), q.end());
      if (!(*mx - *mn > gap_threshold)) return center;
      ++flips;
      return argmin(q);
    };
    result.samples.values[i] = run_smoothed_episode(env, policy, smoothing, opt.seed_base + i, opt.gamma, &adv);
    if (flips > max_flips) throw std::logic_error("action attack exceeded its flip budget");
    std::lock_guard lock(mu);
    result.max_budget_used = std::max(result.max_budget_used, static_cast<double>(flips));
  });
  return result;
}

}  // namespace rlcert

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/rng.hpp"

namespace rlcert {

struct EnvDescriptor {
  int state_dim = 1;
  int num_actions = 2;
  int horizon = 1;
  double reward_min = 0.0;
  double reward_max = 0.0;

  void validate() const {
    if (state_dim < 1 || num_actions < 2 || horizon < 1 || !(reward_min <= reward_max)) {
      throw std::invalid_argument("invalid environment descriptor");
    }
  }
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// Episodic environment. One instance serves one worker; clone() snapshots
/// the full state (used by attacks for look-ahead).
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual const EnvDescriptor& descriptor() const = 0;
  /// Deterministic initial state for the seed.
  virtual std::span<const double> reset(std::uint64_t seed) = 0;
  virtual std::span<const double> state() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Throws std::logic_error when the episode is over or the action is invalid.
  StepResult step(int action) {
    if (done_) throw std::logic_error("step() on a terminated episode");
    if (action < 0 || action >= descriptor().num_actions) throw std::out_of_range("action index out of range");
    StepResult r = advance(action);
    ++t_;
    if (t_ >= descriptor().horizon) r.done = true;
    done_ = r.done;
    return r;
  }

  bool done() const { return done_; }
  int steps_taken() const { return t_; }

 protected:
  virtual StepResult advance(int action) = 0;

  void begin_episode(std::uint64_t seed) {
    seed_ = seed;
    t_ = 0;
    done_ = false;
  }
  std::uint64_t episode_seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
  int t_ = 0;
  bool done_ = true;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

/// Closed interval of achievable discounted returns given the per-step
/// reward range; episodes may stop early, so partial sums are covered too.
inline RewardSupport return_support(const EnvDescriptor& d, double gamma) {
  double weight = 0.0, discount = 1.0;
  for (int t = 0; t < d.horizon; ++t) {
    weight += discount;
    discount *= gamma;
  }
  return {weight * std::min(d.reward_min, 0.0), weight * std::max(d.reward_max, 0.0)};
}

// ---------------------------------------------------------------------------

/// Classic cart-pole balancing task with the standard benchmark constants.
/// State (x, x_dot, theta, theta_dot); action 0 pushes left, 1 pushes right;
/// +1 reward for every step taken, including the one that ends the episode.
class Cartpole final : public Environment {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kMassPole * kHalfLength;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
  static constexpr double kXThreshold = 2.4;
  static constexpr double kInitRange = 0.05;
  static constexpr int kHorizon = 200;

  Cartpole() : desc_{4, 2, kHorizon, 0.0, 1.0} {}

  std::string id() const override { return "cartpole"; }
  const EnvDescriptor& descriptor() const override { return desc_; }

  std::span<const double> reset(std::uint64_t seed) override {
    begin_episode(seed);
    CounterRng rng(seed, 0, NoiseStream::reset);
    for (double& v : s_) v = -kInitRange + 2.0 * kInitRange * rng.uniform();
    return s_;
  }

  /// Places the cart-pole in an explicit state (testing and look-ahead).
  void set_state(const std::array<double, 4>& s) {
    begin_episode(0);
    s_ = s;
  }

  std::span<const double> state() const override { return s_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Cartpole>(*this); }

 protected:
  StepResult advance(int action) override {
    auto [x, x_dot, theta, theta_dot] = s_;
    const double force = action == 1 ? kForceMag : -kForceMag;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
    const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                             (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
    const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
    // Explicit Euler, position first.
    x += kTau * x_dot;
    x_dot += kTau * x_acc;
    theta += kTau * theta_dot;
    theta_dot += kTau * theta_acc;
    s_ = {x, x_dot, theta, theta_dot};
    const bool fallen = x < -kXThreshold || x > kXThreshold || theta < -kThetaThreshold || theta > kThetaThreshold;
    return {1.0, fallen};
  }

 private:
  EnvDescriptor desc_;
  std::array<double, 4> s_{};
};

/// Deterministic chain with states 0..K-1, started at 0. Action 1 moves right,
/// action 0 moves left (both saturate at the ends). Reward 1 whenever the move
/// lands on the last state. The observation is the state index.
class ChainMdp final : public Environment {
 public:
  explicit ChainMdp(int num_states = 3, int horizon = 3) : desc_{1, 2, horizon, 0.0, 1.0} {
    if (num_states < 2 || num_states > 5) throw std::invalid_argument("chain needs 2..5 states");
    if (horizon < 1 || horizon > 3) throw std::invalid_argument("chain horizon must be 1..3");
    k_ = num_states;
  }

  std::string id() const override { return "chain"; }
  const EnvDescriptor& descriptor() const override { return desc_; }
  int num_states() const { return k_; }

  std::span<const double> reset(std::uint64_t seed) override {
    begin_episode(seed);
    s_[0] = 0.0;
    return s_;
  }
  std::span<const double> state() const override { return s_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainMdp>(*this); }

  int index() const { return static_cast<int>(s_[0]); }

  /// Deterministic transition used by reset/step and by exact dynamic programming.
  int next_state(int s, int action) const { return action == 1 ? std::min(s + 1, k_ - 1) : std::max(s - 1, 0); }
  double reward(int next) const { return next == k_ - 1 ? 1.0 : 0.0; }

 protected:
  StepResult advance(int action) override {
    const int next = next_state(index(), action);
    s_[0] = next;
    return {reward(next), false};
  }

 private:
  EnvDescriptor desc_;
  int k_ = 3;
  std::array<double, 1> s_{};
};

/// One-step environment whose reward is Bernoulli(mean) regardless of the
/// action, so the smoothed policy's expected return is known exactly.
class BernoulliEnv final : public Environment {
 public:
  explicit BernoulliEnv(double mean = 0.7) : desc_{1, 2, 1, 0.0, 1.0}, mean_(mean) {
    if (!(mean >= 0.0 && mean <= 1.0)) throw std::invalid_argument("Bernoulli mean must lie in [0, 1]");
  }

  std::string id() const override { return "bernoulli:" + detail::format_double(mean_); }
  const EnvDescriptor& descriptor() const override { return desc_; }
  double mean() const { return mean_; }

  std::span<const double> reset(std::uint64_t seed) override {
    begin_episode(seed);
    s_[0] = 0.0;
    return s_;
  }
  std::span<const double> state() const override { return s_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<BernoulliEnv>(*this); }

 protected:
  StepResult advance(int) override {
    CounterRng rng(episode_seed(), static_cast<std::uint64_t>(steps_taken()), NoiseStream::environment);
    return {rng.uniform() < mean_ ? 1.0 : 0.0, false};
  }

 private:
  EnvDescriptor desc_;
  double mean_;
  std::array<double, 1> s_{};
};

/// "cartpole", "chain", "chain:<K>", "bernoulli", "bernoulli:<mean>".
inline EnvFactory environment_factory(const std::string& id) {
  const auto colon = id.find(':');
  const std::string head = id.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : id.substr(colon + 1);
  if (head == "cartpole" && arg.empty()) return [] { return std::make_unique<Cartpole>(); };
  if (head == "chain") {
    const int k = arg.empty() ? 3 : static_cast<int>(detail::parse_u64(arg));
    ChainMdp probe(k);  // validates
    return [k] { return std::make_unique<ChainMdp>(k); };
  }
  if (head == "bernoulli") {
    const double mean = arg.empty() ? 0.7 : detail::parse_double(arg);
    BernoulliEnv probe(mean);
    return [mean] { return std::make_unique<BernoulliEnv>(mean); };
  }
  // Freeway and Mountain Car are not provided.
  throw std::invalid_argument("unknown environment '" + id + "'");
}

}  // namespace rlcert

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/environments.hpp"
#include "rlcert/rng.hpp"

namespace rlcert {

/// Lowest index among the maxima.
inline int argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Lowest index among the minima.
inline int argmin(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmin of an empty vector");
  return static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
}

/// Black-box policy. Only `act` and, if present, `q_values` are ever called.
struct PolicyHandle {
  using ActFn = std::function<int(std::span<const double>)>;
  using QFn = std::function<std::vector<double>(std::span<const double>)>;

  int num_actions = 2;
  ActFn act;
  QFn q_values;  // empty when the policy exposes no action values

  bool has_q_values() const { return static_cast<bool>(q_values); }

  /// Wraps an action-value function; act() is its argmax.
  static PolicyHandle from_q(int num_actions, QFn q) {
    PolicyHandle h;
    h.num_actions = num_actions;
    h.q_values = q;
    h.act = [q, num_actions](std::span<const double> obs) {
      const auto values = q(obs);
      if (static_cast<int>(values.size()) != num_actions) throw std::logic_error("q_values has the wrong length");
      return argmax(values);
    };
    return h;
  }
};

// ---------------------------------------------------------------------------
// Scripted cart-pole controller

inline constexpr std::array<double, 4> kPdGains{0.0, 0.0, 1.0, 0.5};

/// Pushes right iff w . obs > 0 with w = (0, 0, 1, 0.5) on (x, x_dot, theta, theta_dot).
/// Action values are (-s, s) with s = w . obs, so the Q-gap is 2|s|.
inline PolicyHandle pd_controller() {
  return PolicyHandle::from_q(2, [](std::span<const double> obs) {
    if (obs.size() != 4) throw std::invalid_argument("PD controller expects a 4-dimensional observation");
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += kPdGains[i] * obs[i];
    return std::vector<double>{-s, s};
  });
}

inline int pd_controller_act(std::span<const double> obs) { return pd_controller().act(obs); }

/// Always prefers `action`; used with environments whose reward ignores the action.
inline PolicyHandle constant_policy(int num_actions, int action = 0) {
  if (action < 0 || action >= num_actions) throw std::invalid_argument("constant action out of range");
  return PolicyHandle::from_q(num_actions, [num_actions, action](std::span<const double>) {
    std::vector<double> q(num_actions, 0.0);
    q[action] = 1.0;
    return q;
  });
}

// ---------------------------------------------------------------------------
// Tabular Q-learning

/// Maps observations to a finite state index.
class StateDiscretizer {
 public:
  StateDiscretizer() = default;

  /// Chain observations are state indices already.
  static StateDiscretizer identity(int num_states) {
    StateDiscretizer d;
    d.lo_ = {-0.5};
    d.hi_ = {num_states - 0.5};
    d.bins_ = {num_states};
    return d;
  }

  /// Equal-width bins per coordinate; values outside [lo, hi] go to the end bins.
  static StateDiscretizer uniform(std::vector<double> lo, std::vector<double> hi, std::vector<int> bins) {
    if (lo.size() != hi.size() || lo.size() != bins.size() || lo.empty()) {
      throw std::invalid_argument("discretizer bounds and bin counts differ in length");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!(lo[i] < hi[i]) || bins[i] < 1) throw std::invalid_argument("invalid discretizer bin specification");
    }
    StateDiscretizer d;
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    d.bins_ = std::move(bins);
    return d;
  }

  static StateDiscretizer cartpole() {
    return uniform({-2.4, -3.0, -0.21, -3.5}, {2.4, 3.0, 0.21, 3.5}, {3, 3, 8, 6});
  }

  int num_states() const {
    int n = 1;
    for (int b : bins_) n *= b;
    return n;
  }

  int index(std::span<const double> obs) const {
    if (obs.size() != bins_.size()) throw std::invalid_argument("observation dimension does not match the discretizer");
    int idx = 0;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      const double u = (obs[i] - lo_[i]) / (hi_[i] - lo_[i]);
      const int b = std::clamp(static_cast<int>(std::floor(u * bins_[i])), 0, bins_[i] - 1);
      idx = idx * bins_[i] + b;
    }
    return idx;
  }

 private:
  std::vector<double> lo_, hi_;
  std::vector<int> bins_;
};

inline StateDiscretizer discretizer_for(const Environment& env) {
  if (const auto* chain = dynamic_cast<const ChainMdp*>(&env)) return StateDiscretizer::identity(chain->num_states());
  if (dynamic_cast<const Cartpole*>(&env)) return StateDiscretizer::cartpole();
  throw std::invalid_argument("environment '" + env.id() + "' has no discretization");
}

struct QTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;  // row-major [state][action]

  QTable() = default;
  QTable(int states, int actions) : num_states(states), num_actions(actions), values(std::size_t(states) * actions, 0.0) {}

  std::span<double> row(int s) { return {values.data() + std::size_t(s) * num_actions, std::size_t(num_actions)}; }
  std::span<const double> row(int s) const {
    return {values.data() + std::size_t(s) * num_actions, std::size_t(num_actions)};
  }

  friend bool operator==(const QTable&, const QTable&) = default;
};

inline constexpr std::string_view kQTableMagic = "# rlcert-qtable v1";

/// "# rlcert-qtable v1 states=S actions=N", then one line of N values per state.
inline void write_qtable(std::ostream& os, const QTable& q) {
  os << kQTableMagic << " states=" << q.num_states << " actions=" << q.num_actions << '\n';
  for (int s = 0; s < q.num_states; ++s) {
    const auto r = q.row(s);
    for (int a = 0; a < q.num_actions; ++a) os << (a ? " " : "") << detail::format_double(r[a]);
    os << '\n';
  }
}

inline QTable read_qtable(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind(kQTableMagic, 0) != 0) {
    throw std::runtime_error("not a Q-table file (missing header)");
  }
  int states = -1, actions = -1;
  std::istringstream tokens(header.substr(kQTableMagic.size()));
  std::string tok;
  while (tokens >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed Q-table header token '" + tok + "'");
    const auto val = static_cast<int>(detail::parse_u64(tok.substr(eq + 1)));
    if (tok.substr(0, eq) == "states") states = val;
    if (tok.substr(0, eq) == "actions") actions = val;
  }
  if (states < 1 || actions < 2) throw std::runtime_error("Q-table header lacks states or actions");
  QTable q(states, actions);
  for (double& v : q.values) {
    std::string word;
    if (!(is >> word)) throw std::runtime_error("Q-table is truncated");
    v = detail::parse_double(word);
  }
  return q;
}

inline PolicyHandle tabular_policy(QTable table, StateDiscretizer disc) {
  auto q = std::make_shared<const QTable>(std::move(table));
  auto d = std::make_shared<const StateDiscretizer>(std::move(disc));
  return PolicyHandle::from_q(q->num_actions, [q, d](std::span<const double> obs) {
    const auto r = q->row(d->index(obs));
    return std::vector<double>(r.begin(), r.end());
  });
}

struct QLearningOptions {
  int episodes = 500;
  double learning_rate = 0.5;
  double discount = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;  // linear decay over the episodes
  std::uint64_t seed = 0;
};

/// Epsilon-greedy one-step Q-learning. Deterministic for a given seed.
inline QTable train_tabular_q(Environment& env, const StateDiscretizer& disc, const QLearningOptions& opt) {
  if (opt.episodes < 0) throw std::invalid_argument("episode count must be >= 0");
  const int n_actions = env.descriptor().num_actions;
  QTable q(disc.num_states(), n_actions);
  for (int ep = 0; ep < opt.episodes; ++ep) {
    const double frac = opt.episodes > 1 ? double(ep) / (opt.episodes - 1) : 1.0;
    const double explore = opt.epsilon_start + (opt.epsilon_end - opt.epsilon_start) * frac;
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(ep);
    int s = disc.index(env.reset(seed));
    CounterRng rng(seed, 0, NoiseStream::training);
    while (!env.done()) {
      const int a = rng.uniform() < explore ? static_cast<int>(rng.below(n_actions)) : argmax(q.row(s));
      const auto [r, done] = env.step(a);
      const int next = disc.index(env.state());
      const auto next_row = q.row(next);
      const double target = r + (done ? 0.0 : opt.discount * *std::max_element(next_row.begin(), next_row.end()));
      double& cell = q.row(s)[a];
      cell += opt.learning_rate * (target - cell);
      s = next;
    }
  }
  return q;
}

inline PolicyHandle train_tabular_policy(Environment& env, const QLearningOptions& opt) {
  auto disc = discretizer_for(env);
  return tabular_policy(train_tabular_q(env, disc, opt), disc);
}

// ---------------------------------------------------------------------------
// Smoothing wrappers

/// policy.act(obs + Delta), Delta ~ N(0, sigma^2 I) drawn from `noise`.
inline int gaussian_smooth_act(const PolicyHandle& policy, std::span<const double> obs, double sigma,
                               CounterRng& noise) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  std::vector<double> noisy(obs.begin(), obs.end());
  for (double& v : noisy) v += sigma * noise.gaussian();
  return policy.act(noisy);
}

/// Keeps `center` with probability 1 - p, otherwise picks one of the other
/// actions uniformly.
inline int flip_around(int center, int num_actions, double p, CounterRng& noise) {
  const double u = noise.uniform();
  const auto pick = static_cast<int>(noise.below(static_cast<std::uint64_t>(num_actions - 1)));
  if (u >= p) return center;
  return pick < center ? pick : pick + 1;
}

inline int action_flip_act(const PolicyHandle& policy, std::span<const double> obs, double p, CounterRng& noise) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("flip probability must lie in [0, 1)");
  if (!policy.has_q_values()) throw std::invalid_argument("action-flip smoothing needs a policy with q_values");
  return flip_around(argmax(policy.q_values(obs)), policy.num_actions, p, noise);
}

}  // namespace rlcert

#pragma once

// Batch experiments shared by the command-line tool and the acceptance
// suite: configuration, certification grids, attack grids and oracle sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rlcert/attacks.hpp"
#include "rlcert/certify.hpp"
#include "rlcert/divergence.hpp"
#include "rlcert/dual_solver.hpp"
#include "rlcert/oracles.hpp"
#include "rlcert/primal_oracle.hpp"

namespace rlcert {

/// Raised for anything wrong with a configuration file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  bool has_experiment = false;  // oracle-only configs may omit [experiment]
  std::string env = "cartpole";
  std::string policy = "pd";  // pd | constant | tabular | qtable:<path>
  int q_episodes = 500;
  std::uint64_t q_seed = 0;

  SmoothingConfig smoothing = SmoothingConfig::gaussian(0.2);
  PerturbationBudget::Norm norm = PerturbationBudget::Norm::l2;
  std::vector<double> epsilons{0.0};
  std::vector<DivergenceSpec> divergences;  // empty: defaults for the norm

  std::size_t m_opt = 1000;
  std::size_t m_eval = 10000;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  bool timing = true;
  std::string samples_in;   // prefix of saved phase-1/phase-2 sample files
  std::string samples_out;  // prefix to save them under

  // [attack]
  std::size_t attack_episodes = 1000;
  std::uint64_t attack_seed = 1u << 30;
  int attack_candidates = 8;
  int score_horizon = 20;
  int score_reps = 5;
  double gap_threshold = 0.0;

  // [oracle]
  int conjugate_points = 200;
  int budget_triples = 100;
  int primal_instances = 50;
  std::uint64_t oracle_seed = 1;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Strict typed read of an optional key: a present but malformed value throws.
template <class T>
T read_key(const boost::property_tree::ptree& section, const std::string& key, T fallback) {
  const auto raw = section.get_optional<std::string>(key);
  if (!raw) return fallback;
  const std::string text = trim(*raw);
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_floating_point_v<T>) {
    return parse_double(text);
  } else {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("key '" + key + "': malformed integer '" + text + "'");
    }
    return v;
  }
}

template <class T>
T require_key(const boost::property_tree::ptree& section, const std::string& key) {
  if (!section.get_optional<std::string>(key)) throw ConfigError("missing key '" + key + "'");
  return read_key<T>(section, key, T{});
}

}  // namespace detail

/// "a, b, c" or "start:step:stop" (inclusive; points are start + k * step).
inline std::vector<double> parse_grid(const std::string& text) try {
  const auto parts = detail::split(text, ':');
  if (parts.size() == 3 && text.find(',') == std::string::npos) {
    const double start = detail::parse_double(parts[0]);
    const double step = detail::parse_double(parts[1]);
    const double stop = detail::parse_double(parts[2]);
    if (!(step > 0.0) || stop < start) throw ConfigError("grid '" + text + "' is empty");
    const auto count = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> g;
    for (int k = 0; k < count; ++k) g.push_back(start + k * step);
    return g;
  }
  std::vector<double> g;
  for (const auto& item : detail::split(text, ',')) g.push_back(detail::parse_double(item));
  if (g.empty()) throw ConfigError("grid '" + text + "' is empty");
  return g;
} catch (const ConfigError&) {
  throw;
} catch (const std::exception& e) {
  throw ConfigError(e.what());
}

/// INI file with [experiment], [attack] and [oracle] sections; certify and
/// attack runs need [experiment].
inline ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  static const std::vector<std::string> known_sections{"experiment", "attack", "oracle"};
  for (const auto& [name, _] : tree) {
    if (std::find(known_sections.begin(), known_sections.end(), name) == known_sections.end()) {
      throw ConfigError("unknown section [" + name + "]");
    }
  }

  auto check_keys = [](const pt::ptree& section, const std::vector<std::string>& known) {
    for (const auto& [key, _] : section) {
      if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown key '" + key + "'");
    }
  };

  ExperimentConfig c;
  try {
    const auto ex = tree.get_child_optional("experiment");
    c.has_experiment = static_cast<bool>(ex);
    if (ex) {
      check_keys(*ex, {"env", "policy", "q_episodes", "q_seed", "smoothing", "sigma", "p", "norm", "epsilons",
                       "divergences", "m_opt", "m_eval", "alpha", "seed", "gamma", "timing", "samples_in",
                       "samples_out"});
      c.env = detail::read_key<std::string>(*ex, "env", c.env);
      c.policy = detail::read_key<std::string>(*ex, "policy", c.policy);
      c.q_episodes = detail::read_key<int>(*ex, "q_episodes", c.q_episodes);
      c.q_seed = detail::read_key<std::uint64_t>(*ex, "q_seed", c.q_seed);
      const auto kind = detail::read_key<std::string>(*ex, "smoothing", "gaussian");
      if (kind == "gaussian" || kind == "gaussian_observation") {
        c.smoothing = SmoothingConfig::gaussian(detail::require_key<double>(*ex, "sigma"));
      } else if (kind == "action_flip") {
        c.smoothing = SmoothingConfig::action_flip(detail::require_key<double>(*ex, "p"));
      } else {
        throw ConfigError("unknown smoothing '" + kind + "'");
      }
      c.norm = parse_norm(detail::read_key<std::string>(*ex, "norm", "l2"));
      c.epsilons = parse_grid(detail::read_key<std::string>(*ex, "epsilons", "0"));
      for (const auto& d : detail::split(detail::read_key<std::string>(*ex, "divergences", ""), ',')) {
        c.divergences.push_back(parse_divergence(d));
      }
      c.m_opt = detail::read_key<std::size_t>(*ex, "m_opt", c.m_opt);
      c.m_eval = detail::read_key<std::size_t>(*ex, "m_eval", c.m_eval);
      c.alpha = detail::read_key<double>(*ex, "alpha", c.alpha);
      c.seed = detail::read_key<std::uint64_t>(*ex, "seed", c.seed);
      c.gamma = detail::read_key<double>(*ex, "gamma", c.gamma);
      const auto timing = detail::read_key<std::string>(*ex, "timing", "on");
      if (timing != "on" && timing != "off") throw ConfigError("timing must be on or off");
      c.timing = timing == "on";
      c.samples_in = detail::read_key<std::string>(*ex, "samples_in", "");
      c.samples_out = detail::read_key<std::string>(*ex, "samples_out", "");
    }

    if (const auto at = tree.get_child_optional("attack")) {
      check_keys(*at, {"episodes", "seed", "candidates", "score_horizon", "score_reps", "gap_threshold"});
      c.attack_episodes = detail::read_key<std::size_t>(*at, "episodes", c.attack_episodes);
      c.attack_seed = detail::read_key<std::uint64_t>(*at, "seed", c.attack_seed);
      c.attack_candidates = detail::read_key<int>(*at, "candidates", c.attack_candidates);
      c.score_horizon = detail::read_key<int>(*at, "score_horizon", c.score_horizon);
      c.score_reps = detail::read_key<int>(*at, "score_reps", c.score_reps);
      const auto gap = detail::read_key<std::string>(*at, "gap_threshold", "0");
      c.gap_threshold = gap == "inf" ? std::numeric_limits<double>::infinity() : detail::parse_double(gap);
    }
    if (const auto orc = tree.get_child_optional("oracle")) {
      check_keys(*orc, {"conjugate_points", "budget_triples", "primal_instances", "seed"});
      c.conjugate_points = detail::read_key<int>(*orc, "conjugate_points", c.conjugate_points);
      c.budget_triples = detail::read_key<int>(*orc, "budget_triples", c.budget_triples);
      c.primal_instances = detail::read_key<int>(*orc, "primal_instances", c.primal_instances);
      c.oracle_seed = detail::read_key<std::uint64_t>(*orc, "seed", c.oracle_seed);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  if (c.m_opt == 0 || c.m_eval == 0) throw ConfigError("m_opt and m_eval must be positive");
  if (c.attack_episodes == 0 || c.attack_candidates < 0 || c.score_horizon < 1 || c.score_reps < 1) {
    throw ConfigError("attack settings must be positive");
  }
  if (c.conjugate_points < 2 || c.budget_triples < 1 || c.primal_instances < 1) {
    throw ConfigError("oracle sweeps need conjugate_points >= 2 and positive counts");
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!compatible(c.smoothing, c.norm)) throw ConfigError("norm does not match the smoothing kind");
  try {
    const auto make = environment_factory(c.env);
    const int horizon = make()->descriptor().horizon;
    for (double e : c.epsilons) PerturbationBudget{c.norm, e}.validate(horizon);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(is);
}

inline PolicyHandle make_policy(const ExperimentConfig& c) try {
  const auto make = environment_factory(c.env);
  auto env = make();
  if (c.policy == "pd") return pd_controller();
  if (c.policy == "constant") return constant_policy(env->descriptor().num_actions);
  if (c.policy == "tabular") {
    QLearningOptions opt;
    opt.episodes = c.q_episodes;
    opt.seed = c.q_seed;
    return train_tabular_policy(*env, opt);
  }
  if (c.policy.rfind("qtable:", 0) == 0) {
    std::ifstream is(c.policy.substr(7));
    if (!is) throw ConfigError("cannot open Q-table '" + c.policy.substr(7) + "'");
    return tabular_policy(read_qtable(is), discretizer_for(*env));
  }
  throw ConfigError("unknown policy '" + c.policy + "'");
} catch (const ConfigError&) {
  throw;
} catch (const std::exception& e) {
  throw ConfigError("policy '" + c.policy + "': " + e.what());
}

inline CertifyOptions certify_options(const ExperimentConfig& c, int workers) {
  CertifyOptions opt;
  opt.m_opt = c.m_opt;
  opt.m_eval = c.m_eval;
  opt.alpha = c.alpha;
  opt.seed = c.seed;
  opt.gamma = c.gamma;
  opt.workers = workers;
  opt.candidates = c.divergences;
  return opt;
}

/// One certificate per grid point. Sample sets are drawn once (or loaded).
inline std::vector<CertifiedBound> run_certify(const ExperimentConfig& c, const PolicyHandle& policy, int workers) {
  const auto make = environment_factory(c.env);
  const auto opt = certify_options(c, workers);
  CertificationSamples samples;
  if (!c.samples_in.empty()) {
    samples.phase1 = load_sample_set(c.samples_in + ".phase1");
    samples.phase2 = load_sample_set(c.samples_in + ".phase2");
    const auto desc = make()->descriptor();
    samples.support = return_support(desc, samples.phase1.gamma);
    samples.num_actions = desc.num_actions;
  } else {
    samples = draw_certification_samples(make, c.env, policy, c.smoothing, opt);
  }
  if (!c.samples_out.empty()) {
    save_sample_set(c.samples_out + ".phase1", samples.phase1);
    save_sample_set(c.samples_out + ".phase2", samples.phase2);
  }
  std::vector<CertifiedBound> rows;
  for (double e : c.epsilons) rows.push_back(certify_with_samples(samples, c.smoothing, {c.norm, e}, opt));
  return rows;
}

inline std::vector<CertifiedBound> run_certify(const ExperimentConfig& c, int workers) {
  return run_certify(c, make_policy(c), workers);
}

struct AttackRow {
  double epsilon = 0.0;
  SampleStats stats;
  double hoeffding_slack = 0.0;  // at confidence 1 - alpha over the return support
  double budget_used = 0.0;
  std::size_t episodes = 0;
};

inline std::vector<AttackRow> run_attack(const ExperimentConfig& c, const PolicyHandle& policy, int workers) {
  const auto make = environment_factory(c.env);
  const auto support = return_support(make()->descriptor(), c.gamma);
  AttackOptions opt;
  opt.episodes = c.attack_episodes;
  opt.seed_base = c.attack_seed;
  opt.gamma = c.gamma;
  opt.workers = workers;
  opt.num_candidates = c.attack_candidates;
  opt.score_horizon = c.score_horizon;
  opt.score_reps = c.score_reps;
  std::vector<AttackRow> rows;
  for (double e : c.epsilons) {
    const AttackResult r = c.norm == PerturbationBudget::Norm::l0_steps
                               ? l0_action_attack(make, policy, c.smoothing, static_cast<int>(e), c.gap_threshold, opt)
                               : observation_attack(make, policy, c.smoothing, c.norm, e, opt);
    AttackRow row;
    row.epsilon = e;
    row.stats = empirical_mean_and_range(r.samples.values);
    row.hoeffding_slack = hoeffding_radius(support.hi - support.lo, r.samples.size(), c.alpha);
    row.budget_used = r.max_budget_used;
    row.episodes = r.samples.size();
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<AttackRow> run_attack(const ExperimentConfig& c, int workers) {
  return run_attack(c, make_policy(c), workers);
}

inline constexpr const char* kAttackCsvHeader = "epsilon,attacked_mean,attacked_min,attacked_max,hoeffding_slack,budget_used,episodes";

inline void write_attack_csv(std::ostream& os, const std::vector<AttackRow>& rows) {
  os << kAttackCsvHeader << '\n';
  for (const auto& r : rows) {
    os << csv_number(r.epsilon) << ',' << csv_number(r.stats.mean) << ',' << csv_number(r.stats.min) << ','
       << csv_number(r.stats.max) << ',' << csv_number(r.hoeffding_slack) << ',' << csv_number(r.budget_used) << ','
       << r.episodes << '\n';
  }
}

// ---------------------------------------------------------------------------
// Oracle sweeps

struct OracleSweep {
  double max_deviation = 0.0;
  int points = 0;
  int failures = 0;  // oracle could not produce a value
  double seconds = 0.0;
};

inline std::vector<DivergenceSpec> oracle_divergences() {
  return {DivergenceSpec::hockey_stick(0.5), DivergenceSpec::hockey_stick(1.0), DivergenceSpec::hockey_stick(2.0),
          DivergenceSpec::hockey_stick(5.0), DivergenceSpec::total_variation(), DivergenceSpec::power_renyi(0.5),
          DivergenceSpec::power_renyi(2.0), DivergenceSpec::power_renyi(4.0)};
}

/// Closed-form conjugate against the grid oracle on `points` evenly spaced
/// arguments per divergence, spanning [-5, min(5, domain edge)] (open edges
/// stop 0.1 short so the maximiser stays inside the oracle's grid).
inline OracleSweep conjugate_sweep(const std::vector<DivergenceSpec>& specs, int points) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleSweep out;
  for (const auto& spec : specs) {
    const double hi = conjugate_domain_open(spec) ? conjugate_domain_max(spec) - 0.1
                                                  : std::min(5.0, conjugate_domain_max(spec));
    const double lo = -5.0;
    for (int k = 0; k < points; ++k) {
      const double y = lo + (hi - lo) * k / (points - 1);
      const auto closed = conjugate(spec, y);
      const auto numeric = oracle::numeric_conjugate_oracle(spec, y, 200.0, 20000);
      ++out.points;
      if (!closed || !numeric) {
        ++out.failures;
        continue;
      }
      out.max_deviation = std::max(out.max_deviation, std::abs(*closed - *numeric));
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// hs_budget and tv_budget against quadrature on random
/// (epsilon in [0, 3], sigma in [0.1, 2], lambda in [0.5, 5]) triples.
inline OracleSweep budget_sweep(int triples, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> eps(0.0, 3.0), sig(0.1, 2.0), lam(0.5, 5.0);
  OracleSweep out;
  for (int k = 0; k < triples; ++k) {
    const double e = eps(gen), s = sig(gen), l = lam(gen);
    try {
      const double hs = oracle::numeric_budget_oracle(DivergenceSpec::hockey_stick(l), e, s);
      const double tv = oracle::numeric_budget_oracle(DivergenceSpec::total_variation(), e, s);
      out.max_deviation = std::max({out.max_deviation, std::abs(hs_budget(e, s, l) - hs), std::abs(tv_budget(e, s) - tv)});
    } catch (const std::runtime_error&) {
      ++out.failures;
    }
    out.points += 2;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct DualitySweep {
  int instances = 0;
  int weak_violations = 0;  // dual above primal beyond rounding (1e-12)
  double max_gap = 0.0;
  double seconds = 0.0;
};

/// Random finite-support instances: up to 32 outcomes, budgets in [0, 0.6],
/// divergences cycling through hockey-stick, total variation and power.
inline DualitySweep duality_sweep(int instances, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> size(2, 32);
  std::uniform_real_distribution<double> u(0.02, 1.0), r(0.0, 1.0), b(0.0, 0.6), lam(0.5, 5.0), beta_lo(0.2, 0.9),
      beta_hi(1.2, 5.0);
  DualitySweep out;
  for (int k = 0; k < instances; ++k) {
    FinitePrimal pb;
    switch (k % 4) {
      case 0: pb.spec = DivergenceSpec::hockey_stick(lam(gen)); break;
      case 1: pb.spec = DivergenceSpec::total_variation(); break;
      case 2: pb.spec = DivergenceSpec::power_renyi(beta_lo(gen)); break;
      default: pb.spec = DivergenceSpec::power_renyi(beta_hi(gen)); break;
    }
    const int n = size(gen);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      pb.probs.push_back(u(gen));
      pb.rewards.push_back(r(gen));
      total += pb.probs.back();
    }
    for (double& p : pb.probs) p /= total;
    pb.budget = b(gen);
    const double primal = primal_oracle(pb);
    const double dual = solve_dual(pb.rewards, pb.probs, pb.spec, pb.budget).objective;
    if (dual > primal + 1e-12) ++out.weak_violations;
    out.max_gap = std::max(out.max_gap, primal - dual);
    ++out.instances;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace rlcert

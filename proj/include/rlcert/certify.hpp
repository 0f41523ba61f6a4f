#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/divergence.hpp"
#include "rlcert/dual_solver.hpp"
#include "rlcert/environments.hpp"
#include "rlcert/policies.hpp"
#include "rlcert/rollout.hpp"

namespace rlcert {

struct CertifiedBound {
  double bound = 0.0;      // reported lower bound, never below the reward floor
  double raw_bound = 0.0;  // nu * (eta - E_U) before clamping
  double confidence = 0.99;
  double alpha = 0.01;
  double zeta = 0.0;
  double h_range = 0.0;
  double eps_d = 0.0;
  double empirical_mean = 0.0;  // evaluation-phase sample mean
  DualSolution dual;
  DivergenceSpec spec;
  PerturbationBudget budget;
  std::size_t m_opt = 0;
  std::size_t m_eval = 0;
  std::uint64_t seed_opt = 0;
  std::uint64_t seed_eval = 0;
  double solve_ms = 0.0;

  /// key=value lines.
  std::string to_record() const {
    std::ostringstream os;
    auto kv = [&](const char* k, const std::string& v) { os << k << '=' << v << '\n'; };
    auto num = [](double x) { return detail::format_double(x); };
    kv("bound", num(bound));
    kv("raw_bound", num(raw_bound));
    kv("confidence", num(confidence));
    kv("alpha", num(alpha));
    kv("nu", num(dual.nu));
    kv("eta", num(dual.eta));
    kv("dual_objective", num(dual.objective));
    kv("eps_d", num(eps_d));
    kv("zeta", num(zeta));
    kv("h_range", num(h_range));
    kv("empirical_mean", num(empirical_mean));
    kv("divergence", spec.name());
    kv("norm", norm_name(budget.norm));
    kv("epsilon", num(budget.epsilon));
    kv("m_opt", std::to_string(m_opt));
    kv("m_eval", std::to_string(m_eval));
    kv("seed_opt", std::to_string(seed_opt));
    kv("seed_eval", std::to_string(seed_eval));
    return os.str();
  }
};

/// Divergences tried for a norm when none are configured. The choice is made
/// on phase-1 data only.
inline std::vector<DivergenceSpec> default_candidates(PerturbationBudget::Norm norm) {
  std::vector<DivergenceSpec> out;
  switch (norm) {
    case PerturbationBudget::Norm::l2:
      for (double lambda : {1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0}) out.push_back(DivergenceSpec::hockey_stick(lambda));
      break;
    case PerturbationBudget::Norm::l1:
      out.push_back(DivergenceSpec::total_variation());
      break;
    case PerturbationBudget::Norm::l0_steps:
      for (double beta : {0.25, 0.5, 0.75, 1.5, 2.0, 4.0}) out.push_back(DivergenceSpec::power_renyi(beta));
      break;
  }
  return out;
}

struct CertifyInputs {
  SmoothingConfig smoothing;
  PerturbationBudget budget;
  int num_actions = 2;
  RewardSupport support;
  std::vector<DivergenceSpec> candidates;  // empty: default_candidates(budget.norm)
  double alpha = 0.01;
  std::uint64_t seed_opt = 0;
  std::uint64_t seed_eval = 0;
};

/// Two-phase certificate from already collected samples.
///
/// Phase 1 solves the dual for each candidate divergence and keeps the one
/// whose projected bound nu (eta - mean_1 h - zeta) is largest. Phase 2
/// evaluates h on fresh samples, adds the Hoeffding radius for the range of h
/// over the support and returns nu (eta - E_U), clamped at the support floor.
inline CertifiedBound certify_from_samples(std::span<const double> phase1, std::span<const double> phase2,
                                           const CertifyInputs& in) {
  if (phase1.empty() || phase2.empty()) throw std::invalid_argument("both certification phases need samples");
  if (!(in.alpha > 0.0 && in.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const auto candidates = in.candidates.empty() ? default_candidates(in.budget.norm) : in.candidates;

  CertifiedBound best;
  best.raw_bound = -std::numeric_limits<double>::infinity();
  double best_projection = -std::numeric_limits<double>::infinity();
  bool found = false;
  double solve_ms = 0.0;
  for (const auto& spec : candidates) {
    const double eps_d = divergence_budget(spec, in.budget, in.smoothing, in.num_actions);
    const auto t0 = std::chrono::steady_clock::now();
    const DualSolution sol = solve_dual(phase1, spec, eps_d, in.support);
    solve_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!sol.feasible) continue;
    const double range = certificate_term_range(spec, eps_d, sol.nu, sol.eta, in.support);
    if (!std::isfinite(range)) continue;
    const double zeta = hoeffding_radius(range, phase2.size(), in.alpha);
    const double projection = certificate_value(spec, eps_d, sol.nu, sol.eta, phase1, zeta);
    if (!found || projection > best_projection) {
      found = true;
      best_projection = projection;
      best.dual = sol;
      best.spec = spec;
      best.eps_d = eps_d;
      best.h_range = range;
      best.zeta = zeta;
    }
  }
  if (!found) throw std::runtime_error("no candidate divergence produced a feasible certificate");

  best.raw_bound = certificate_value(best.spec, best.eps_d, best.dual.nu, best.dual.eta, phase2, best.zeta);
  best.bound = std::max(best.raw_bound, in.support.lo);
  best.alpha = in.alpha;
  best.confidence = 1.0 - in.alpha;
  best.empirical_mean = empirical_mean_and_range(phase2).mean;
  best.budget = in.budget;
  best.m_opt = phase1.size();
  best.m_eval = phase2.size();
  best.seed_opt = in.seed_opt;
  best.seed_eval = in.seed_eval;
  best.solve_ms = solve_ms;
  return best;
}

struct CertifyOptions {
  std::size_t m_opt = 1000;
  std::size_t m_eval = 10000;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  int workers = 1;
  std::vector<DivergenceSpec> candidates;
};

/// Phase-1 and phase-2 sample sets, drawn from disjoint seed ranges.
struct CertificationSamples {
  RewardSampleSet phase1;
  RewardSampleSet phase2;
  RewardSupport support;
  int num_actions = 2;
};

inline CertificationSamples draw_certification_samples(const EnvFactory& make_env, const std::string& env_id,
                                                       const PolicyHandle& policy, const SmoothingConfig& smoothing,
                                                       const CertifyOptions& opt) {
  if (opt.m_opt == 0 || opt.m_eval == 0) throw std::invalid_argument("both certification phases need samples");
  if (opt.m_opt > kEvalSeedOffset) throw std::invalid_argument("phase-1 sample count overlaps the phase-2 seed range");
  const auto desc = make_env()->descriptor();
  CertificationSamples s;
  s.phase1 = smoothing_reward_set(make_env, env_id, policy, smoothing, opt.m_opt, opt.seed, opt.gamma, opt.workers);
  s.phase2 = smoothing_reward_set(make_env, env_id, policy, smoothing, opt.m_eval, opt.seed + kEvalSeedOffset,
                                  opt.gamma, opt.workers);
  s.support = return_support(desc, opt.gamma);
  s.num_actions = desc.num_actions;
  return s;
}

inline CertifiedBound certify_with_samples(const CertificationSamples& s, const SmoothingConfig& smoothing,
                                           const PerturbationBudget& budget, const CertifyOptions& opt) {
  CertifyInputs in;
  in.smoothing = smoothing;
  in.budget = budget;
  in.num_actions = s.num_actions;
  in.support = s.support;
  in.candidates = opt.candidates;
  in.alpha = opt.alpha;
  in.seed_opt = s.phase1.seed_base;
  in.seed_eval = s.phase2.seed_base;
  return certify_from_samples(s.phase1.values, s.phase2.values, in);
}

/// Certified lower bound on the mean cumulative reward under `budget`.
inline CertifiedBound certify(const EnvFactory& make_env, const std::string& env_id, const PolicyHandle& policy,
                              const SmoothingConfig& smoothing, const PerturbationBudget& budget,
                              const CertifyOptions& opt = {}) {
  budget.validate(make_env()->descriptor().horizon);
  if (!compatible(smoothing, budget.norm)) throw std::invalid_argument("budget norm does not match the smoothing");
  const auto samples = draw_certification_samples(make_env, env_id, policy, smoothing, opt);
  return certify_with_samples(samples, smoothing, budget, opt);
}

/// One certificate per budget; the sample sets are drawn once and shared.
inline std::vector<CertifiedBound> certify_grid(const EnvFactory& make_env, const std::string& env_id,
                                                const PolicyHandle& policy, const SmoothingConfig& smoothing,
                                                const std::vector<PerturbationBudget>& budgets,
                                                const CertifyOptions& opt = {}) {
  const int horizon = make_env()->descriptor().horizon;
  for (const auto& b : budgets) {
    b.validate(horizon);
    if (!compatible(smoothing, b.norm)) throw std::invalid_argument("budget norm does not match the smoothing");
  }
  const auto samples = draw_certification_samples(make_env, env_id, policy, smoothing, opt);
  std::vector<CertifiedBound> out;
  for (const auto& b : budgets) out.push_back(certify_with_samples(samples, smoothing, b, opt));
  return out;
}

// ---------------------------------------------------------------------------
// CSV export

inline std::string csv_number(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite value in CSV output");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", x);
  return buf;
}

inline constexpr const char* kCertifyCsvHeader = "epsilon,eps_d,bound,nu,eta,zeta,empirical_mean,runtime_ms";

/// With `timing` off the runtime column is written as 0 so reruns compare byte for byte.
inline void write_certify_csv(std::ostream& os, const std::vector<CertifiedBound>& rows, bool timing = true) {
  os << kCertifyCsvHeader << '\n';
  for (const auto& r : rows) {
    os << csv_number(r.budget.epsilon) << ',' << csv_number(r.eps_d) << ',' << csv_number(r.bound) << ','
       << csv_number(r.dual.nu) << ',' << csv_number(r.dual.eta) << ',' << csv_number(r.zeta) << ','
       << csv_number(r.empirical_mean) << ',' << csv_number(timing ? r.solve_ms : 0.0) << '\n';
  }
}

}  // namespace rlcert

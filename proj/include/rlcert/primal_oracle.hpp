#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rlcert/core_model.hpp"
#include "rlcert/divergence.hpp"

namespace rlcert {

/// min_z sum_i p_i z_i J_i  s.t.  z >= 0, sum_i p_i z_i = 1, sum_i p_i f(z_i) <= budget.
struct FinitePrimal {
  std::vector<double> probs;
  std::vector<double> rewards;
  DivergenceSpec spec;
  double budget = 0.0;

  void validate() const {
    spec.validate();
    if (probs.empty() || probs.size() != rewards.size()) {
      throw std::invalid_argument("primal instance needs equally long, non-empty probs and rewards");
    }
    if (probs.size() > 32) throw std::invalid_argument("primal oracle supports at most 32 outcomes");
    CompensatedSum total;
    for (double p : probs) {
      if (!(p > 0.0)) throw std::invalid_argument("outcome probabilities must be > 0");
      total += p;
    }
    if (std::abs(total.value() - 1.0) > 1e-9) throw std::invalid_argument("outcome probabilities must sum to 1");
    if (!(budget >= 0.0)) throw std::invalid_argument("divergence budget must be >= 0");
  }
};

namespace detail {

/// Solves the primal through its Lagrangian
///   sum_i p_i [(J_i - tau) z_i + mu f(z_i)] + tau,
/// minimised coordinate-wise by bisection on the (right) derivative of f.
/// tau enforces sum p z = 1 and mu is bisected until the divergence meets the
/// budget. Piecewise-linear generators get a 1e-10 (z-1)^2 term so that the
/// coordinate minimisers are unique; the returned point is always feasible
/// for the unregularised problem, so the value never drops below the true minimum.
class PrimalSolver {
 public:
  explicit PrimalSolver(const FinitePrimal& problem) : pb_(problem) {
    kappa_ = pb_.spec.piecewise_linear() ? 1e-10 : 0.0;
  }

  double solve() const {
    const auto& J = pb_.rewards;
    const auto& p = pb_.probs;
    const double j_min = *std::min_element(J.begin(), J.end());

    // All mass on the smallest reward is optimal when the budget allows it.
    double p_min = 0.0;
    for (std::size_t i = 0; i < J.size(); ++i)
      if (J[i] == j_min) p_min += p[i];
    std::vector<double> z(J.size(), 0.0);
    for (std::size_t i = 0; i < J.size(); ++i)
      if (J[i] == j_min) z[i] = 1.0 / p_min;
    if (feasible(z)) return j_min;

    // f > 0 away from 1 forces z == 1 at zero budget.
    const bool definite = pb_.spec.kind != DivergenceSpec::Kind::hockey_stick || pb_.spec.param == 1.0;
    if (pb_.budget == 0.0 && definite) return expectation(std::vector<double>(J.size(), 1.0));

    // divergence(z(mu)) is nonincreasing in mu; keep the feasible end.
    double log_lo = -40.0, log_hi = 40.0;
    std::vector<double> z_hi = normalized_minimizer(std::exp(log_hi));
    std::vector<double> z_lo = normalized_minimizer(std::exp(log_lo));
    if (!feasible(z_hi)) throw std::runtime_error("primal oracle: no feasible multiplier found");
    for (int iter = 0; iter < 200 && log_hi - log_lo > 1e-13; ++iter) {
      const double mid = 0.5 * (log_lo + log_hi);
      auto zm = normalized_minimizer(std::exp(mid));
      if (feasible(zm)) {
        log_hi = mid;
        z_hi = std::move(zm);
      } else {
        log_lo = mid;
        z_lo = std::move(zm);
      }
    }
    // Near a kink of f the minimiser jumps across the budget; both ends then
    // minimise the same Lagrangian, the divergence is affine between them and
    // the mix that spends the budget exactly is optimal.
    const double d_lo = divergence(z_lo), d_hi = divergence(z_hi);
    if (d_lo > pb_.budget && d_hi < pb_.budget) {
      const double theta = (pb_.budget - d_hi) / (d_lo - d_hi);
      std::vector<double> mix(z_hi.size());
      for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = theta * z_lo[i] + (1.0 - theta) * z_hi[i];
      if (feasible(mix)) return std::min(expectation(mix), expectation(z_hi));
    }
    return expectation(z_hi);
  }

 private:
  double regularized_derivative(double z) const {
    return f_derivative(pb_.spec, z) + 2.0 * kappa_ * (z - 1.0);
  }

  // argmin over [0, 1/p_i] of (J_i - tau) z + mu f_kappa(z).
  double coordinate_minimizer(std::size_t i, double mu, double tau) const {
    const double slope = pb_.rewards[i] - tau;
    const double z_max = 1.0 / pb_.probs[i];
    auto phi = [&](double z) { return slope + mu * regularized_derivative(z); };
    if (phi(0.0) >= 0.0) return 0.0;
    if (phi(z_max) < 0.0) return z_max;
    double a = 0.0, b = z_max;
    for (int iter = 0; iter < 200 && b - a > 1e-15 * z_max; ++iter) {
      const double m = 0.5 * (a + b);
      (phi(m) >= 0.0 ? b : a) = m;
    }
    return 0.5 * (a + b);
  }

  std::vector<double> minimizer(double mu, double tau) const {
    std::vector<double> z(pb_.rewards.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = coordinate_minimizer(i, mu, tau);
    return z;
  }

  double mass(const std::vector<double>& z) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < z.size(); ++i) s += pb_.probs[i] * z[i];
    return s.value();
  }

  // Coordinate minimiser for mu with tau chosen so that sum p z = 1 exactly
  // (convex combination of the two bracketing minimisers).
  std::vector<double> normalized_minimizer(double mu) const {
    const auto [jmin, jmax] = std::minmax_element(pb_.rewards.begin(), pb_.rewards.end());
    double span = std::max(1.0, *jmax - *jmin) + mu;
    double tau_lo = *jmin - span, tau_hi = *jmax + span;
    for (int k = 0; k < 200 && mass(minimizer(mu, tau_lo)) > 1.0; ++k) tau_lo -= (span *= 2.0);
    span = std::max(1.0, *jmax - *jmin) + mu;
    for (int k = 0; k < 200 && mass(minimizer(mu, tau_hi)) < 1.0; ++k) tau_hi += (span *= 2.0);
    for (int iter = 0; iter < 300 && tau_hi - tau_lo > 1e-15 * (1.0 + std::abs(tau_hi)); ++iter) {
      const double mid = 0.5 * (tau_lo + tau_hi);
      (mass(minimizer(mu, mid)) >= 1.0 ? tau_hi : tau_lo) = mid;
    }
    const auto z_lo = minimizer(mu, tau_lo);
    const auto z_hi = minimizer(mu, tau_hi);
    const double m_lo = mass(z_lo), m_hi = mass(z_hi);
    const double theta = m_hi > m_lo ? std::clamp((m_hi - 1.0) / (m_hi - m_lo), 0.0, 1.0) : 0.0;
    std::vector<double> z(z_lo.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = theta * z_lo[i] + (1.0 - theta) * z_hi[i];
    const double m = mass(z);
    for (double& zi : z) zi /= m;
    return z;
  }

  double divergence(const std::vector<double>& z) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < z.size(); ++i) s += pb_.probs[i] * f_value(pb_.spec, z[i]);
    return s.value();
  }

  // Absorbs rounding in sum p (z - 1) when f is linear around 1.
  bool feasible(const std::vector<double>& z) const { return divergence(z) <= pb_.budget + 1e-15; }

  double expectation(const std::vector<double>& z) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < z.size(); ++i) s += pb_.probs[i] * z[i] * pb_.rewards[i];
    return s.value();
  }

  const FinitePrimal& pb_;
  double kappa_ = 0.0;
};

}  // namespace detail

/// Exact (to about 1e-6) minimum of E_q[J] over q with D_f(q||p) <= budget on a finite support.
inline double primal_oracle(const FinitePrimal& problem) {
  problem.validate();
  return detail::PrimalSolver(problem).solve();
}

}  // namespace rlcert

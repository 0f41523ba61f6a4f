#pragma once

// Numeric reference computations used to validate the closed forms in
// divergence.hpp. They share no code path with those closed forms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "rlcert/divergence.hpp"

namespace rlcert::oracle {

namespace detail {

inline double log_gauss_density(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// p * f(q/p) evaluated from the two densities without forming q/p.
inline double perspective(const DivergenceSpec& spec, double log_p, double log_q) {
  const double p = std::exp(log_p);
  const double q = std::exp(log_q);
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      return std::max(q - spec.param * p, 0.0) - std::max(1.0 - spec.param, 0.0) * p;
    case DivergenceSpec::Kind::total_variation:
      return 0.5 * std::abs(q - p);
    case DivergenceSpec::Kind::power_renyi: {
      const double b = spec.param;
      return (std::exp((1.0 - b) * log_p + b * log_q) - p) / (b - 1.0);
    }
  }
  return 0.0;
}

}  // namespace detail

/// D_f(N(epsilon, sigma^2) || N(0, sigma^2)) by adaptive Gauss-Kronrod
/// quadrature of p f(q/p), split at the kinks of the integrand.
/// Absolute accuracy about 1e-10; throws if an error estimate exceeds 1e-9.
inline double numeric_budget_oracle(const DivergenceSpec& spec, double epsilon, double sigma) {
  spec.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  auto integrand = [&](double x) {
    return detail::perspective(spec, detail::log_gauss_density(x, 0.0, sigma),
                               detail::log_gauss_density(x, epsilon, sigma));
  };
  const double tilt = spec.kind == DivergenceSpec::Kind::power_renyi ? spec.param * epsilon : 0.0;
  const double lo = std::min({0.0, epsilon, tilt}) - 14.0 * sigma;
  const double hi = std::max({0.0, epsilon, tilt}) + 14.0 * sigma;

  std::vector<double> cuts{lo, hi, 0.0, epsilon, 0.5 * epsilon};
  if (epsilon > 0.0) {
    // q/p = lambda where the hinge of f switches.
    const double kink_ratio = spec.kind == DivergenceSpec::Kind::hockey_stick ? spec.param : 1.0;
    cuts.push_back(sigma * sigma * std::log(kink_ratio) / epsilon + 0.5 * epsilon);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = std::max(cuts[i], lo);
    const double b = std::min(cuts[i + 1], hi);
    if (!(b > a)) continue;
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, a, b, 15, 1e-13, &err);
    if (!(err <= 1e-9)) throw std::runtime_error("budget quadrature did not converge");
  }
  return total;
}

/// sup_{0 <= x <= x_max} (x y - f(x)) by a dense grid followed by Brent
/// refinement inside the best grid cell. The objective is concave, so the
/// bracketing cell contains the maximiser. Returns nullopt when the maximum
/// sits at x_max: either the supremum diverges or x_max is too small.
inline std::optional<double> numeric_conjugate_oracle(const DivergenceSpec& spec, double y,
                                                      double x_max = 1000.0, int grid = 200000) {
  spec.validate();
  auto objective = [&](double x) { return x * y - f_value(spec, x); };
  const double step = x_max / grid;
  int best = 0;
  double best_value = objective(0.0);
  for (int i = 1; i <= grid; ++i) {
    const double v = objective(i * step);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  if (best == grid) return std::nullopt;
  const double a = std::max(0.0, (best - 1) * step);
  const double b = std::min(x_max, (best + 1) * step);
  std::uintmax_t iters = 500;
  const auto [xm, neg] = boost::math::tools::brent_find_minima(
      [&](double x) { return -objective(x); }, a, b, std::numeric_limits<double>::digits, iters);
  (void)xm;
  if (iters >= 500) throw std::runtime_error("conjugate oracle refinement did not converge");
  // Kinked objectives peak exactly at 0, 1 or lambda; check them explicitly.
  double result = std::max(best_value, -neg);
  for (double kink : {0.0, 1.0, spec.param}) {
    if (kink >= a && kink <= b) result = std::max(result, objective(kink));
  }
  return result;
}

}  // namespace rlcert::oracle

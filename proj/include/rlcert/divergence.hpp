#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rlcert/core_model.hpp"

namespace rlcert {

/// Generator of an f-divergence D_f(q||p) = E_p[f(dq/dp)] with f convex, f(1) = 0.
///
/// hockey_stick  f(x) = max(x - lambda, 0) - max(1 - lambda, 0)
/// total_variation  f(x) = |x - 1| / 2
/// power_renyi  f(x) = (x^beta - 1) / (beta - 1), beta in (0, 1) or beta > 1
struct DivergenceSpec {
  enum class Kind { hockey_stick, total_variation, power_renyi };

  Kind kind = Kind::total_variation;
  double param = 0.0;  // lambda or beta

  static DivergenceSpec hockey_stick(double lambda) {
    DivergenceSpec s{Kind::hockey_stick, lambda};
    s.validate();
    return s;
  }
  static DivergenceSpec total_variation() { return {Kind::total_variation, 0.0}; }
  static DivergenceSpec power_renyi(double beta) {
    DivergenceSpec s{Kind::power_renyi, beta};
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
      case Kind::hockey_stick:
        if (!(param > 0.0) || !std::isfinite(param)) {
          throw std::invalid_argument("hockey-stick lambda must be > 0");
        }
        break;
      case Kind::total_variation:
        break;
      case Kind::power_renyi:
        // beta = 0 makes f vanish on (0, inf); beta = 1 is the KL limit, not this family.
        if (!(param > 0.0) || param == 1.0 || !std::isfinite(param)) {
          throw std::invalid_argument("power divergence beta must lie in (0, 1) or (1, inf)");
        }
        break;
    }
  }

  bool piecewise_linear() const { return kind != Kind::power_renyi; }

  std::string name() const {
    switch (kind) {
      case Kind::hockey_stick: return "hockey_stick:" + detail::format_double(param);
      case Kind::total_variation: return "total_variation";
      case Kind::power_renyi: return "power_renyi:" + detail::format_double(param);
    }
    return "?";
  }

  friend bool operator==(const DivergenceSpec&, const DivergenceSpec&) = default;
};

/// Accepts "tv", "total_variation", "hs:<lambda>", "hockey_stick:<lambda>",
/// "power:<beta>", "power_renyi:<beta>".
inline DivergenceSpec parse_divergence(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  if (head == "tv" || head == "total_variation") return DivergenceSpec::total_variation();
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("divergence '" + std::string(text) + "' needs a parameter");
  }
  const double value = detail::parse_double(text.substr(colon + 1));
  if (head == "hs" || head == "hockey_stick") return DivergenceSpec::hockey_stick(value);
  if (head == "power" || head == "power_renyi" || head == "renyi") return DivergenceSpec::power_renyi(value);
  throw std::invalid_argument("unknown divergence '" + std::string(text) + "'");
}

inline double f_value(const DivergenceSpec& spec, double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("f-divergence generator is defined on x >= 0");
  const double p = spec.param;
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      return std::max(x - p, 0.0) - std::max(1.0 - p, 0.0);
    case DivergenceSpec::Kind::total_variation:
      return 0.5 * std::abs(x - 1.0);
    case DivergenceSpec::Kind::power_renyi:
      return (std::pow(x, p) - 1.0) / (p - 1.0);
  }
  return 0.0;
}

/// Right derivative of f.
inline double f_derivative(const DivergenceSpec& spec, double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("f-divergence generator is defined on x >= 0");
  const double p = spec.param;
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      return x >= p ? 1.0 : 0.0;
    case DivergenceSpec::Kind::total_variation:
      return x >= 1.0 ? 0.5 : -0.5;
    case DivergenceSpec::Kind::power_renyi:
      if (x == 0.0) return p > 1.0 ? 0.0 : -std::numeric_limits<double>::infinity();
      return p * std::pow(x, p - 1.0) / (p - 1.0);
  }
  return 0.0;
}

/// Right end of the conjugate's effective domain. The domain is closed
/// except for power_renyi with beta < 1, where y must stay strictly below 0.
inline double conjugate_domain_max(const DivergenceSpec& spec) {
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick: return 1.0;
    case DivergenceSpec::Kind::total_variation: return 0.5;
    case DivergenceSpec::Kind::power_renyi:
      return spec.param > 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return 0.0;
}

inline bool conjugate_domain_open(const DivergenceSpec& spec) {
  return spec.kind == DivergenceSpec::Kind::power_renyi && spec.param < 1.0;
}

inline bool in_conjugate_domain(const DivergenceSpec& spec, double y) {
  const double ymax = conjugate_domain_max(spec);
  return conjugate_domain_open(spec) ? y < ymax : y <= ymax;
}

/// Convex conjugate f*(y) = sup_{x >= 0} (x y - f(x)); nullopt where the supremum is +inf.
inline std::optional<double> conjugate(const DivergenceSpec& spec, double y) {
  if (std::isnan(y)) throw std::invalid_argument("conjugate argument is NaN");
  if (!in_conjugate_domain(spec, y)) return std::nullopt;
  const double p = spec.param;
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      return p * std::max(y, 0.0) + std::max(1.0 - p, 0.0);
    case DivergenceSpec::Kind::total_variation:
      return std::max(y, -0.5);
    case DivergenceSpec::Kind::power_renyi:
      if (p > 1.0) {
        return 1.0 / (p - 1.0) + std::pow((p - 1.0) * std::max(y, 0.0) / p, p / (p - 1.0));
      }
      return 1.0 / (p - 1.0) + std::pow((1.0 - p) * (-y) / p, p / (p - 1.0));
  }
  return std::nullopt;
}

/// Smallest x attaining the supremum in f*(y). By Danskin this is also a
/// (right) derivative of f* at y. Requires y in the conjugate's domain.
inline double conjugate_argmax(const DivergenceSpec& spec, double y) {
  if (!in_conjugate_domain(spec, y)) throw std::domain_error("conjugate argmax outside the domain");
  const double p = spec.param;
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      return y > 0.0 ? p : 0.0;
    case DivergenceSpec::Kind::total_variation:
      return y > -0.5 ? 1.0 : 0.0;
    case DivergenceSpec::Kind::power_renyi:
      if (p > 1.0) return std::pow((p - 1.0) * std::max(y, 0.0) / p, 1.0 / (p - 1.0));
      return std::pow((1.0 - p) * (-y) / p, 1.0 / (p - 1.0));
  }
  return 0.0;
}

/// Point where f*(y) - y vanishes: f'(1) for the power family, 0 otherwise.
inline double conjugate_anchor(const DivergenceSpec& spec) {
  return spec.kind == DivergenceSpec::Kind::power_renyi ? spec.param / (spec.param - 1.0) : 0.0;
}

/// f*(y) - y at y = conjugate_anchor + z, evaluated without cancellation so
/// that nu * excess stays accurate for very large nu. Nonnegative and convex;
/// nullopt outside the domain.
inline std::optional<double> conjugate_excess(const DivergenceSpec& spec, double z) {
  if (std::isnan(z)) throw std::invalid_argument("conjugate argument is NaN");
  const double p = spec.param;
  switch (spec.kind) {
    case DivergenceSpec::Kind::hockey_stick:
      if (z > 1.0) return std::nullopt;
      return p * std::max(z, 0.0) + std::max(1.0 - p, 0.0) - z;
    case DivergenceSpec::Kind::total_variation:
      if (z > 0.5) return std::nullopt;
      return std::max(0.0, -0.5 - z);
    case DivergenceSpec::Kind::power_renyi: {
      // x*(y) = b^(1/(p-1)) with b = 1 + (p-1) z / p; the excess is x*^p - 1 - z.
      const double k = (p - 1.0) / p;
      if (1.0 + k * z <= 0.0) {
        if (p < 1.0) return std::nullopt;
        return -1.0 - z;
      }
      return std::expm1(std::log1p(k * z) / k) - z;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Divergence budgets implied by perturbation radii

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Hockey-stick divergence between N(delta, s^2 I) and N(0, s^2 I) with |delta|_2 = epsilon.
///
/// Only the projection on delta matters, so this is the 1-D Gaussian pair
/// with shift a = epsilon / sigma. The a = 0 limit is handled explicitly.
inline double hs_budget(double epsilon, double sigma, double lambda) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  const double a = epsilon / sigma;
  if (a == 0.0) return 0.0;
  const double shift = std::log(lambda) / a;
  double value = 0.0;
  if (lambda >= 1.0) {
    value = standard_normal_cdf(a / 2 - shift) - lambda * standard_normal_cdf(-a / 2 - shift);
  } else {
    // Complementary form avoids subtracting (1 - lambda) from a number close to it.
    value = lambda * standard_normal_cdf(a / 2 + shift) - standard_normal_cdf(-a / 2 + shift);
  }
  return std::max(value, 0.0);
}

/// Total variation between N(delta, s^2 I) and N(0, s^2 I), |delta|_2 = epsilon.
/// Also an upper bound for every |delta|_1 <= epsilon.
inline double tv_budget(double epsilon, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  return std::erf(epsilon / (2.0 * sigma) / std::numbers::sqrt2);
}

/// E_p[(q/p)^beta] for one attacked step of action-flip smoothing, where the
/// clean policy centres mass 1-p on a* and the attacker moves the centre elsewhere.
inline double l0_step_moment(double flip_prob, int num_actions, double beta) {
  const double p = flip_prob;
  const double other = p / (num_actions - 1);
  return std::pow(other, beta) * std::pow(1.0 - p, 1.0 - beta) +
         std::pow(1.0 - p, beta) * std::pow(other, 1.0 - beta) + (num_actions - 2) * other;
}

/// Power-divergence budget for `attacked_steps` attacked time steps. Steps are
/// independent, so the per-step moments multiply.
inline double l0_budget(int attacked_steps, double flip_prob, int num_actions, double beta) {
  if (attacked_steps < 0) throw std::invalid_argument("attacked_steps must be >= 0");
  if (!(flip_prob > 0.0 && flip_prob < 1.0)) {
    throw std::invalid_argument("l0 budget needs flip probability strictly inside (0, 1)");
  }
  if (num_actions < 2) throw std::invalid_argument("l0 budget needs at least two actions");
  DivergenceSpec::power_renyi(beta);  // validates beta
  if (attacked_steps == 0) return 0.0;
  const double moment = l0_step_moment(flip_prob, num_actions, beta);
  const double value = std::expm1(attacked_steps * std::log(moment)) / (beta - 1.0);
  return std::max(value, 0.0);
}

/// epsilon_D for an attacker budget under a given smoothing, for the chosen divergence.
inline double divergence_budget(const DivergenceSpec& spec, const PerturbationBudget& budget,
                                const SmoothingConfig& smoothing, int num_actions) {
  if (!compatible(smoothing, budget.norm)) {
    throw std::invalid_argument(norm_name(budget.norm) + " budget is incompatible with " +
                                smoothing.kind_name() + " smoothing");
  }
  switch (budget.norm) {
    case PerturbationBudget::Norm::l2:
    case PerturbationBudget::Norm::l1:
      // |delta|_2 <= |delta|_1, so Gaussian budgets in the l2 radius cover l1 balls too.
      if (spec.kind == DivergenceSpec::Kind::hockey_stick) {
        return hs_budget(budget.epsilon, smoothing.sigma, spec.param);
      }
      if (spec.kind == DivergenceSpec::Kind::total_variation) {
        return tv_budget(budget.epsilon, smoothing.sigma);
      }
      throw std::invalid_argument("power divergence is not available for Gaussian observation smoothing");
    case PerturbationBudget::Norm::l0_steps:
      if (spec.kind != DivergenceSpec::Kind::power_renyi) {
        throw std::invalid_argument("l0 action budgets are certified with the power divergence");
      }
      return l0_budget(budget.attacked_steps(), smoothing.flip_prob, num_actions, spec.param);
  }
  return 0.0;
}

}  // namespace rlcert

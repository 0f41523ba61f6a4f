#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "rlcert/core_model.hpp"
#include "rlcert/divergence.hpp"

namespace rlcert {

/// Maximiser of nu * (eta - E[f*(eta + eps_D - J / nu)]) over nu > 0, eta.
struct DualSolution {
  double nu = 1.0;
  double eta = 0.0;
  double objective = -std::numeric_limits<double>::infinity();
  bool feasible = false;
  int evaluations = 0;
};

namespace detail {

inline std::vector<double> normalized_weights(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw std::invalid_argument("sample set is empty");
  if (weights.empty()) return std::vector<double>(values.size(), 1.0 / static_cast<double>(values.size()));
  if (weights.size() != values.size()) throw std::invalid_argument("weights and values differ in length");
  CompensatedSum total;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    total += w;
  }
  if (!(total.value() > 0.0)) throw std::invalid_argument("weights must not all be zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total.value();
  return out;
}

}  // namespace detail

/// nu * (eta - sum_i w_i f*(eta + eps_d - J_i / nu)); nullopt if any conjugate
/// argument leaves the domain. Empty `weights` means uniform weights.
inline std::optional<double> dual_objective(std::span<const double> values, std::span<const double> weights,
                                            const DivergenceSpec& spec, double eps_d, double nu, double eta) {
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be > 0");
  const auto w = detail::normalized_weights(values, weights);
  CompensatedSum expectation;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto h = conjugate(spec, eta + eps_d - values[i] / nu);
    if (!h) return std::nullopt;
    if (w[i] > 0.0) expectation += w[i] * *h;
  }
  return nu * (eta - expectation.value());
}

/// Maximises the dual certificate for a fixed divergence budget.
///
/// Works in the homogeneous coordinates t = nu * eta, where the objective
///   g(nu, t) = t - sum_i w_i nu f*((t - J_i) / nu + eps_d)
/// is jointly concave (perspective of f*). Rewards are rescaled to [0, 1]
/// over the support first; the certificate is equivariant under J -> cJ + d.
/// Piecewise-linear conjugates: golden-section over log nu in [-14, 14] with
/// an exact inner maximum over t. Power divergence: the maximum over t is
/// concave in nu, so both levels are bracketed sign-change roots of the
/// partial derivatives (Newton inside, TOMS 748 outside), log nu in [-14, 20].
///
/// If `support` is given, feasibility is enforced at support.lo rather than
/// at the smallest sample, so the conjugate stays finite on every reward the
/// environment can produce.
class DualProblem {
 public:
  DualProblem(std::span<const double> values, std::span<const double> weights, const DivergenceSpec& spec,
              double eps_d, std::optional<RewardSupport> support = std::nullopt)
      : spec_(spec), eps_(eps_d) {
    spec_.validate();
    if (!(eps_d >= 0.0) || !std::isfinite(eps_d)) throw std::invalid_argument("eps_d must be finite and >= 0");
    const auto w = detail::normalized_weights(values, weights);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo_ = *mn;
    double hi = *mx;
    if (support) {
      if (!(support->lo <= support->hi)) throw std::invalid_argument("reward support is empty");
      const double slack = 1e-9 * std::max(1.0, support->hi - support->lo);
      if (*mn < support->lo - slack || *mx > support->hi + slack) {
        throw std::invalid_argument("samples fall outside the declared reward support");
      }
      lo_ = support->lo;
      hi = support->hi;
    }
    scale_ = hi > lo_ ? hi - lo_ : 1.0;

    // Sorted, merged atoms in normalised units.
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    for (std::size_t idx : order) {
      if (w[idx] == 0.0) continue;
      const double x = std::clamp((values[idx] - lo_) / scale_, 0.0, 1.0);
      if (!atoms_.empty() && atoms_.back() == x) {
        weights_.back() += w[idx];
      } else {
        atoms_.push_back(x);
        weights_.push_back(w[idx]);
      }
    }
    CompensatedSum cw, cwj;
    cum_w_.reserve(atoms_.size());
    cum_wj_.reserve(atoms_.size());
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      cw += weights_[i];
      cwj += weights_[i] * atoms_[i];
      cum_w_.push_back(cw.value());
      cum_wj_.push_back(cwj.value());
    }
    mean_ = cum_wj_.back();
    if (!spec_.piecewise_linear()) {
      anchor_ = conjugate_anchor(spec_);
      k_ = (spec_.param - 1.0) / spec_.param;
      inv_bm1_ = 1.0 / (spec_.param - 1.0);
    }
  }

  DualSolution solve() const { return spec_.piecewise_linear() ? solve_piecewise_linear() : solve_power(); }

  double lo() const { return lo_; }
  double scale() const { return scale_; }

 private:
  struct Best {
    double u = 0.0, g = -std::numeric_limits<double>::infinity(), t = 0.0;
    void offer(double cand_u, double cand_g, double cand_t) {
      const double tol = tie_tolerance(g);
      if (cand_g > g + tol || (std::abs(cand_g - g) <= tol && cand_u < u)) {
        u = cand_u;
        g = cand_g;
        t = cand_t;
      }
    }
  };

  static double tie_tolerance(double g) {
    return std::isfinite(g) ? 1e-13 * (1.0 + std::abs(g)) : 0.0;
  }

  DualSolution finish(const Best& best, int evals) const {
    DualSolution sol;
    sol.nu = scale_ * std::exp(best.u);
    const double t = scale_ * best.t + lo_;
    sol.eta = t / sol.nu;
    sol.objective = lo_ + scale_ * best.g;
    sol.feasible = std::isfinite(sol.objective);
    sol.evaluations = evals;
    return sol;
  }

  // Golden-section search over log nu; the inner maximum is exact.
  DualSolution solve_piecewise_linear() const {
    constexpr double kLogNuMin = -14.0;
    constexpr double kLogNuMax = 14.0;
    constexpr double kInvPhi = 0.6180339887498949;

    Best best;
    int evals = 0;
    auto eval = [&](double u) {
      ++evals;
      const double nu = std::exp(u);
      double t = 0.0;
      const double g = inner_piecewise_linear(nu, t);
      best.offer(u, g, t);
      return g;
    };

    double a = kLogNuMin, b = kLogNuMax;
    eval(a);
    eval(b);
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = eval(c), fd = eval(d);
    while (b - a > 1e-11) {
      // On (near) ties keep the left part: smallest nu among maximisers.
      if (fc >= fd - tie_tolerance(fd)) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = eval(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = eval(d);
      }
    }
    return finish(best, evals);
  }

  // f*(y) = slope * max(y, knee) + offset on y <= y_max.
  struct Hinge {
    double slope, knee, offset;
  };

  Hinge hinge() const {
    if (spec_.kind == DivergenceSpec::Kind::hockey_stick) {
      return {spec_.param, 0.0, std::max(1.0 - spec_.param, 0.0)};
    }
    return {1.0, -0.5, 0.0};
  }

  double inner_piecewise_linear(double nu, double& t_out) const {
    const Hinge h = hinge();
    const double y_max = conjugate_domain_max(spec_);
    // Feasibility at the support floor (normalised 0) binds every atom.
    const double t_max = nu * (y_max - eps_);
    // Right slope of g in t is 1 - slope * W(J <= t + nu (eps - knee)).
    double t = t_max;
    const double level = 1.0 / h.slope - 1e-12;
    const auto it = std::lower_bound(cum_w_.begin(), cum_w_.end(), level);
    if (it != cum_w_.end()) {
      const auto j = static_cast<std::size_t>(it - cum_w_.begin());
      t = std::min(t_max, atoms_[j] - nu * (eps_ - h.knee));
    }
    t_out = t;
    return piecewise_linear_value(nu, t, h);
  }

  double piecewise_linear_value(double nu, double t, const Hinge& h) const {
    const double x = t + nu * (eps_ - h.knee);
    const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x);
    const auto n_active = static_cast<std::size_t>(it - atoms_.begin());
    const double w_active = n_active ? cum_w_[n_active - 1] : 0.0;
    const double wj_active = n_active ? cum_wj_[n_active - 1] : 0.0;
    const double w_inactive = std::max(0.0, 1.0 - w_active);
    const double expectation = w_active * (t + nu * eps_) - wj_active + w_inactive * nu * h.knee;
    return t - h.slope * expectation - nu * h.offset;
  }

  // Power family in shifted coordinates. With y = anchor + z and
  // z_i = (c - J_i) / nu, t = c + nu (anchor - eps) and
  //   g(nu, c) = E J - nu eps - nu E r(z),   r = conjugate_excess >= 0,
  // which has no cancellation when nu is large. g is jointly concave, so its
  // maximum over c is concave in nu: both searches are sign-change roots.
  struct PowerInner {
    double value = 0.0;
    double c = 0.0;
    double nu_slope = 0.0;  // d/dnu of the inner maximum
  };

  double power_argmax(double z) const {
    const double b = 1.0 + k_ * z;
    return b > 0.0 ? std::pow(b, inv_bm1_) : 0.0;
  }

  // dg/dc = 1 - E x*(z), nonincreasing in c, and its derivative in c.
  std::pair<double, double> power_c_slope(double nu, double c) const {
    double s = 0.0, ds = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const double b = 1.0 + k_ * (c - atoms_[i]) / nu;
      if (b <= 0.0) continue;
      const double x = std::pow(b, inv_bm1_);
      s += weights_[i] * x;
      ds += weights_[i] * x / b;
    }
    return {1.0 - s, -ds / (spec_.param * nu)};
  }

  // g(nu, c) and its partial derivative in nu at fixed c.
  std::pair<double, double> power_value(double nu, double c) const {
    CompensatedSum excess, tilt;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const double z = (c - atoms_[i]) / nu;
      const auto r = conjugate_excess(spec_, z);
      if (!r) return {-std::numeric_limits<double>::infinity(), 0.0};
      excess += weights_[i] * *r;
      tilt += weights_[i] * (*r - (power_argmax(z) - 1.0) * z);
    }
    return {mean_ - nu * eps_ - nu * excess.value(), -eps_ - tilt.value()};
  }

  PowerInner inner_power(double nu) const {
    const double j_min = atoms_.front();
    const double j_max = atoms_.back();
    double cl = 0.0, ch = 0.0;
    bool capped = false;  // c held at the domain edge set by the support floor
    if (spec_.param > 1.0) {
      // x* = 0 for every atom at cl, x* >= 1 for every atom at ch.
      cl = j_min - nu * anchor_;
      ch = j_max;
    } else {
      ch = nu * (-1.0 / k_) * (1.0 - 1e-12);
      cl = std::min(ch, j_min);
      capped = power_c_slope(nu, ch).first >= 0.0;
    }
    double c = ch;
    if (!capped) {
      const double sl = power_c_slope(nu, cl).first;
      const double sh = power_c_slope(nu, ch).first;
      if (sl <= 0.0) {
        c = cl;
      } else if (sh < 0.0) {
        // Safeguarded Newton: falls back to bisection inside [cl, ch].
        std::uintmax_t iters = 200;
        c = boost::math::tools::newton_raphson_iterate([&](double x) { return power_c_slope(nu, x); },
                                                       0.5 * (cl + ch), cl, ch, 50, iters);
      }
    }
    PowerInner out;
    out.c = c;
    std::tie(out.value, out.nu_slope) = power_value(nu, c);
    if (capped) out.nu_slope += power_c_slope(nu, c).first * c / nu;
    return out;
  }

  DualSolution solve_power() const {
    constexpr double kLogNuMin = -14.0;
    constexpr double kLogNuMax = 20.0;
    Best best;
    int evals = 0;
    auto nu_slope = [&](double u) {
      ++evals;
      const double nu = std::exp(u);
      const PowerInner in = inner_power(nu);
      best.offer(u, in.value, in.c + nu * (anchor_ - eps_));
      return in.nu_slope;
    };
    const double da = nu_slope(kLogNuMin);
    const double db = nu_slope(kLogNuMax);
    if (da > 0.0 && db < 0.0) {
      std::uintmax_t iters = 200;
      boost::math::tools::toms748_solve(nu_slope, kLogNuMin, kLogNuMax, da, db,
                                        [](double x, double y) { return std::abs(y - x) <= 1e-11; }, iters);
    }
    return finish(best, evals);
  }

  DivergenceSpec spec_;
  double eps_;
  double lo_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> cum_w_;
  std::vector<double> cum_wj_;
  double mean_ = 0.0;
  double anchor_ = 0.0;
  double k_ = 1.0;        // (beta - 1) / beta
  double inv_bm1_ = 1.0;  // 1 / (beta - 1)
};

inline DualSolution solve_dual(std::span<const double> values, std::span<const double> weights,
                               const DivergenceSpec& spec, double eps_d,
                               std::optional<RewardSupport> support = std::nullopt) {
  return DualProblem(values, weights, spec, eps_d, support).solve();
}

inline DualSolution solve_dual(std::span<const double> values, const DivergenceSpec& spec, double eps_d,
                               std::optional<RewardSupport> support = std::nullopt) {
  return solve_dual(values, {}, spec, eps_d, support);
}

// ---------------------------------------------------------------------------
// Confidence step

/// Two-sided Hoeffding radius for m i.i.d. draws in an interval of width R.
inline double hoeffding_radius(double range, std::size_t m, double alpha) {
  if (!(range >= 0.0)) throw std::invalid_argument("range must be >= 0");
  if (m == 0) throw std::invalid_argument("m must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  return range * std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(m)));
}

inline double expectation_upper_bound(std::span<const double> h_values, double zeta) {
  if (h_values.empty()) throw std::invalid_argument("expectation bound needs at least one value");
  CompensatedSum s;
  for (double h : h_values) s += h;
  return s.value() / static_cast<double>(h_values.size()) + zeta;
}

/// h(J) = f*(eta + eps_d - J / nu); nullopt outside the conjugate domain.
inline std::optional<double> certificate_term(const DivergenceSpec& spec, double eps_d, double nu, double eta,
                                              double reward) {
  return conjugate(spec, eta + eps_d - reward / nu);
}

/// h(J) - y(J) = f*(y) - y at y = eta + eps_d - J / nu, written around the
/// conjugate anchor so nu times it stays accurate for large nu. Then
///   nu (eta - E h) = E J - nu eps_d - nu E excess.
inline std::optional<double> certificate_excess(const DivergenceSpec& spec, double eps_d, double nu, double eta,
                                                double reward) {
  return conjugate_excess(spec, (eta + eps_d - conjugate_anchor(spec)) - reward / nu);
}

/// Width of h over rewards in [lo, hi]. f* is nondecreasing, so h is
/// nonincreasing in J and the extremes sit at the interval ends.
inline double certificate_term_range(const DivergenceSpec& spec, double eps_d, double nu, double eta,
                                     RewardSupport support) {
  const auto at_lo = certificate_excess(spec, eps_d, nu, eta, support.lo);
  const auto at_hi = certificate_excess(spec, eps_d, nu, eta, support.hi);
  if (!at_lo || !at_hi) return std::numeric_limits<double>::infinity();
  return std::max(0.0, (support.hi - support.lo) / nu + (*at_lo - *at_hi));
}

/// nu (eta - mean h - zeta) over `rewards`, evaluated in the excess form.
inline double certificate_value(const DivergenceSpec& spec, double eps_d, double nu, double eta,
                                std::span<const double> rewards, double zeta) {
  if (rewards.empty()) throw std::invalid_argument("certificate needs at least one reward");
  CompensatedSum j, r;
  for (double x : rewards) {
    const auto e = certificate_excess(spec, eps_d, nu, eta, x);
    if (!e) throw std::runtime_error("reward outside the certified reward support");
    j += x;
    r += *e;
  }
  const double n = static_cast<double>(rewards.size());
  return j.value() / n - nu * eps_d - nu * (r.value() / n + zeta);
}

// ---------------------------------------------------------------------------
// CDF-based baseline

struct CdfBaselineOptions {
  /// Replace empirical exceedance frequencies by Hoeffding lower confidence
  /// bounds (union bound over the thresholds).
  bool confidence_corrected = false;
  double alpha = 0.01;
};

/// Certificate computed from threshold exceedance probabilities only.
///
/// theta_i = P(J >= g_i) turns the sample set into the staircase
/// distribution with mass 1 - theta_1 at a, theta_i - theta_{i+1} at g_i and
/// theta_n at g_n, whose rewards never exceed the originals. The dual is
/// then maximised over that distribution on the support [a, b].
inline double cdf_baseline(std::span<const double> samples, std::span<const double> thresholds,
                           RewardSupport range, const DivergenceSpec& spec, double eps_d,
                           const CdfBaselineOptions& options = {}) {
  if (samples.empty()) throw std::invalid_argument("cdf baseline needs samples");
  if (thresholds.empty()) throw std::invalid_argument("cdf baseline needs at least one threshold");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (range.lo > *mn || range.hi < *mx) throw std::invalid_argument("reward range does not cover the samples");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > range.lo && thresholds[i] < range.hi)) {
      throw std::invalid_argument("thresholds must lie strictly inside the reward range");
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw std::invalid_argument("thresholds must be strictly increasing");
    }
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  const double correction =
      options.confidence_corrected
          ? std::sqrt(std::log(static_cast<double>(thresholds.size()) / options.alpha) / (2.0 * m))
          : 0.0;

  std::vector<double> theta(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const auto n_below = std::lower_bound(sorted.begin(), sorted.end(), thresholds[i]) - sorted.begin();
    theta[i] = std::clamp((m - static_cast<double>(n_below)) / m - correction, 0.0, 1.0);
  }

  std::vector<double> atoms{range.lo};
  std::vector<double> masses{1.0 - theta.front()};
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double next = i + 1 < thresholds.size() ? theta[i + 1] : 0.0;
    atoms.push_back(thresholds[i]);
    masses.push_back(std::max(0.0, theta[i] - next));
  }
  return solve_dual(atoms, masses, spec, eps_d, range).objective;
}

/// g_k = a + k (b - a) / (n + 1), k = 1..n.
inline std::vector<double> uniform_thresholds(RewardSupport range, int n) {
  if (n < 1) throw std::invalid_argument("need at least one threshold");
  std::vector<double> g;
  for (int k = 1; k <= n; ++k) g.push_back(range.lo + (range.hi - range.lo) * k / (n + 1));
  return g;
}

/// Distinct empirical quantiles at levels k / (n + 1) strictly inside the range.
inline std::vector<double> quantile_thresholds(std::span<const double> samples, RewardSupport range, int n) {
  if (n < 1) throw std::invalid_argument("need at least one threshold");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> g;
  for (int k = 1; k <= n; ++k) {
    const auto idx = static_cast<std::size_t>(std::floor(static_cast<double>(k) / (n + 1) * (sorted.size() - 1)));
    const double v = sorted[idx];
    if (v > range.lo && v < range.hi && (g.empty() || v > g.back())) g.push_back(v);
  }
  return g;
}

}  // namespace rlcert

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlcert {

/// Neumaier compensated summation. Result does not depend on how the
/// terms were partitioned, up to the last bit of a double.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Smoothing and attacker models

struct SmoothingConfig {
  enum class Kind { gaussian_observation, action_flip };

  Kind kind = Kind::gaussian_observation;
  double sigma = 0.0;      // gaussian_observation
  double flip_prob = 0.0;  // action_flip

  static SmoothingConfig gaussian(double sigma) {
    SmoothingConfig c{Kind::gaussian_observation, sigma, 0.0};
    c.validate();
    return c;
  }
  static SmoothingConfig action_flip(double p) {
    SmoothingConfig c{Kind::action_flip, 0.0, p};
    c.validate();
    return c;
  }

  void validate() const {
    if (kind == Kind::gaussian_observation && !(sigma > 0.0)) {
      throw std::invalid_argument("gaussian smoothing requires sigma > 0");
    }
    if (kind == Kind::action_flip && !(flip_prob >= 0.0 && flip_prob <= 1.0)) {
      throw std::invalid_argument("action_flip smoothing requires 0 <= p <= 1");
    }
  }

  std::string kind_name() const {
    return kind == Kind::gaussian_observation ? "gaussian_observation" : "action_flip";
  }
};

struct PerturbationBudget {
  enum class Norm { l2, l1, l0_steps };

  Norm norm = Norm::l2;
  double epsilon = 0.0;  // l0_steps: integer count of attacked steps

  void validate(int horizon) const {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("perturbation budget must be >= 0");
    if (norm == Norm::l0_steps) {
      if (epsilon != std::floor(epsilon)) {
        throw std::invalid_argument("l0 budget must be an integer step count");
      }
      if (epsilon > horizon) throw std::invalid_argument("l0 budget exceeds the horizon");
    }
  }

  int attacked_steps() const { return static_cast<int>(epsilon); }
};

inline std::string norm_name(PerturbationBudget::Norm n) {
  switch (n) {
    case PerturbationBudget::Norm::l2: return "l2";
    case PerturbationBudget::Norm::l1: return "l1";
    case PerturbationBudget::Norm::l0_steps: return "l0";
  }
  return "?";
}

inline PerturbationBudget::Norm parse_norm(std::string_view s) {
  if (s == "l2") return PerturbationBudget::Norm::l2;
  if (s == "l1") return PerturbationBudget::Norm::l1;
  if (s == "l0" || s == "l0_steps") return PerturbationBudget::Norm::l0_steps;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "'");
}

/// l2/l1 budgets are measured against Gaussian observation smoothing,
/// l0 step budgets against action-flip smoothing.
inline bool compatible(const SmoothingConfig& s, PerturbationBudget::Norm n) {
  if (n == PerturbationBudget::Norm::l0_steps) return s.kind == SmoothingConfig::Kind::action_flip;
  return s.kind == SmoothingConfig::Kind::gaussian_observation;
}

/// Closed interval every cumulative reward is known to lie in.
struct RewardSupport {
  double lo = 0.0;
  double hi = 0.0;
};

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryStep {
  std::vector<double> state;
  std::vector<double> observation;
  int action = 0;
  double reward = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryStep> steps;
  int horizon = 0;
  double cumulative_reward = 0.0;
  std::uint64_t seed = 0;
};

/// sum_t gamma^t r_t; gamma = 0 keeps only the first term.
inline double cumulative_reward(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  CompensatedSum sum;
  double discount = 1.0;
  for (double r : rewards) {
    sum += discount * r;
    discount *= gamma;
  }
  return sum.value();
}

inline double cumulative_reward(const TrajectoryRecord& record, double gamma) {
  std::vector<double> rewards;
  rewards.reserve(record.steps.size());
  for (const auto& s : record.steps) rewards.push_back(s.reward);
  return cumulative_reward(rewards, gamma);
}

// ---------------------------------------------------------------------------
// Reward sample sets

/// Cumulative rewards of i.i.d. smoothed rollouts; sample i used seed seed_base + i.
struct RewardSampleSet {
  std::vector<double> values;
  std::string env_id;
  SmoothingConfig smoothing;
  std::uint64_t seed_base = 0;
  double gamma = 1.0;
  int horizon = 0;
  /// Extra header fields, e.g. attack parameters.
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return values.size(); }
};

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("malformed number '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("malformed integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

inline constexpr std::string_view kSampleSetMagic = "# rlcert-samples v1";

/// Header line of key=value tokens, then one cumulative reward per line.
/// Values are written with 17 significant digits, so a round trip is bit-exact.
inline void write_sample_set(std::ostream& os, const RewardSampleSet& set) {
  os << kSampleSetMagic << " env=" << set.env_id << " smoothing=" << set.smoothing.kind_name();
  if (set.smoothing.kind == SmoothingConfig::Kind::gaussian_observation) {
    os << " sigma=" << detail::format_double(set.smoothing.sigma);
  } else {
    os << " p=" << detail::format_double(set.smoothing.flip_prob);
  }
  os << " seed_base=" << set.seed_base << " gamma=" << detail::format_double(set.gamma)
     << " T=" << set.horizon;
  for (const auto& [k, v] : set.metadata) {
    if (k.find_first_of(" =\n") != std::string::npos || v.find_first_of(" \n") != std::string::npos) {
      throw std::invalid_argument("metadata keys/values must not contain whitespace");
    }
    os << ' ' << k << '=' << v;
  }
  os << '\n';
  for (double v : set.values) os << detail::format_double(v) << '\n';
}

inline RewardSampleSet read_sample_set(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind(kSampleSetMagic, 0) != 0) {
    throw std::runtime_error("not a reward sample set (missing header)");
  }
  RewardSampleSet set;
  bool have_smoothing = false;
  std::istringstream tokens(header.substr(kSampleSetMagic.size()));
  std::string tok;
  while (tokens >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed header token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "env") {
      set.env_id = val;
    } else if (key == "smoothing") {
      if (val == "gaussian_observation") {
        set.smoothing.kind = SmoothingConfig::Kind::gaussian_observation;
      } else if (val == "action_flip") {
        set.smoothing.kind = SmoothingConfig::Kind::action_flip;
      } else {
        throw std::runtime_error("unknown smoothing kind '" + val + "'");
      }
      have_smoothing = true;
    } else if (key == "sigma") {
      set.smoothing.sigma = detail::parse_double(val);
    } else if (key == "p") {
      set.smoothing.flip_prob = detail::parse_double(val);
    } else if (key == "seed_base") {
      set.seed_base = detail::parse_u64(val);
    } else if (key == "gamma") {
      set.gamma = detail::parse_double(val);
    } else if (key == "T") {
      set.horizon = static_cast<int>(detail::parse_u64(val));
    } else {
      set.metadata[key] = val;
    }
  }
  if (!have_smoothing || set.env_id.empty() || set.horizon <= 0) {
    throw std::runtime_error("sample set header lacks env, smoothing or T");
  }
  set.smoothing.validate();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    set.values.push_back(detail::parse_double(line));
  }
  if (set.values.empty()) throw std::runtime_error("sample set is empty");
  return set;
}

inline void save_sample_set(const std::string& path, const RewardSampleSet& set) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_sample_set(os, set);
}

inline RewardSampleSet load_sample_set(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_sample_set(is);
}

}  // namespace rlcert

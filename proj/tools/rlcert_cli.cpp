// rlcert: certify | attack | oracle <config> [--out path] [--workers n]
//
// Exit codes: 0 success, 1 usage, 2 config error, 3 solver or run failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "rlcert/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRunFailure = 3;

struct Output {
  std::unique_ptr<std::ofstream> file;
  std::ostream* os = &std::cout;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file = std::make_unique<std::ofstream>(path);
    if (!*file) throw std::runtime_error("cannot write '" + path + "'");
    os = file.get();
  }
};

int cmd_certify(const rlcert::ExperimentConfig& config, const rlcert::PolicyHandle& policy, const std::string& out,
                int workers) {
  const auto rows = rlcert::run_certify(config, policy, workers);
  Output o(out);
  rlcert::write_certify_csv(*o.os, rows, config.timing);
  for (const auto& r : rows) {
    std::fprintf(stderr, "eps=%g divergence=%s bound=%.6f mean=%.6f\n", r.budget.epsilon, r.spec.name().c_str(),
                 r.bound, r.empirical_mean);
  }
  return 0;
}

int cmd_attack(const rlcert::ExperimentConfig& config, const rlcert::PolicyHandle& policy, const std::string& out,
               int workers) {
  const auto rows = rlcert::run_attack(config, policy, workers);
  Output o(out);
  rlcert::write_attack_csv(*o.os, rows);
  return 0;
}

int cmd_oracle(const rlcert::ExperimentConfig& config, const std::string& out) {
  const auto conj = rlcert::conjugate_sweep(rlcert::oracle_divergences(), config.conjugate_points);
  const auto budget = rlcert::budget_sweep(config.budget_triples, config.oracle_seed);
  const auto dual = rlcert::duality_sweep(config.primal_instances, config.oracle_seed);
  Output o(out);
  auto& os = *o.os;
  os << "conjugate points=" << conj.points << " max_deviation=" << rlcert::detail::format_double(conj.max_deviation)
     << " oracle_failures=" << conj.failures << '\n';
  os << "budget values=" << budget.points << " max_deviation=" << rlcert::detail::format_double(budget.max_deviation)
     << " oracle_failures=" << budget.failures << '\n';
  os << "duality instances=" << dual.instances << " max_gap=" << rlcert::detail::format_double(dual.max_gap)
     << " weak_duality_violations=" << dual.weak_violations << '\n';
  return conj.failures + budget.failures + dual.weak_violations == 0 ? 0 : kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified lower bounds on the reward of smoothed policies"};
  app.require_subcommand(1);
  std::string config_path, out;
  int workers = 1;
  for (const char* name : {"certify", "attack", "oracle"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "experiment config (INI)")->required();
    sub->add_option("--out", out, "output path, '-' for stdout");
    sub->add_option("--workers", workers, "rollout threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  rlcert::ExperimentConfig config;
  rlcert::PolicyHandle policy;
  try {
    config = rlcert::load_config(config_path);
    if (command != "oracle") {
      if (!config.has_experiment) throw rlcert::ConfigError("missing [experiment] section");
      policy = rlcert::make_policy(config);
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (command == "certify") return cmd_certify(config, policy, out, workers);
    if (command == "attack") return cmd_attack(config, policy, out, workers);
    return cmd_oracle(config, out);
  } catch (const rlcert::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << command << " failed: " << e.what() << '\n';
    return kRunFailure;
  }
}

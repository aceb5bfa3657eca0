#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "divmin/experiment.hpp"
#include "divmin/suite.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kSuiteFailure = 1;
constexpr int kUsage = 2;
constexpr int kDivergence = 3;

int verify(int seeds, double tol_scale, const std::string& out, const std::string& fault, unsigned threads) {
  divmin::SuiteOptions options;
  options.seeds = seeds;
  options.tol_scale = tol_scale;
  options.inject_fault = fault;
  options.threads = threads;
  const auto result = divmin::run_suite(options);
  const std::string text = result.to_json(options).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream file(out, std::ios::binary);
    if (!file) throw divmin::Error(divmin::ErrorCode::kInvalidConfig, "cannot write '" + out + "'");
    file << text;
  }
  for (const auto& c : result.checks) {
    if (!c.passed) {
      std::cerr << "FAIL " << c.equation << " (" << c.name << "): max violation " << c.max_violation
                << " > " << c.tolerance << " at seed " << c.worst_seed << "\n";
    }
  }
  return result.passed ? kPass : kSuiteFailure;
}

int run(const std::string& path, const std::string& out, bool dry_run) {
  auto config = divmin::load_config(path);
  if (!out.empty()) config.output_dir = out;
  const auto objective = divmin::objective_of(config);
  if (dry_run) {
    std::cout << config.to_json().dump(2) << "\n";
    std::cout << "ok: " << objective.family << " (" << objective.equation << "), "
              << objective.parameters().size() << " parameters\n";
    return kPass;
  }
  const auto result = divmin::run_experiment(config);
  divmin::write_artifacts(config, result, config.output_dir, divmin::utc_timestamp());
  const auto& b = result.trace.final;
  std::cout << b.family << " (" << b.equation << "): total " << b.total << ", joint_kl " << b.joint_kl << ", "
            << divmin::to_string(result.trace.reason) << " after " << result.trace.rows.back().iter
            << " iterations -> " << config.output_dir << "\n";
  if (result.divergent) {
    std::cerr << "objective diverged\n";
    return kDivergence;
  }
  return kPass;
}

int gradcheck(const std::string& path) {
  const auto config = divmin::load_config(path);
  const auto report = divmin::gradcheck(config);
  std::cout << report.to_json().dump(2) << "\n";
  std::cout << "worst coordinate: " << (report.worst_coordinate.empty() ? "(none)" : report.worst_coordinate)
            << " relative deviation " << report.worst_deviation << "\n";
  return report.passed ? kPass : kSuiteFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divmin: exact tabular joint-KL decompositions and objectives"};
  app.require_subcommand(1);

  int seeds = 100;
  double tol_scale = 1.0;
  std::string verify_out, fault;
  unsigned threads = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run the identity and bound suite");
  verify_cmd->add_option("--seeds", seeds, "random systems per check")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--tol-scale", tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--out", verify_out, "write the JSON summary here instead of stdout");
  verify_cmd->add_option("--inject-fault", fault, "corrupt one check (negative control)");
  verify_cmd->add_option("--threads", threads, "worker threads (default: DIVMIN_THREADS or all cores)");

  std::string config_path, run_out;
  bool dry_run = false;
  auto* run_cmd = app.add_subcommand("run", "optimize the objective of a config");
  run_cmd->add_option("config", config_path, "experiment config (JSON)")->required();
  run_cmd->add_option("--out", run_out, "output directory (overrides output_dir)");
  run_cmd->add_flag("--dry-run", dry_run, "validate and print the resolved config");

  std::string grad_path;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and central-difference gradients");
  grad_cmd->add_option("config", grad_path, "experiment config (JSON)")->required();

  auto* list_cmd = app.add_subcommand("list", "list presets, objective families and suite checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*verify_cmd) return verify(seeds, tol_scale, verify_out, fault, threads);
    if (*run_cmd) return run(config_path, run_out, dry_run);
    if (*grad_cmd) return gradcheck(grad_path);
    if (*list_cmd) {
      std::cout << divmin::list_text();
      return kPass;
    }
  } catch (const divmin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == divmin::ErrorCode::kDivergent ? kDivergence : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

#pragma once

// Config-driven runs: parse, optimize, and write trace.csv / report.json / terms.svg.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divmin/families.hpp"
#include "divmin/optim.hpp"

namespace divmin {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

struct OptimConfig {
  double step = 1.0;
  int max_iters = 5000;
  double grad_tol = 1e-7;
  std::string init = "declared";  // declared | zeros | random
  double init_scale = 1.0;
  int restarts = 1;
  VarSet anneal_factors;
  std::vector<double> anneal_temperatures;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::string preset;
  nlohmann::json preset_options = nlohmann::json::object();
  nlohmann::json system;  // inline problem declaration, null when a preset is used
  std::optional<Horizon> horizon;
  std::string family;
  nlohmann::json family_options = nlohmann::json::object();
  OptimConfig optim;
  std::string output_dir = "out";
  bool plot = true;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::ordered_json to_json() const;
};

ExperimentConfig load_config(const std::string& path);

Problem problem_of(const ExperimentConfig& config);
Objective objective_of(const ExperimentConfig& config);

struct RunResult {
  OptimTrace trace;
  int restart = 0;
  bool divergent = false;
};

RunResult run_experiment(const ExperimentConfig& config);

nlohmann::ordered_json make_report(const ExperimentConfig& config, const RunResult& run,
                                   const std::string& timestamp);

/// Static SVG line chart of every term and the total against iteration.
std::string terms_svg(const OptimTrace& trace);

/// Writes trace.csv, report.json, scan.csv (point-mass scans) and terms.svg (when plotting) into dir.
void write_artifacts(const ExperimentConfig& config, const RunResult& run, const std::string& dir,
                     const std::string& timestamp);

struct GradcheckPoint {
  std::uint64_t seed = 0;
  GradientCheck check;
};

struct GradcheckReport {
  std::vector<GradcheckPoint> points;
  std::size_t parameters = 0;
  double worst_deviation = 0.0;
  std::string worst_coordinate;
  double worst_score_residual = 0.0;
  bool passed = true;

  nlohmann::ordered_json to_json() const;
};

GradcheckReport gradcheck(const ExperimentConfig& config, int points = 5, double tolerance = 1e-5);

std::string list_text();

std::string utc_timestamp();

}  // namespace divmin

#pragma once

// Seeded identity and bound checks over random systems and the presets.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace divmin {

struct CheckResult {
  std::string name;
  std::string equation;
  int seeds = 0;
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  int worst_seed = -1;
};

struct SuiteOptions {
  int seeds = 100;
  double tol_scale = 1.0;
  // Name or equation tag of a check to corrupt on purpose (negative control).
  std::string inject_fault;
  // 0 means: DIVMIN_THREADS if set, else hardware concurrency.
  unsigned threads = 0;
};

struct SuiteResult {
  std::vector<CheckResult> checks;
  bool passed = true;

  std::vector<std::string> failing_equations() const;
  nlohmann::ordered_json to_json(const SuiteOptions& options) const;
};

struct CheckInfo {
  std::string name;
  std::string equation;
  double tolerance;
};

const std::vector<CheckInfo>& suite_checks();

SuiteResult run_suite(const SuiteOptions& options);

/// Worker count honoring DIVMIN_THREADS.
unsigned worker_count(unsigned requested = 0);

}  // namespace divmin

#pragma once

// Gradients over phi, a finite-difference oracle and a deterministic optimizer.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "divmin/objective.hpp"

namespace divmin {

struct GradientReport {
  std::vector<double> gradient;
  std::string method;  // "analytic" or "central-difference"
  double max_abs = 0.0;
};

GradientReport analytic_gradient(const Objective& objective, std::span<const double> phi);
GradientReport finite_difference_gradient(const Objective& objective, std::span<const double> phi,
                                          double h = 1e-5);

struct GradientCheck {
  // max over coordinates of |g_a - g_fd| / max(1, |g_a|)
  double max_relative_deviation = 0.0;
  std::size_t worst_coordinate = 0;
  std::string worst_name;
  double score_residual = 0.0;
};

GradientCheck check_gradient(const Objective& objective, std::span<const double> phi, double h = 1e-5);

/// Norm of sum_w p(w) grad ln p(w); zero up to rounding at any phi.
double score_residual(const Objective& objective, std::span<const double> phi);

enum class Termination { kGradientTol, kMaxIters, kDivergence, kNoDecrease, kExhaustive };
std::string_view to_string(Termination reason);

struct OptimOptions {
  double step = 1.0;
  int max_iters = 5000;
  double grad_tol = 1e-7;
  int max_halvings = 30;
};

struct TraceRow {
  int iter = 0;
  std::uint64_t phi_hash = 0;
  double total = 0.0;
  TermList terms;
  double grad_norm = 0.0;
  double joint_kl = 0.0;
  double step = 0.0;
};

struct ScanRow {
  std::vector<int> selectors;  // concatenated selectors of every searched factor
  double total = 0.0;
  double joint_kl = 0.0;
};

struct OptimTrace {
  std::vector<TraceRow> rows;
  std::vector<ScanRow> scan;
  Termination reason = Termination::kMaxIters;
  std::vector<double> phi;
  // Point-mass selectors chosen by the scan, applied to `objective`.
  Objective objective;
  Breakdown final;

  explicit OptimTrace(Objective obj) : objective(std::move(obj)) {}
  void write_csv(std::ostream& os) const;
};

std::uint64_t hash_parameters(std::span<const double> phi);

/// Gradient descent with backtracking halving from phi0.
OptimTrace minimize(const Objective& objective, std::vector<double> phi0, const OptimOptions& options = {});

/// Exhaustive scan over the selectors of every point-mass factor at fixed phi, keeping the lowest total.
OptimTrace search_point_masses(const Objective& objective, std::span<const double> phi);

/// Scan (when the objective asks for it) and then descend on the remaining phi.
OptimTrace optimize(const Objective& objective, std::vector<double> phi0, const OptimOptions& options = {});

/// Descent repeated over a temperature schedule applied to the named softmax factors, warm-started.
OptimTrace anneal(const Objective& objective, std::vector<double> phi0, const VarSet& factors,
                  const std::vector<double>& temperatures, const OptimOptions& options = {});

}  // namespace divmin

#pragma once

// Objectives over phi expressed as linear combinations of expected log terms.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "divmin/decomp.hpp"
#include "divmin/systems.hpp"

namespace divmin {

/// Which log density a part takes the expectation of, under the actual joint.
enum class Source {
  kActual,         // ln p(of | given), exact conditional of the actual joint
  kTarget,         // ln q(of | given), exact conditional of the normalized target
  kActualFactors,  // sum of ln p_i over the listed actual factors (by child name)
  kTargetFactors,  // sum of ln f over the listed target factors (by label)
};

struct LogPart {
  Source source = Source::kActual;
  VarSet of;
  VarSet given;
  std::vector<std::string> factors;
  double sign = 1.0;
};

LogPart P(VarSet of, VarSet given = {});
LogPart Q(VarSet of, VarSet given = {});
LogPart PF(std::vector<std::string> children);
LogPart TF(std::vector<std::string> labels);
LogPart operator-(LogPart part);

struct TermSpec {
  std::string name;
  std::vector<LogPart> parts;
  // Contribution of this term to the objective total.
  double weight = 1.0;
};

struct Breakdown {
  std::string family;
  std::string equation;
  double total = 0.0;
  TermList terms;
  TermList diagnostics;
  Relation relation = Relation::kIdentity;
  // False when the total omits ln Z of the target.
  bool total_includes_log_partition = false;
  double joint_kl = 0.0;
  double log_partition = 0.0;
  // Identity: residual against joint_kl. Bound: distance above joint_kl.
  double slack = 0.0;
  bool divergent = false;

  double term(const std::string& name) const;
  double diagnostic(const std::string& name) const;
  bool has_diagnostic(const std::string& name) const;
  /// The total in the same normalization as joint_kl.
  double normalized_total() const { return total + (total_includes_log_partition ? 0.0 : log_partition); }
  bool certified(double tol = 1e-9) const;
  nlohmann::ordered_json to_json() const;
};

/// Everything materialized at one phi.
class EvalContext {
 public:
  EvalContext(const Problem& problem, std::span<const double> phi);
  explicit EvalContext(const Problem& problem);

  const Problem& problem() const { return problem_; }
  const TabularDistribution& p() const { return p_; }
  const UnnormalizedTable& q() const { return q_; }
  const std::vector<FactorTable>& target_factors() const { return factors_; }
  const std::vector<double>& log_q() const { return log_q_; }

  /// Per-outcome values of one part (unsigned).
  std::vector<double> values(const LogPart& part) const;
  /// E_p of a part (signed); sets *divergent when p has mass where the log is -inf.
  double expect(const LogPart& part, bool* divergent = nullptr) const;
  double expect(const std::vector<LogPart>& parts, bool* divergent = nullptr) const;

 private:
  Problem problem_;
  TabularDistribution p_;
  std::vector<FactorTable> factors_;
  std::vector<double> log_q_;
  UnnormalizedTable q_;
};

class Objective {
 public:
  Objective(std::string family_, std::string equation_, Problem problem_)
      : family(std::move(family_)), equation(std::move(equation_)), problem(std::move(problem_)) {}

  std::string family;
  std::string equation;
  Problem problem;
  std::vector<TermSpec> terms;
  Relation relation = Relation::kIdentity;
  bool total_includes_log_partition = false;
  std::function<void(const EvalContext&, Breakdown&)> diagnostics;
  // Point-mass factors the optimizer should search exhaustively.
  bool search_point_masses = false;

  std::vector<double> parameters() const { return problem_parameters(problem).values; }
  ParameterVector parameter_vector() const { return problem_parameters(problem); }
  Breakdown evaluate(std::span<const double> phi, bool with_diagnostics = true) const;
  Breakdown evaluate() const { return evaluate(parameters()); }
  /// Total only, without diagnostics or certificates.
  double value(std::span<const double> phi, bool* divergent = nullptr) const;
  /// Exact gradient of the total.
  std::vector<double> gradient(std::span<const double> phi) const;
  /// Sum over outcomes of p(w) * d ln p(w) / d phi.
  std::vector<double> score_expectation(std::span<const double> phi) const;
  Objective at(std::span<const double> phi) const;
};

}  // namespace divmin

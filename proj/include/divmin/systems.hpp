#pragma once

// Factored actual distributions, target products, parameters and problems.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divmin/prob.hpp"

namespace divmin {

enum class FactorKind { kFixed, kParameterized, kPointMass };

std::string_view to_string(FactorKind kind);
FactorKind factor_kind_from_string(std::string_view text);

/// Conditional p(child | parents). Tables and logits are indexed
/// [parent_index * cardinality(child) + outcome], parents in the listed order.
struct FactorSpec {
  std::string child;
  VarSet parents;
  FactorKind kind = FactorKind::kFixed;
  std::vector<double> values;
  std::vector<int> selector;
  // Parameterized factors use softmax(logits / temperature).
  double temperature = 1.0;
};

class ActualSystem {
 public:
  /// Validates the factorization; factors may be given in any order.
  ActualSystem(Scope variables, std::vector<FactorSpec> factors);

  const Scope& variables() const { return variables_; }
  /// factors()[i] belongs to variables()[i].
  const std::vector<FactorSpec>& factors() const { return factors_; }
  const std::vector<std::size_t>& topological_order() const { return order_; }

  std::size_t index(std::string_view name) const;
  const VariableSpec& variable(std::string_view name) const { return variables_[index(name)]; }
  const FactorSpec& factor(std::string_view child) const { return factors_[index(child)]; }

  /// Materialized conditional table of factor i, same layout as FactorSpec::values.
  const std::vector<double>& conditional(std::size_t i) const { return conditionals_[i]; }
  std::size_t slice_count(std::size_t i) const;

  VarSet names_with_role(Role role) const;
  ActualSystem with_factor(FactorSpec factor) const;

 private:
  Scope variables_;
  std::vector<FactorSpec> factors_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<double>> conditionals_;
};

std::vector<double> softmax_slices(std::span<const double> logits, int cardinality,
                                   double temperature = 1.0);

TabularDistribution build_joint(const ActualSystem& system);
/// Multiplies factors in the given order; any topological order yields the same table.
TabularDistribution build_joint(const ActualSystem& system,
                                const std::vector<std::size_t>& order);

enum class InterventionMode { kDo, kCondition };

/// Replaces each realized variable's factor by a point mass (do-substitution).
ActualSystem intervene(const ActualSystem& system, const Assignment& realized);

/// Actual distribution after realizing `realized`, under either semantics.
TabularDistribution realize(const ActualSystem& system, const Assignment& realized,
                            InterventionMode mode);

struct ParamCoord {
  std::string factor;
  std::size_t slice = 0;
  int outcome = 0;
};

struct ParameterVector {
  std::vector<double> values;
  std::vector<ParamCoord> coords;
};

ParameterVector get_parameters(const ActualSystem& system);
ActualSystem set_parameters(const ActualSystem& system, std::span<const double> phi);

enum class TargetKind { kTable, kReward, kParameterized, kActualCopy };

std::string_view to_string(TargetKind kind);

/// One factor of the target product. Conditional kinds (parameterized,
/// actual-copy, normalized tables) list the child last in `scope`.
struct TargetFactor {
  std::string label;
  TargetKind kind = TargetKind::kTable;
  VarSet scope;
  // Table weights, reward values r (factor exp(r)), or logits; row-major in scope order.
  std::vector<double> values;
  bool normalized = false;
};

struct TargetSpec {
  std::vector<TargetFactor> factors;
};

TargetFactor table_factor(std::string label, VarSet scope, std::vector<double> values,
                          bool normalized);
TargetFactor reward_factor(std::string label, VarSet scope, std::vector<double> r);
TargetFactor parameterized_factor(std::string label, VarSet scope, std::vector<double> logits);
TargetFactor actual_copy(const ActualSystem& system, const std::string& child,
                         std::string label = "");

/// A target factor evaluated over its own scope, in log space.
struct FactorTable {
  std::string label;
  VarSet scope;
  std::vector<double> log_values;
};

/// Resolves every factor against `scope`; actual copies need `actual`.
std::vector<FactorTable> resolve_target(const TargetSpec& target, const Scope& scope,
                                        const ActualSystem* actual);

UnnormalizedTable build_target(const TargetSpec& target, const Scope& scope,
                               const ActualSystem* actual = nullptr);

/// Log weights of the target product at every outcome of `scope`.
std::vector<double> target_log_weights(const std::vector<FactorTable>& factors,
                                       const Scope& scope);

struct Horizon {
  int T = 1;
  int K = 1;
  int split = 1;

  void validate(bool has_skills) const;
};

struct Problem {
  std::string name;
  ActualSystem system;
  TargetSpec target;
  std::vector<TargetFactor> rewards;
  Horizon horizon;
  // Passive dynamics for KL-regularized control: child -> table over the actual factor's parents.
  std::map<std::string, std::vector<double>> passive;
};

/// Model factors followed by reward factors.
TargetSpec full_target(const Problem& problem);
UnnormalizedTable build_target(const Problem& problem);

/// Actual logits ("p:" coordinates) followed by target logits ("q:" coordinates).
ParameterVector problem_parameters(const Problem& problem);
Problem with_parameters(const Problem& problem, std::span<const double> phi);

/// Validates the problem's target against its system and horizon.
void validate_problem(const Problem& problem);

std::vector<std::string> preset_names();
Problem make_preset(std::string_view name, const nlohmann::json& options = nlohmann::json::object());

/// Counter-based generator: value i of stream s depends only on (seed, s, i).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  double uniform();
  double normal();
  int below(int n);
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Random instances used by the property suites.
Problem random_problem(std::uint64_t seed, int max_vars = 5);
Problem random_maxent_problem(std::uint64_t seed);
Problem random_empowerment_problem(std::uint64_t seed);
Problem random_skill_problem(std::uint64_t seed);
Problem random_infogain_problem(std::uint64_t seed);
std::vector<double> random_parameters(const Problem& problem, std::uint64_t seed,
                                      double scale = 1.0);

/// JSON declaration of a problem (variables, factors, target_factors, rewards, horizon).
Problem problem_from_json(const nlohmann::json& doc);
nlohmann::ordered_json problem_to_json(const Problem& problem);

}  // namespace divmin

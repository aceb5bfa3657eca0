#pragma once

// Exact finite-probability engine. Tables are dense over the product of
// their scope's cardinalities, row-major with the last variable fastest.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "divmin/error.hpp"

namespace divmin {

enum class Role { kPastInput, kFutureInput, kAction, kSkill, kLatentState, kParameter };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);
bool is_input(Role role);

struct VariableSpec {
  std::string name;
  int cardinality = 1;
  Role role = Role::kLatentState;
  // Time index used by per-step objective terms; 0 when the variable is untimed.
  int step = 0;

  bool operator==(const VariableSpec&) const = default;
};

using Scope = std::vector<VariableSpec>;
using VarSet = std::vector<std::string>;

/// Product spaces above this size are refused.
inline constexpr std::size_t kMaxOutcomes = std::size_t{1} << 22;

std::size_t outcome_count(const Scope& scope);

/// Position of `name` in `scope`, or -1.
int index_of(const Scope& scope, std::string_view name);

/// Variables of `scope` whose names are in `names`, in scope order. Throws on unknown names.
Scope subscope(const Scope& scope, const VarSet& names);

VarSet names_of(const Scope& scope);

/// For every outcome of `scope`, the index of its projection onto `names`.
std::vector<std::size_t> projection(const Scope& scope, const VarSet& names);

/// Like projection, but the sub-index is mixed-radix in the order `names` is given.
std::vector<std::size_t> ordered_projection(const Scope& scope, const VarSet& names);

/// Per-variable outcome indices of a flat index.
std::vector<int> decode(const Scope& scope, std::size_t index);
std::size_t encode(const Scope& scope, std::span<const int> values);

struct Assignment {
  std::map<std::string, int> bindings;

  bool contains(const std::string& name) const { return bindings.count(name) > 0; }
  int at(const std::string& name) const { return bindings.at(name); }
  /// Throws unless every bound name is in `scope` with an in-range index.
  void validate(const Scope& scope) const;
};

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double compensated_total(std::span<const double> values);

class TabularDistribution {
 public:
  /// Validates non-negativity and normalization within 1e-12 (relative to size).
  TabularDistribution(Scope scope, std::vector<double> probabilities);

  const Scope& scope() const { return scope_; }
  std::span<const double> probabilities() const { return probabilities_; }
  std::size_t size() const { return probabilities_.size(); }
  double operator[](std::size_t i) const { return probabilities_[i]; }
  double at(std::span<const int> values) const;

 private:
  Scope scope_;
  std::vector<double> probabilities_;
};

/// Non-negative weights with ln Z cached at construction.
class UnnormalizedTable {
 public:
  UnnormalizedTable(Scope scope, std::vector<double> weights);

  static UnnormalizedTable from(const TabularDistribution& dist);

  const Scope& scope() const { return scope_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  double log_partition() const { return log_partition_; }
  TabularDistribution normalized() const;

 private:
  Scope scope_;
  std::vector<double> weights_;
  double log_partition_;
};

/// Conditional table d(targets | given), stored as [given_index][target_index].
struct ConditionalTable {
  Scope targets;
  Scope given;
  std::vector<double> values;
};

/// A value in nats that may be infinite because of a support mismatch.
struct Nats {
  double value = 0.0;
  bool divergent = false;
};

struct KlResult {
  double kl_nats = 0.0;
  double log_partition = 0.0;
  bool divergent = false;
};

TabularDistribution marginalize(const TabularDistribution& dist, const VarSet& keep);

/// Renormalized slice; the evidence variables leave the scope.
TabularDistribution condition(const TabularDistribution& dist, const Assignment& evidence);

/// Like condition, but evidence variables stay in scope as point masses.
TabularDistribution condition_in_place(const TabularDistribution& dist,
                                       const Assignment& evidence);

double entropy(const TabularDistribution& dist, const VarSet& subset);
double conditional_entropy(const TabularDistribution& dist, const VarSet& targets,
                           const VarSet& conditions);

/// KL(p || q/Z) together with ln Z.
KlResult kl(const TabularDistribution& p, const UnnormalizedTable& q);

/// E_{p(b)} KL[p(a|b) || q(a|b)], where q is normalized internally.
Nats expected_conditional_kl(const TabularDistribution& p, const UnnormalizedTable& q,
                             const VarSet& a_vars, const VarSet& b_vars);

double mutual_information(const TabularDistribution& dist, const VarSet& x_vars,
                          const VarSet& z_vars);

/// E[ln q(x|z) - ln p(x)] for a decoder normalized per z-slice.
Nats variational_mi_lower_bound(const TabularDistribution& p,
                                const ConditionalTable& q_conditional, const VarSet& x_vars,
                                const VarSet& z_vars);

/// E_p[ln d(of | given)] where d is any non-negative table over p's scope.
/// An empty `of` contributes 0; an empty `given` yields the normalized marginal.
Nats expected_log_conditional(const TabularDistribution& p, const UnnormalizedTable& d,
                              const VarSet& of, const VarSet& given);

/// Exact conditional table d(targets | given) of a joint table. Slices with
/// zero mass are filled uniformly.
ConditionalTable conditional_of(const UnnormalizedTable& d, const VarSet& targets,
                                const VarSet& given);

double total_variation(std::span<const double> a, std::span<const double> b);

}  // namespace divmin

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "divmin/prob.hpp"

namespace divmin {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownVariable: return "unknown-variable";
    case ErrorCode::kEmptySubset: return "empty-subset";
    case ErrorCode::kOverlappingSubsets: return "overlapping-subsets";
    case ErrorCode::kConditioningOnNull: return "conditioning-on-null";
    case ErrorCode::kScopeMismatch: return "scope-mismatch";
    case ErrorCode::kZeroMass: return "zero-mass";
    case ErrorCode::kCapacityExceeded: return "capacity-exceeded";
    case ErrorCode::kInvalidTable: return "invalid-table";
    case ErrorCode::kInvalidSystem: return "invalid-system";
    case ErrorCode::kInvalidIntervention: return "invalid-intervention";
    case ErrorCode::kInvalidParameters: return "invalid-parameters";
    case ErrorCode::kUnknownPreset: return "unknown-preset";
    case ErrorCode::kInvalidObjective: return "invalid-objective";
    case ErrorCode::kDivergent: return "divergent";
    case ErrorCode::kInvalidConfig: return "invalid-config";
  }
  return "unknown";
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kPastInput: return "past-input";
    case Role::kFutureInput: return "future-input";
    case Role::kAction: return "action";
    case Role::kSkill: return "skill";
    case Role::kLatentState: return "latent-state";
    case Role::kParameter: return "parameter";
  }
  return "latent-state";
}

Role role_from_string(std::string_view text) {
  for (Role r : {Role::kPastInput, Role::kFutureInput, Role::kAction, Role::kSkill,
                 Role::kLatentState, Role::kParameter}) {
    if (to_string(r) == text) return r;
  }
  throw Error(ErrorCode::kInvalidSystem, "unknown role '" + std::string(text) + "'");
}

bool is_input(Role role) { return role == Role::kPastInput || role == Role::kFutureInput; }

std::size_t outcome_count(const Scope& scope) {
  std::size_t n = 1;
  for (const auto& v : scope) {
    if (v.cardinality < 1) {
      throw Error(ErrorCode::kInvalidTable, "variable '" + v.name + "' has cardinality < 1");
    }
    n *= static_cast<std::size_t>(v.cardinality);
    if (n > kMaxOutcomes) {
      throw Error(ErrorCode::kCapacityExceeded,
                  "product outcome space exceeds 2^22 outcomes");
    }
  }
  return n;
}

int index_of(const Scope& scope, std::string_view name) {
  for (std::size_t i = 0; i < scope.size(); ++i) {
    if (scope[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Scope subscope(const Scope& scope, const VarSet& names) {
  for (const auto& n : names) {
    if (index_of(scope, n) < 0) {
      throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + n + "'");
    }
  }
  Scope out;
  for (const auto& v : scope) {
    if (std::find(names.begin(), names.end(), v.name) != names.end()) out.push_back(v);
  }
  return out;
}

VarSet names_of(const Scope& scope) {
  VarSet out;
  out.reserve(scope.size());
  for (const auto& v : scope) out.push_back(v.name);
  return out;
}

std::vector<std::size_t> projection(const Scope& scope, const VarSet& names) {
  const Scope sub = subscope(scope, names);
  const std::size_t n = outcome_count(scope);
  // Stride of each full-scope variable inside the subscope (0 when dropped).
  std::vector<std::size_t> sub_stride(scope.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = sub.size(); k-- > 0;) {
    sub_stride[static_cast<std::size_t>(index_of(scope, sub[k].name))] = stride;
    stride *= static_cast<std::size_t>(sub[k].cardinality);
  }
  std::vector<std::size_t> out(n, 0);
  std::vector<int> digits(scope.size(), 0);
  std::size_t current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = current;
    // Odometer increment, last variable fastest.
    for (std::size_t k = scope.size(); k-- > 0;) {
      if (++digits[k] < scope[k].cardinality) {
        current += sub_stride[k];
        break;
      }
      current -= sub_stride[k] * static_cast<std::size_t>(scope[k].cardinality - 1);
      digits[k] = 0;
    }
  }
  return out;
}

std::vector<std::size_t> ordered_projection(const Scope& scope, const VarSet& names) {
  const std::size_t n = outcome_count(scope);
  std::vector<std::size_t> stride(scope.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = names.size(); k-- > 0;) {
    const int pos = index_of(scope, names[k]);
    if (pos < 0) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + names[k] + "'");
    if (stride[static_cast<std::size_t>(pos)] != 0) {
      throw Error(ErrorCode::kOverlappingSubsets, "variable '" + names[k] + "' listed twice");
    }
    stride[static_cast<std::size_t>(pos)] = s;
    s *= static_cast<std::size_t>(scope[static_cast<std::size_t>(pos)].cardinality);
  }
  std::vector<std::size_t> out(n, 0);
  std::vector<int> digits(scope.size(), 0);
  std::size_t current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = current;
    for (std::size_t k = scope.size(); k-- > 0;) {
      if (++digits[k] < scope[k].cardinality) {
        current += stride[k];
        break;
      }
      current -= stride[k] * static_cast<std::size_t>(scope[k].cardinality - 1);
      digits[k] = 0;
    }
  }
  return out;
}

std::vector<int> decode(const Scope& scope, std::size_t index) {
  std::vector<int> out(scope.size(), 0);
  for (std::size_t k = scope.size(); k-- > 0;) {
    const auto card = static_cast<std::size_t>(scope[k].cardinality);
    out[k] = static_cast<int>(index % card);
    index /= card;
  }
  return out;
}

std::size_t encode(const Scope& scope, std::span<const int> values) {
  std::size_t index = 0;
  for (std::size_t k = 0; k < scope.size(); ++k) {
    index = index * static_cast<std::size_t>(scope[k].cardinality) +
            static_cast<std::size_t>(values[k]);
  }
  return index;
}

void Assignment::validate(const Scope& scope) const {
  for (const auto& [name, value] : bindings) {
    const int k = index_of(scope, name);
    if (k < 0) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + name + "'");
    if (value < 0 || value >= scope[static_cast<std::size_t>(k)].cardinality) {
      throw Error(ErrorCode::kInvalidTable,
                  "outcome " + std::to_string(value) + " out of range for '" + name + "'");
    }
  }
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double compensated_total(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

namespace {

void check_scope_names(const Scope& scope) {
  if (scope.empty()) throw Error(ErrorCode::kInvalidTable, "scope must be non-empty");
  std::set<std::string> seen;
  for (const auto& v : scope) {
    if (!seen.insert(v.name).second) {
      throw Error(ErrorCode::kInvalidTable, "duplicate variable '" + v.name + "' in scope");
    }
  }
}

}  // namespace

TabularDistribution::TabularDistribution(Scope scope, std::vector<double> probabilities)
    : scope_(std::move(scope)), probabilities_(std::move(probabilities)) {
  check_scope_names(scope_);
  if (probabilities_.size() != outcome_count(scope_)) {
    throw Error(ErrorCode::kInvalidTable, "probability array does not match scope size");
  }
  for (double p : probabilities_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::kInvalidTable, "probabilities must be finite and non-negative");
    }
  }
  const double total = compensated_total(probabilities_);
  if (std::abs(total - 1.0) > 1e-12 * std::max<double>(1.0, std::sqrt(probabilities_.size()))) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "probabilities sum to " << total << ", not 1";
    throw Error(ErrorCode::kInvalidTable, msg.str());
  }
}

double TabularDistribution::at(std::span<const int> values) const {
  return probabilities_[encode(scope_, values)];
}

UnnormalizedTable::UnnormalizedTable(Scope scope, std::vector<double> weights)
    : scope_(std::move(scope)), weights_(std::move(weights)) {
  check_scope_names(scope_);
  if (weights_.size() != outcome_count(scope_)) {
    throw Error(ErrorCode::kInvalidTable, "weight array does not match scope size");
  }
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidTable, "weights must be finite and non-negative");
    }
  }
  const double total = compensated_total(weights_);
  if (!(total > 0.0)) throw Error(ErrorCode::kZeroMass, "table has zero total mass");
  log_partition_ = std::log(total);
}

UnnormalizedTable UnnormalizedTable::from(const TabularDistribution& dist) {
  return UnnormalizedTable(dist.scope(),
                           std::vector<double>(dist.probabilities().begin(),
                                               dist.probabilities().end()));
}

TabularDistribution UnnormalizedTable::normalized() const {
  const double z = compensated_total(weights_);
  std::vector<double> probs(weights_.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = weights_[i] / z;
  return TabularDistribution(scope_, std::move(probs));
}

namespace {

void require_names(const Scope& scope, const VarSet& names) {
  for (const auto& n : names) {
    if (index_of(scope, n) < 0) {
      throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + n + "'");
    }
  }
}

// Sums `values` into buckets given by a projection; compensated per bucket.
std::vector<double> bucket_sums(std::span<const double> values,
                                const std::vector<std::size_t>& proj, std::size_t buckets) {
  std::vector<CompensatedSum> acc(buckets);
  for (std::size_t i = 0; i < values.size(); ++i) acc[proj[i]].add(values[i]);
  std::vector<double> out(buckets);
  for (std::size_t b = 0; b < buckets; ++b) out[b] = acc[b].value();
  return out;
}

}  // namespace

TabularDistribution marginalize(const TabularDistribution& dist, const VarSet& keep) {
  if (keep.empty()) throw Error(ErrorCode::kEmptySubset, "marginalize: empty keep set");
  require_names(dist.scope(), keep);
  Scope sub = subscope(dist.scope(), keep);
  const auto proj = projection(dist.scope(), keep);
  auto sums = bucket_sums(dist.probabilities(), proj, outcome_count(sub));
  // Renormalize away the rounding left by bucketing.
  const double total = compensated_total(sums);
  for (double& s : sums) s /= total;
  return TabularDistribution(std::move(sub), std::move(sums));
}

namespace {

std::vector<double> evidence_slice(const TabularDistribution& dist, const Assignment& evidence,
                                   double* mass) {
  evidence.validate(dist.scope());
  std::vector<double> masked(dist.size(), 0.0);
  std::vector<std::pair<std::size_t, int>> checks;
  for (const auto& [name, value] : evidence.bindings) {
    checks.emplace_back(static_cast<std::size_t>(index_of(dist.scope(), name)), value);
  }
  CompensatedSum total;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] == 0.0) continue;
    const auto digits = decode(dist.scope(), i);
    bool match = true;
    for (const auto& [k, value] : checks) match = match && digits[k] == value;
    if (match) {
      masked[i] = dist[i];
      total.add(dist[i]);
    }
  }
  *mass = total.value();
  if (!(*mass > 0.0)) {
    throw Error(ErrorCode::kConditioningOnNull, "conditioning on a zero-probability event");
  }
  return masked;
}

}  // namespace

TabularDistribution condition_in_place(const TabularDistribution& dist,
                                       const Assignment& evidence) {
  double mass = 0.0;
  auto masked = evidence_slice(dist, evidence, &mass);
  for (double& m : masked) m /= mass;
  return TabularDistribution(dist.scope(), std::move(masked));
}

TabularDistribution condition(const TabularDistribution& dist, const Assignment& evidence) {
  if (evidence.bindings.empty()) return dist;
  VarSet rest;
  for (const auto& v : dist.scope()) {
    if (!evidence.contains(v.name)) rest.push_back(v.name);
  }
  if (rest.empty()) {
    throw Error(ErrorCode::kEmptySubset, "condition: evidence covers the whole scope");
  }
  return marginalize(condition_in_place(dist, evidence), rest);
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kScopeMismatch, "size mismatch");
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(std::abs(a[i] - b[i]));
  return 0.5 * s.value();
}

}  // namespace divmin

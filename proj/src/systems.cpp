#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "divmin/systems.hpp"

namespace divmin {

std::string_view to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kFixed: return "fixed";
    case FactorKind::kParameterized: return "parameterized";
    case FactorKind::kPointMass: return "point-mass";
  }
  return "fixed";
}

FactorKind factor_kind_from_string(std::string_view text) {
  for (FactorKind k : {FactorKind::kFixed, FactorKind::kParameterized, FactorKind::kPointMass}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::kInvalidSystem, "unknown factor kind '" + std::string(text) + "'");
}

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kTable: return "table";
    case TargetKind::kReward: return "reward";
    case TargetKind::kParameterized: return "parameterized";
    case TargetKind::kActualCopy: return "actual-copy";
  }
  return "table";
}

std::vector<double> softmax_slices(std::span<const double> logits, int cardinality,
                                   double temperature) {
  const auto card = static_cast<std::size_t>(cardinality);
  std::vector<double> out(logits.size());
  for (std::size_t base = 0; base < logits.size(); base += card) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < card; ++k) hi = std::max(hi, logits[base + k] / temperature);
    double total = 0.0;
    for (std::size_t k = 0; k < card; ++k) {
      out[base + k] = std::exp(logits[base + k] / temperature - hi);
      total += out[base + k];
    }
    for (std::size_t k = 0; k < card; ++k) out[base + k] /= total;
  }
  return out;
}

namespace {

std::size_t slices_for(const Scope& vars, const VarSet& parents) {
  std::size_t n = 1;
  for (const auto& p : parents) {
    const int k = index_of(vars, p);
    n *= static_cast<std::size_t>(vars[static_cast<std::size_t>(k)].cardinality);
  }
  return n;
}

void validate_factor(const Scope& vars, const FactorSpec& f, int card) {
  std::set<std::string> seen;
  for (const auto& p : f.parents) {
    if (index_of(vars, p) < 0) {
      throw Error(ErrorCode::kUnknownVariable,
                  "factor for '" + f.child + "' has unknown parent '" + p + "'");
    }
    if (p == f.child) {
      throw Error(ErrorCode::kInvalidSystem, "factor for '" + f.child + "' lists itself as parent");
    }
    if (!seen.insert(p).second) {
      throw Error(ErrorCode::kInvalidSystem, "factor for '" + f.child + "' repeats parent '" + p + "'");
    }
  }
  const std::size_t slices = slices_for(vars, f.parents);
  const std::size_t expected = slices * static_cast<std::size_t>(card);
  switch (f.kind) {
    case FactorKind::kFixed: {
      if (f.values.size() != expected) {
        throw Error(ErrorCode::kInvalidSystem, "fixed table for '" + f.child + "' has " +
                                                   std::to_string(f.values.size()) +
                                                   " entries, expected " + std::to_string(expected));
      }
      for (std::size_t s = 0; s < slices; ++s) {
        CompensatedSum total;
        for (int k = 0; k < card; ++k) {
          const double v = f.values[s * static_cast<std::size_t>(card) + static_cast<std::size_t>(k)];
          if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidTable,
                        "fixed table for '" + f.child + "' has a negative or non-finite entry");
          }
          total.add(v);
        }
        if (std::abs(total.value() - 1.0) > 1e-12) {
          throw Error(ErrorCode::kInvalidTable, "fixed table for '" + f.child + "' slice " +
                                                    std::to_string(s) + " is not normalized");
        }
      }
      break;
    }
    case FactorKind::kParameterized:
      if (f.values.size() != expected) {
        throw Error(ErrorCode::kInvalidSystem, "logits for '" + f.child + "' have " +
                                                   std::to_string(f.values.size()) +
                                                   " entries, expected " + std::to_string(expected));
      }
      for (double v : f.values) {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::kInvalidParameters, "non-finite logit for '" + f.child + "'");
        }
      }
      if (!(f.temperature > 0.0) || !std::isfinite(f.temperature)) {
        throw Error(ErrorCode::kInvalidSystem, "temperature for '" + f.child + "' must be > 0");
      }
      break;
    case FactorKind::kPointMass:
      if (f.selector.size() != slices) {
        throw Error(ErrorCode::kInvalidSystem, "selector for '" + f.child + "' has " +
                                                   std::to_string(f.selector.size()) +
                                                   " entries, expected " + std::to_string(slices));
      }
      for (int s : f.selector) {
        if (s < 0 || s >= card) {
          throw Error(ErrorCode::kInvalidSystem, "selector for '" + f.child + "' out of range");
        }
      }
      break;
  }
}

std::vector<double> materialize(const FactorSpec& f, int card, std::size_t slices) {
  switch (f.kind) {
    case FactorKind::kFixed: return f.values;
    case FactorKind::kParameterized: return softmax_slices(f.values, card, f.temperature);
    case FactorKind::kPointMass: {
      std::vector<double> out(slices * static_cast<std::size_t>(card), 0.0);
      for (std::size_t s = 0; s < slices; ++s) {
        out[s * static_cast<std::size_t>(card) + static_cast<std::size_t>(f.selector[s])] = 1.0;
      }
      return out;
    }
  }
  return {};
}

}  // namespace

ActualSystem::ActualSystem(Scope variables, std::vector<FactorSpec> factors)
    : variables_(std::move(variables)) {
  if (variables_.empty()) throw Error(ErrorCode::kInvalidSystem, "system has no variables");
  std::set<std::string> names;
  for (const auto& v : variables_) {
    if (v.name.empty()) throw Error(ErrorCode::kInvalidSystem, "variable with empty name");
    if (v.cardinality < 1) {
      throw Error(ErrorCode::kInvalidSystem, "variable '" + v.name + "' has cardinality < 1");
    }
    if (!names.insert(v.name).second) {
      throw Error(ErrorCode::kInvalidSystem, "duplicate variable '" + v.name + "'");
    }
  }
  outcome_count(variables_);

  std::vector<std::optional<FactorSpec>> slots(variables_.size());
  for (auto& f : factors) {
    const int k = index_of(variables_, f.child);
    if (k < 0) {
      throw Error(ErrorCode::kUnknownVariable, "factor for unknown variable '" + f.child + "'");
    }
    if (slots[static_cast<std::size_t>(k)]) {
      throw Error(ErrorCode::kInvalidSystem, "more than one factor for '" + f.child + "'");
    }
    slots[static_cast<std::size_t>(k)] = std::move(f);
  }
  bool has_phi = false;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (!slots[i]) {
      throw Error(ErrorCode::kInvalidSystem, "no factor for '" + variables_[i].name + "'");
    }
    validate_factor(variables_, *slots[i], variables_[i].cardinality);
    has_phi = has_phi || slots[i]->kind != FactorKind::kFixed;
    factors_.push_back(std::move(*slots[i]));
  }
  if (!has_phi) {
    throw Error(ErrorCode::kInvalidSystem,
                "system needs at least one parameterized or point-mass factor");
  }

  // Kahn's algorithm, lowest variable index first for a reproducible order.
  std::vector<int> pending(variables_.size(), 0);
  std::vector<std::vector<std::size_t>> children(variables_.size());
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    for (const auto& p : factors_[i].parents) {
      children[static_cast<std::size_t>(index_of(variables_, p))].push_back(i);
      ++pending[i];
    }
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (pending[i] == 0) ready.insert(i);
  }
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    order_.push_back(i);
    for (std::size_t c : children[i]) {
      if (--pending[c] == 0) ready.insert(c);
    }
  }
  if (order_.size() != variables_.size()) {
    throw Error(ErrorCode::kInvalidSystem, "factor graph contains a cycle");
  }

  for (std::size_t i = 0; i < factors_.size(); ++i) {
    conditionals_.push_back(
        materialize(factors_[i], variables_[i].cardinality, slice_count(i)));
  }
}

std::size_t ActualSystem::index(std::string_view name) const {
  const int k = index_of(variables_, name);
  if (k < 0) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + std::string(name) + "'");
  return static_cast<std::size_t>(k);
}

std::size_t ActualSystem::slice_count(std::size_t i) const {
  return slices_for(variables_, factors_[i].parents);
}

VarSet ActualSystem::names_with_role(Role role) const {
  VarSet out;
  for (const auto& v : variables_) {
    if (v.role == role) out.push_back(v.name);
  }
  return out;
}

ActualSystem ActualSystem::with_factor(FactorSpec factor) const {
  std::vector<FactorSpec> fs = factors_;
  fs[index(factor.child)] = std::move(factor);
  return ActualSystem(variables_, std::move(fs));
}

TabularDistribution build_joint(const ActualSystem& system) {
  return build_joint(system, system.topological_order());
}

TabularDistribution build_joint(const ActualSystem& system,
                                const std::vector<std::size_t>& order) {
  const Scope& vars = system.variables();
  if (order.size() != vars.size()) {
    throw Error(ErrorCode::kInvalidSystem, "order must list every factor once");
  }
  std::vector<int> position(vars.size(), -1);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (order[r] >= vars.size() || position[order[r]] >= 0) {
      throw Error(ErrorCode::kInvalidSystem, "order must list every factor once");
    }
    position[order[r]] = static_cast<int>(r);
  }
  for (std::size_t i = 0; i < vars.size(); ++i) {
    for (const auto& p : system.factors()[i].parents) {
      if (position[system.index(p)] > position[i]) {
        throw Error(ErrorCode::kInvalidSystem, "order is not topological");
      }
    }
  }
  const std::size_t n = outcome_count(vars);
  std::vector<double> probs(n, 1.0);
  for (std::size_t i : order) {
    const auto& f = system.factors()[i];
    VarSet local = f.parents;
    local.push_back(f.child);
    const auto idx = ordered_projection(vars, local);
    const auto& table = system.conditional(i);
    for (std::size_t w = 0; w < n; ++w) probs[w] *= table[idx[w]];
  }
  return TabularDistribution(vars, std::move(probs));
}

ActualSystem intervene(const ActualSystem& system, const Assignment& realized) {
  realized.validate(system.variables());
  std::vector<FactorSpec> fs = system.factors();
  for (const auto& [name, value] : realized.bindings) {
    const auto& v = system.variable(name);
    if (v.role != Role::kAction && v.role != Role::kSkill && v.role != Role::kPastInput) {
      throw Error(ErrorCode::kInvalidIntervention,
                  "cannot realize '" + name + "' with role " + std::string(to_string(v.role)));
    }
    FactorSpec& f = fs[system.index(name)];
    f.parents.clear();
    f.kind = FactorKind::kPointMass;
    f.values.clear();
    f.selector = {value};
  }
  return ActualSystem(system.variables(), std::move(fs));
}

TabularDistribution realize(const ActualSystem& system, const Assignment& realized,
                            InterventionMode mode) {
  if (mode == InterventionMode::kDo) return build_joint(intervene(system, realized));
  for (const auto& [name, value] : realized.bindings) {
    const Role r = system.variable(name).role;
    if (r != Role::kAction && r != Role::kSkill && r != Role::kPastInput) {
      throw Error(ErrorCode::kInvalidIntervention, "cannot realize '" + name + "'");
    }
  }
  return condition_in_place(build_joint(system), realized);
}

ParameterVector get_parameters(const ActualSystem& system) {
  ParameterVector out;
  for (std::size_t i = 0; i < system.factors().size(); ++i) {
    const auto& f = system.factors()[i];
    if (f.kind != FactorKind::kParameterized) continue;
    const int card = system.variables()[i].cardinality;
    for (std::size_t j = 0; j < f.values.size(); ++j) {
      out.values.push_back(f.values[j]);
      out.coords.push_back({"p:" + f.child, j / static_cast<std::size_t>(card),
                            static_cast<int>(j % static_cast<std::size_t>(card))});
    }
  }
  return out;
}

ActualSystem set_parameters(const ActualSystem& system, std::span<const double> phi) {
  std::vector<FactorSpec> fs = system.factors();
  std::size_t cursor = 0;
  for (auto& f : fs) {
    if (f.kind != FactorKind::kParameterized) continue;
    if (cursor + f.values.size() > phi.size()) {
      throw Error(ErrorCode::kInvalidParameters, "parameter vector is too short");
    }
    std::copy(phi.begin() + static_cast<std::ptrdiff_t>(cursor),
              phi.begin() + static_cast<std::ptrdiff_t>(cursor + f.values.size()),
              f.values.begin());
    cursor += f.values.size();
  }
  if (cursor != phi.size()) throw Error(ErrorCode::kInvalidParameters, "parameter vector is too long");
  for (double v : phi) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidParameters, "non-finite parameter");
  }
  return ActualSystem(system.variables(), std::move(fs));
}

TargetFactor table_factor(std::string label, VarSet scope, std::vector<double> values,
                          bool normalized) {
  return {std::move(label), TargetKind::kTable, std::move(scope), std::move(values), normalized};
}

TargetFactor reward_factor(std::string label, VarSet scope, std::vector<double> r) {
  return {std::move(label), TargetKind::kReward, std::move(scope), std::move(r), false};
}

TargetFactor parameterized_factor(std::string label, VarSet scope, std::vector<double> logits) {
  return {std::move(label), TargetKind::kParameterized, std::move(scope), std::move(logits), true};
}

TargetFactor actual_copy(const ActualSystem& system, const std::string& child,
                         std::string label) {
  const auto& f = system.factor(child);
  VarSet scope = f.parents;
  scope.push_back(child);
  if (label.empty()) label = "copy:" + child;
  return {std::move(label), TargetKind::kActualCopy, std::move(scope), {}, true};
}

namespace {

std::size_t scope_size(const Scope& scope, const VarSet& names) {
  std::size_t n = 1;
  for (const auto& name : names) {
    const int k = index_of(scope, name);
    if (k < 0) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + name + "'");
    n *= static_cast<std::size_t>(scope[static_cast<std::size_t>(k)].cardinality);
  }
  return n;
}

std::vector<double> logs_of(const std::vector<double>& linear) {
  std::vector<double> out(linear.size());
  for (std::size_t i = 0; i < linear.size(); ++i) {
    out[i] = linear[i] > 0.0 ? std::log(linear[i]) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

std::vector<FactorTable> resolve_target(const TargetSpec& target, const Scope& scope,
                                        const ActualSystem* actual) {
  std::vector<FactorTable> out;
  for (const auto& f : target.factors) {
    if (f.scope.empty()) {
      throw Error(ErrorCode::kInvalidTable, "target factor '" + f.label + "' has empty scope");
    }
    std::set<std::string> seen(f.scope.begin(), f.scope.end());
    if (seen.size() != f.scope.size()) {
      throw Error(ErrorCode::kInvalidTable, "target factor '" + f.label + "' repeats a variable");
    }
    const std::size_t n = scope_size(scope, f.scope);
    const int card = scope[static_cast<std::size_t>(index_of(scope, f.scope.back()))].cardinality;
    FactorTable t{f.label, f.scope, {}};
    switch (f.kind) {
      case TargetKind::kTable: {
        if (f.values.size() != n) {
          throw Error(ErrorCode::kInvalidTable, "target factor '" + f.label + "' has the wrong size");
        }
        for (double v : f.values) {
          if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidTable,
                        "target factor '" + f.label + "' has a negative or non-finite entry");
          }
        }
        if (f.normalized) {
          for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(card)) {
            double total = 0.0;
            for (int k = 0; k < card; ++k) total += f.values[base + static_cast<std::size_t>(k)];
            if (std::abs(total - 1.0) > 1e-9) {
              throw Error(ErrorCode::kInvalidTable,
                          "target factor '" + f.label + "' is declared normalized but a slice sums to " +
                              std::to_string(total));
            }
          }
        }
        t.log_values = logs_of(f.values);
        break;
      }
      case TargetKind::kReward:
        if (f.values.size() != n) {
          throw Error(ErrorCode::kInvalidTable, "reward '" + f.label + "' has the wrong size");
        }
        for (double v : f.values) {
          if (!std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidTable, "reward '" + f.label + "' is not finite");
          }
        }
        t.log_values = f.values;
        break;
      case TargetKind::kParameterized:
        if (f.values.size() != n) {
          throw Error(ErrorCode::kInvalidTable, "logits of '" + f.label + "' have the wrong size");
        }
        for (double v : f.values) {
          if (!std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidParameters, "non-finite logit in '" + f.label + "'");
          }
        }
        t.log_values = logs_of(softmax_slices(f.values, card));
        break;
      case TargetKind::kActualCopy: {
        if (actual == nullptr) {
          throw Error(ErrorCode::kInvalidTable, "actual copy '" + f.label + "' needs a system");
        }
        const std::string& child = f.scope.back();
        const std::size_t i = actual->index(child);
        VarSet expect = actual->factors()[i].parents;
        expect.push_back(child);
        if (expect != f.scope) {
          throw Error(ErrorCode::kScopeMismatch,
                      "actual copy '" + f.label + "' scope differs from the factor of '" + child + "'");
        }
        t.log_values = logs_of(actual->conditional(i));
        break;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> target_log_weights(const std::vector<FactorTable>& factors,
                                       const Scope& scope) {
  const std::size_t n = outcome_count(scope);
  std::vector<double> logw(n, 0.0);
  for (const auto& f : factors) {
    const auto idx = ordered_projection(scope, f.scope);
    for (std::size_t w = 0; w < n; ++w) logw[w] += f.log_values[idx[w]];
  }
  return logw;
}

UnnormalizedTable build_target(const TargetSpec& target, const Scope& scope,
                               const ActualSystem* actual) {
  const auto logw = target_log_weights(resolve_target(target, scope, actual), scope);
  std::vector<double> w(logw.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logw[i]);
  return UnnormalizedTable(scope, std::move(w));
}

void Horizon::validate(bool has_skills) const {
  if (T < 1) throw Error(ErrorCode::kInvalidSystem, "horizon T must be >= 1");
  if (split < 1 || split > T) throw Error(ErrorCode::kInvalidSystem, "horizon split must be in [1, T]");
  if (K < 1) throw Error(ErrorCode::kInvalidSystem, "skill duration K must be >= 1");
  if (has_skills && T % K != 0) {
    throw Error(ErrorCode::kInvalidSystem, "skill duration K must divide T");
  }
}

TargetSpec full_target(const Problem& problem) {
  TargetSpec t = problem.target;
  t.factors.insert(t.factors.end(), problem.rewards.begin(), problem.rewards.end());
  return t;
}

UnnormalizedTable build_target(const Problem& problem) {
  return build_target(full_target(problem), problem.system.variables(), &problem.system);
}

ParameterVector problem_parameters(const Problem& problem) {
  ParameterVector out = get_parameters(problem.system);
  const Scope& vars = problem.system.variables();
  for (const auto& f : problem.target.factors) {
    if (f.kind != TargetKind::kParameterized) continue;
    const int card = vars[problem.system.index(f.scope.back())].cardinality;
    for (std::size_t j = 0; j < f.values.size(); ++j) {
      out.values.push_back(f.values[j]);
      out.coords.push_back({"q:" + f.label, j / static_cast<std::size_t>(card),
                            static_cast<int>(j % static_cast<std::size_t>(card))});
    }
  }
  return out;
}

Problem with_parameters(const Problem& problem, std::span<const double> phi) {
  const std::size_t n_actual = get_parameters(problem.system).values.size();
  if (phi.size() < n_actual) throw Error(ErrorCode::kInvalidParameters, "parameter vector is too short");
  Problem out{problem.name, set_parameters(problem.system, phi.subspan(0, n_actual)),
              problem.target, problem.rewards, problem.horizon, problem.passive};
  std::size_t cursor = n_actual;
  for (auto& f : out.target.factors) {
    if (f.kind != TargetKind::kParameterized) continue;
    if (cursor + f.values.size() > phi.size()) {
      throw Error(ErrorCode::kInvalidParameters, "parameter vector is too short");
    }
    for (std::size_t j = 0; j < f.values.size(); ++j) {
      const double v = phi[cursor + j];
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidParameters, "non-finite parameter");
      f.values[j] = v;
    }
    cursor += f.values.size();
  }
  if (cursor != phi.size()) throw Error(ErrorCode::kInvalidParameters, "parameter vector is too long");
  return out;
}

void validate_problem(const Problem& problem) {
  const auto& vars = problem.system.variables();
  bool has_skills = false;
  for (const auto& v : vars) has_skills = has_skills || v.role == Role::kSkill;
  problem.horizon.validate(has_skills);
  for (const auto& r : problem.rewards) {
    if (r.kind != TargetKind::kReward) {
      throw Error(ErrorCode::kInvalidTable, "'" + r.label + "' in rewards is not a reward factor");
    }
  }
  for (const auto& [child, table] : problem.passive) {
    const std::size_t i = problem.system.index(child);
    const std::size_t expected =
        problem.system.slice_count(i) * static_cast<std::size_t>(vars[i].cardinality);
    if (table.size() != expected) {
      throw Error(ErrorCode::kInvalidTable, "passive dynamics for '" + child + "' has the wrong size");
    }
  }
  build_target(problem);
}

}  // namespace divmin

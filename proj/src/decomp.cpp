#include <cmath>

#include "divmin/decomp.hpp"

namespace divmin {

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::kIdentity: return "identity";
    case Relation::kLowerBoundsJoint: return "lower-bounds-joint";
    case Relation::kUpperBoundsJoint: return "upper-bounds-joint";
  }
  return "identity";
}

namespace {

double lookup(const TermList& list, const std::string& name) {
  for (const auto& [k, v] : list) {
    if (k == name) return v;
  }
  throw Error(ErrorCode::kUnknownVariable, "no term named '" + name + "'");
}

VarSet join(VarSet a, const VarSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Expectations under p of log conditionals of p itself or of the normalized target.
class Expect {
 public:
  Expect(const TabularDistribution& p, const UnnormalizedTable& q)
      : p_(p), p_table_(UnnormalizedTable::from(p)), q_(q) {}

  double P(const VarSet& of, const VarSet& given = {}) {
    return take(expected_log_conditional(p_, p_table_, of, given));
  }
  double Q(const VarSet& of, const VarSet& given = {}) {
    return take(expected_log_conditional(p_, q_, of, given));
  }
  bool divergent() const { return divergent_; }

 private:
  double take(Nats n) {
    divergent_ = divergent_ || n.divergent;
    return n.value;
  }

  const TabularDistribution& p_;
  UnnormalizedTable p_table_;
  const UnnormalizedTable& q_;
  bool divergent_ = false;
};

DecompositionReport base(std::string equation, const TabularDistribution& p, const UnnormalizedTable& q) {
  const KlResult r = kl(p, q);
  DecompositionReport out;
  out.equation = std::move(equation);
  out.joint_kl = r.kl_nats;
  out.log_partition = r.log_partition;
  out.divergent = r.divergent;
  return out;
}

}  // namespace

double DecompositionReport::term(const std::string& name) const { return lookup(terms, name); }
double DecompositionReport::extra(const std::string& name) const { return lookup(extras, name); }

nlohmann::ordered_json DecompositionReport::to_json() const {
  nlohmann::ordered_json j;
  j["equation"] = equation;
  j["relation"] = std::string(to_string(relation));
  j["joint_kl"] = joint_kl;
  j["terms"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : terms) j["terms"][k] = v;
  j["slack"] = slack;
  j["divergent"] = divergent;
  j["log_partition"] = log_partition;
  if (!extras.empty()) {
    j["extras"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : extras) j["extras"][k] = v;
  }
  return j;
}

RolePartition partition_roles(const Scope& scope) {
  RolePartition out;
  for (const auto& v : scope) {
    if (v.role == Role::kPastInput) {
      out.past.push_back(v.name);
      out.inputs.push_back(v.name);
    } else if (v.role == Role::kFutureInput) {
      out.future.push_back(v.name);
      out.inputs.push_back(v.name);
    } else {
      out.latents.push_back(v.name);
    }
  }
  return out;
}

DecompositionReport joint_kl(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. joint_kl", p, q);
  out.terms = {{"joint_kl", out.joint_kl}};
  return out;
}

DecompositionReport decompose_latent_side(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. latent_side", p, q);
  const auto roles = partition_roles(p.scope());
  const auto& x = roles.inputs;
  const auto& z = roles.latents;
  Expect e(p, q);
  const double latent_pref = e.P(z, x) - e.Q(z);
  const double info_bound = e.Q(x, z) - e.P(x);
  out.terms = {{"latent_pref_kl", latent_pref}, {"info_bound", info_bound}};
  out.slack = latent_pref - info_bound - out.joint_kl;
  out.divergent = out.divergent || e.divergent();
  return out;
}

DecompositionReport decompose_input_side(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. input_side", p, q);
  const auto roles = partition_roles(p.scope());
  const auto& x = roles.inputs;
  const auto& z = roles.latents;
  Expect e(p, q);
  const double input_pref = e.P(x, z) - e.Q(x);
  const double info_bound = e.Q(z, x) - e.P(z);
  out.terms = {{"input_pref_kl", input_pref}, {"info_bound_latent", info_bound}};
  out.slack = input_pref - info_bound - out.joint_kl;
  out.divergent = out.divergent || e.divergent();
  return out;
}

DecompositionReport energy_entropy(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. energy_entropy", p, q);
  CompensatedSum energy;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      out.divergent = true;
      continue;
    }
    energy.add(-p[i] * std::log(q[i]));
  }
  const double h = entropy(p, names_of(p.scope()));
  out.terms = {{"energy", energy.value()}, {"entropy", h}};
  out.slack = energy.value() - h + out.log_partition - out.joint_kl;
  return out;
}

DecompositionReport expected_free_energy(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. expected_free_energy", p, q);
  const auto roles = partition_roles(p.scope());
  const auto& x = roles.inputs;
  const auto& z = roles.latents;
  Expect e(p, q);
  const double efe = -e.Q(x, z) + (e.P(z, x) - e.Q(z));
  const double input_entropy = -e.P(x);
  out.terms = {{"efe", efe}, {"input_entropy", input_entropy}};
  out.slack = efe - input_entropy - out.joint_kl;
  out.divergent = out.divergent || e.divergent();
  return out;
}

DecompositionReport bayesian_future_check(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. missing_data", p, q);
  const auto roles = partition_roles(p.scope());
  const VarSet past_z = join(roles.past, roles.latents);
  Expect e(p, q);
  const double past_vi = e.P(past_z) - e.Q(past_z);
  const double future = e.P(roles.future, past_z) - e.Q(roles.future, past_z);
  out.terms = {{"past_vi", past_vi}, {"uncontrolled_future", future}};
  out.slack = past_vi + future - out.joint_kl;
  out.divergent = out.divergent || e.divergent();
  out.extras = {{"bayesian_satisfied", future < 1e-9 ? 1.0 : 0.0}};
  return out;
}

DecompositionReport past_future_split(const TabularDistribution& p, const UnnormalizedTable& q) {
  auto out = base("Eq. past_future", p, q);
  out.relation = Relation::kLowerBoundsJoint;
  const auto roles = partition_roles(p.scope());
  const auto& past = roles.past;
  const auto& z = roles.latents;
  Expect e(p, q);
  const double past_latent_pref = e.P(z, past) - e.Q(z);
  const double repr_learning = e.Q(past, z) - e.P(past);
  const double future_input_pref = e.P(roles.future, join(past, z)) - e.Q(roles.future, past);
  const double exploration = e.Q(z, roles.inputs) - e.P(z, past);
  out.terms = {{"past_latent_pref", past_latent_pref},
               {"repr_learning", repr_learning},
               {"future_input_pref", future_input_pref},
               {"exploration", exploration}};
  const double bound = past_latent_pref - repr_learning + future_input_pref - exploration;
  out.slack = bound - out.joint_kl;
  // The slack is exactly the expected latent KL given the past.
  out.extras = {{"bound", bound}, {"latent_kl_given_past", e.P(z, past) - e.Q(z, past)}};
  out.divergent = out.divergent || e.divergent();
  return out;
}

namespace {

UnnormalizedTable target_table(const ActualSystem& system, const TargetSpec& target) {
  return build_target(target, system.variables(), &system);
}

}  // namespace

DecompositionReport joint_kl(const ActualSystem& system, const TargetSpec& target) {
  return joint_kl(build_joint(system), target_table(system, target));
}

DecompositionReport decompose_latent_side(const ActualSystem& system, const TargetSpec& target) {
  return decompose_latent_side(build_joint(system), target_table(system, target));
}

DecompositionReport decompose_input_side(const ActualSystem& system, const TargetSpec& target) {
  return decompose_input_side(build_joint(system), target_table(system, target));
}

DecompositionReport energy_entropy(const ActualSystem& system, const TargetSpec& target) {
  return energy_entropy(build_joint(system), target_table(system, target));
}

DecompositionReport expected_free_energy(const ActualSystem& system, const TargetSpec& target) {
  return expected_free_energy(build_joint(system), target_table(system, target));
}

DecompositionReport bayesian_future_check(const ActualSystem& system, const TargetSpec& target,
                                          const Horizon& horizon) {
  horizon.validate(!system.names_with_role(Role::kSkill).empty());
  return bayesian_future_check(build_joint(system), target_table(system, target));
}

DecompositionReport past_future_split(const ActualSystem& system, const TargetSpec& target,
                                      const Horizon& horizon, const Assignment& realized,
                                      InterventionMode mode) {
  horizon.validate(!system.names_with_role(Role::kSkill).empty());
  realized.validate(system.variables());
  Assignment acted, observed;
  for (const auto& [name, value] : realized.bindings) {
    const Role r = system.variable(name).role;
    if (r == Role::kAction || r == Role::kSkill) {
      acted.bindings[name] = value;
    } else if (r == Role::kPastInput) {
      observed.bindings[name] = value;
    } else {
      throw Error(ErrorCode::kInvalidIntervention,
                  "'" + name + "' has role " + std::string(to_string(r)) + " and cannot be realized");
    }
  }
  TabularDistribution p = mode == InterventionMode::kDo ? build_joint(intervene(system, acted))
                                                        : realize(system, acted, mode);
  if (!observed.bindings.empty()) p = condition_in_place(p, observed);
  return past_future_split(p, target_table(system, target));
}

}  // namespace divmin

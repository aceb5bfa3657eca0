#pragma once

// The joint KL and its decompositions into named terms.
// Inputs x are the past- and future-input variables; every other variable is latent.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "divmin/prob.hpp"
#include "divmin/systems.hpp"

namespace divmin {

enum class Relation { kIdentity, kLowerBoundsJoint, kUpperBoundsJoint };

std::string_view to_string(Relation relation);

using TermList = std::vector<std::pair<std::string, double>>;

struct DecompositionReport {
  std::string equation;
  double joint_kl = 0.0;
  TermList terms;
  Relation relation = Relation::kIdentity;
  // Identity: combination of terms minus joint_kl. Bound: bound minus joint_kl.
  double slack = 0.0;
  bool divergent = false;
  double log_partition = 0.0;
  TermList extras;

  double term(const std::string& name) const;
  double extra(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

struct RolePartition {
  VarSet inputs;
  VarSet past;
  VarSet future;
  VarSet latents;
};

RolePartition partition_roles(const Scope& scope);

DecompositionReport joint_kl(const TabularDistribution& p, const UnnormalizedTable& q);
DecompositionReport decompose_latent_side(const TabularDistribution& p, const UnnormalizedTable& q);
DecompositionReport decompose_input_side(const TabularDistribution& p, const UnnormalizedTable& q);
DecompositionReport energy_entropy(const TabularDistribution& p, const UnnormalizedTable& q);
DecompositionReport expected_free_energy(const TabularDistribution& p, const UnnormalizedTable& q);
DecompositionReport bayesian_future_check(const TabularDistribution& p, const UnnormalizedTable& q);
/// `p` is the actual distribution after realizing the observed past.
DecompositionReport past_future_split(const TabularDistribution& p, const UnnormalizedTable& q);

DecompositionReport joint_kl(const ActualSystem& system, const TargetSpec& target);
DecompositionReport decompose_latent_side(const ActualSystem& system, const TargetSpec& target);
DecompositionReport decompose_input_side(const ActualSystem& system, const TargetSpec& target);
DecompositionReport energy_entropy(const ActualSystem& system, const TargetSpec& target);
DecompositionReport expected_free_energy(const ActualSystem& system, const TargetSpec& target);
DecompositionReport bayesian_future_check(const ActualSystem& system, const TargetSpec& target,
                                          const Horizon& horizon);
/// Realized actions and skills are intervened on, realized past inputs are conditioned on.
DecompositionReport past_future_split(const ActualSystem& system, const TargetSpec& target,
                                      const Horizon& horizon, const Assignment& realized,
                                      InterventionMode mode = InterventionMode::kDo);

}  // namespace divmin

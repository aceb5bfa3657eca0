#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "divmin/objective.hpp"

namespace divmin {

struct FamilyInfo {
  std::string name;
  std::string equation;
  std::string relation;
  std::string summary;
};

/// The eight objective families, in a fixed order.
const std::vector<FamilyInfo>& family_catalog();

Objective make_objective(std::string_view family, const Problem& problem,
                         const nlohmann::json& options = nlohmann::json::object());

Objective elbo_bnn(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective map_point_mass(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective amortized_vae(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective kl_control(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective maxent_rl(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective empowerment(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective skill_discovery(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());
Objective info_gain(const Problem& problem, const nlohmann::json& options = nlohmann::json::object());

/// Replaces the factors of `names` by point masses selecting outcome 0.
Problem with_point_masses(const Problem& problem, const VarSet& names);

}  // namespace divmin

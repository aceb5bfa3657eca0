#include <set>

#include "divmin/systems.hpp"

namespace divmin {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void only_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw Error(ErrorCode::kInvalidConfig, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

const json& required(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw Error(ErrorCode::kInvalidConfig, where + " is missing '" + key + "'");
  return obj.at(key);
}

template <typename T>
T read(const json& obj, const std::string& key, const std::string& where) {
  try {
    return required(obj, key, where).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, where + "." + key + ": " + e.what());
  }
}

template <typename T>
T read_or(const json& obj, const std::string& key, const std::string& where, T fallback) {
  return obj.contains(key) ? read<T>(obj, key, where) : fallback;
}

}  // namespace

Problem problem_from_json(const json& doc) {
  only_keys(doc, "system", {"name", "variables", "factors", "target_factors", "rewards", "horizon", "passive"});
  Scope vars;
  for (const auto& v : required(doc, "variables", "system")) {
    only_keys(v, "variable", {"name", "cardinality", "role", "step"});
    vars.push_back({read<std::string>(v, "name", "variable"), read<int>(v, "cardinality", "variable"),
                    role_from_string(read<std::string>(v, "role", "variable")),
                    read_or<int>(v, "step", "variable", 0)});
  }
  std::vector<FactorSpec> factors;
  for (const auto& f : required(doc, "factors", "system")) {
    only_keys(f, "factor", {"child", "parents", "kind", "table", "logits", "selector", "temperature"});
    FactorSpec spec;
    spec.child = read<std::string>(f, "child", "factor");
    const std::string where = "factor '" + spec.child + "'";
    spec.parents = read_or<VarSet>(f, "parents", where, {});
    spec.kind = factor_kind_from_string(read<std::string>(f, "kind", where));
    spec.temperature = read_or<double>(f, "temperature", where, 1.0);
    switch (spec.kind) {
      case FactorKind::kFixed: spec.values = read<std::vector<double>>(f, "table", where); break;
      case FactorKind::kParameterized: spec.values = read<std::vector<double>>(f, "logits", where); break;
      case FactorKind::kPointMass: spec.selector = read<std::vector<int>>(f, "selector", where); break;
    }
    factors.push_back(std::move(spec));
  }
  TargetSpec target;
  if (doc.contains("target_factors")) {
    for (const auto& f : doc.at("target_factors")) {
      only_keys(f, "target factor", {"label", "kind", "scope", "table", "logits", "normalized"});
      TargetFactor t;
      t.label = read<std::string>(f, "label", "target factor");
      const std::string where = "target factor '" + t.label + "'";
      const std::string kind = read_or<std::string>(f, "kind", where, "table");
      t.scope = read<VarSet>(f, "scope", where);
      if (kind == "table") {
        t.kind = TargetKind::kTable;
        t.values = read<std::vector<double>>(f, "table", where);
        t.normalized = read_or<bool>(f, "normalized", where, false);
      } else if (kind == "parameterized") {
        t.kind = TargetKind::kParameterized;
        t.values = read<std::vector<double>>(f, "logits", where);
        t.normalized = true;
      } else if (kind == "actual-copy") {
        t.kind = TargetKind::kActualCopy;
        t.normalized = true;
      } else {
        throw Error(ErrorCode::kInvalidConfig, where + " has unknown kind '" + kind + "'");
      }
      target.factors.push_back(std::move(t));
    }
  }
  std::vector<TargetFactor> rewards;
  if (doc.contains("rewards")) {
    for (const auto& r : doc.at("rewards")) {
      only_keys(r, "reward", {"label", "scope", "r"});
      VarSet scope = read<VarSet>(r, "scope", "reward");
      std::string label = read_or<std::string>(r, "label", "reward", "reward:" + (scope.empty() ? std::string() : scope.back()));
      rewards.push_back(reward_factor(label, scope, read<std::vector<double>>(r, "r", "reward")));
    }
  }
  Horizon horizon;
  if (doc.contains("horizon")) {
    const auto& h = doc.at("horizon");
    only_keys(h, "horizon", {"T", "K", "split"});
    horizon.T = read_or<int>(h, "T", "horizon", 1);
    horizon.K = read_or<int>(h, "K", "horizon", 1);
    horizon.split = read_or<int>(h, "split", "horizon", 1);
  }
  std::map<std::string, std::vector<double>> passive;
  if (doc.contains("passive")) {
    const auto& table = doc.at("passive");
    if (!table.is_object()) throw Error(ErrorCode::kInvalidConfig, "passive must be an object");
    for (const auto& [child, values] : table.items()) {
      try {
        passive[child] = values.get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidConfig, "passive." + child + ": " + e.what());
      }
    }
  }
  Problem p{read_or<std::string>(doc, "name", "system", "custom"),
            ActualSystem(std::move(vars), std::move(factors)),
            std::move(target), std::move(rewards), horizon, std::move(passive)};
  validate_problem(p);
  return p;
}

ordered_json problem_to_json(const Problem& problem) {
  ordered_json doc;
  doc["name"] = problem.name;
  doc["variables"] = ordered_json::array();
  for (const auto& v : problem.system.variables()) {
    doc["variables"].push_back({{"name", v.name},
                                {"cardinality", v.cardinality},
                                {"role", std::string(to_string(v.role))},
                                {"step", v.step}});
  }
  doc["factors"] = ordered_json::array();
  for (const auto& f : problem.system.factors()) {
    ordered_json j = {{"child", f.child}, {"parents", f.parents}, {"kind", std::string(to_string(f.kind))}};
    switch (f.kind) {
      case FactorKind::kFixed: j["table"] = f.values; break;
      case FactorKind::kParameterized:
        j["logits"] = f.values;
        if (f.temperature != 1.0) j["temperature"] = f.temperature;
        break;
      case FactorKind::kPointMass: j["selector"] = f.selector; break;
    }
    doc["factors"].push_back(std::move(j));
  }
  doc["target_factors"] = ordered_json::array();
  for (const auto& t : problem.target.factors) {
    ordered_json j = {{"label", t.label}, {"kind", std::string(to_string(t.kind))}, {"scope", t.scope}};
    if (t.kind == TargetKind::kTable) {
      j["table"] = t.values;
      j["normalized"] = t.normalized;
    } else if (t.kind == TargetKind::kParameterized) {
      j["logits"] = t.values;
    }
    doc["target_factors"].push_back(std::move(j));
  }
  doc["rewards"] = ordered_json::array();
  for (const auto& r : problem.rewards) {
    doc["rewards"].push_back({{"label", r.label}, {"scope", r.scope}, {"r", r.values}});
  }
  doc["horizon"] = {{"T", problem.horizon.T}, {"K", problem.horizon.K}, {"split", problem.horizon.split}};
  if (!problem.passive.empty()) {
    ordered_json passive = ordered_json::object();
    for (const auto& [child, table] : problem.passive) passive[child] = table;
    doc["passive"] = std::move(passive);
  }
  return doc;
}

}  // namespace divmin

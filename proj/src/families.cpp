#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "divmin/families.hpp"

namespace divmin {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorCode::kInvalidObjective, message); }

void check_options(const json& options, std::string_view family, const std::set<std::string>& allowed) {
  if (!options.is_object()) throw Error(ErrorCode::kInvalidConfig, "objective options must be an object");
  for (const auto& [key, value] : options.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kInvalidConfig, "unknown option '" + key + "' for " + std::string(family));
    }
  }
}

template <typename T>
T option(const json& options, const std::string& key, T fallback) {
  if (!options.contains(key)) return fallback;
  try {
    return options.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "option '" + key + "': " + e.what());
  }
}

bool contains(const VarSet& set, const std::string& name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

bool subset_of(const VarSet& a, const VarSet& b) {
  return std::all_of(a.begin(), a.end(), [&](const std::string& n) { return contains(b, n); });
}

VarSet join(VarSet a, const VarSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

VarSet with_roles(const Scope& scope, std::initializer_list<Role> roles) {
  VarSet out;
  for (const auto& v : scope) {
    if (std::find(roles.begin(), roles.end(), v.role) != roles.end()) out.push_back(v.name);
  }
  return out;
}

int step_of(const Problem& problem, const std::string& name) { return problem.system.variable(name).step; }

// Latest step among the variables of `scope` that belong to `within` (or all when empty).
int latest_step(const Problem& problem, const VarSet& scope, const VarSet& within = {}) {
  int step = std::numeric_limits<int>::min();
  for (const auto& n : scope) {
    if (within.empty() || contains(within, n)) step = std::max(step, step_of(problem, n));
  }
  return step;
}

std::vector<int> distinct_steps(const Problem& problem, const VarSet& names) {
  std::set<int> steps;
  for (const auto& n : names) steps.insert(step_of(problem, n));
  return {steps.begin(), steps.end()};
}

VarSet at_step(const Problem& problem, const VarSet& names, int step) {
  VarSet out;
  for (const auto& n : names) {
    if (step_of(problem, n) == step) out.push_back(n);
  }
  return out;
}

VarSet before_step(const Problem& problem, const VarSet& names, int step) {
  VarSet out;
  for (const auto& n : names) {
    if (step_of(problem, n) < step) out.push_back(n);
  }
  return out;
}

std::vector<std::string> labels_of(const std::vector<TargetFactor>& factors) {
  std::vector<std::string> out;
  for (const auto& f : factors) out.push_back(f.label);
  return out;
}

std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

std::vector<double> zeros_for(const Problem& problem, const VarSet& scope) {
  std::size_t n = 1;
  for (const auto& v : scope) n *= static_cast<std::size_t>(problem.system.variable(v).cardinality);
  return std::vector<double>(n, 0.0);
}

void require_unique_labels(const TargetSpec& target, const std::vector<TargetFactor>& rewards) {
  std::set<std::string> seen;
  for (const auto& f : target.factors) {
    if (!seen.insert(f.label).second) fail("duplicate target factor label '" + f.label + "'");
  }
  for (const auto& f : rewards) {
    if (!seen.insert(f.label).second) fail("duplicate target factor label '" + f.label + "'");
  }
}

Objective finish(Objective obj) {
  require_unique_labels(obj.problem.target, obj.problem.rewards);
  validate_problem(obj.problem);
  return obj;
}

double kl_direct(const std::vector<double>& p, const std::vector<double>& q) {
  CompensatedSum s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    s.add(p[i] * std::log(p[i] / q[i]));
  }
  return s.value();
}

// ---------------------------------------------------------------- belief models

struct BeliefSplit {
  VarSet beliefs;
  VarSet data;
  std::vector<std::string> prior_labels;
  std::vector<std::string> likelihood_labels;
};

BeliefSplit split_beliefs(const Problem& problem, bool allow_point_mass) {
  BeliefSplit s;
  const auto& vars = problem.system.variables();
  s.beliefs = with_roles(vars, {Role::kParameter});
  if (s.beliefs.empty()) fail("no parameter-role variable to hold the belief");
  for (const auto& v : vars) {
    if (!contains(s.beliefs, v.name)) s.data.push_back(v.name);
  }
  for (const auto& b : s.beliefs) {
    const auto& f = problem.system.factor(b);
    if (!f.parents.empty()) fail("belief over '" + b + "' must not depend on the data");
    if (f.kind == FactorKind::kFixed) fail("belief over '" + b + "' is not learnable");
    if (f.kind == FactorKind::kPointMass && !allow_point_mass) {
      fail("belief over '" + b + "' is a point mass; use map_point_mass");
    }
  }
  for (const auto& d : s.data) {
    if (problem.system.factor(d).kind == FactorKind::kParameterized) {
      fail("data factor for '" + d + "' is parameterized; the data distribution must be fixed");
    }
  }
  for (const auto& f : full_target(problem).factors) {
    (subset_of(f.scope, s.beliefs) ? s.prior_labels : s.likelihood_labels).push_back(f.label);
  }
  return s;
}

// s(w) = E_{p(data)} ln q~(data, w); the optimal belief is softmax(s).
std::vector<double> belief_scores(const EvalContext& ctx, const BeliefSplit& split) {
  const Scope& scope = ctx.p().scope();
  const auto b_idx = ordered_projection(scope, split.beliefs);
  std::size_t nb = 1;
  for (const auto& b : split.beliefs) nb *= static_cast<std::size_t>(ctx.problem().system.variable(b).cardinality);
  std::vector<double> data_mass;
  std::vector<std::size_t> d_idx(ctx.p().size(), 0);
  if (split.data.empty()) {
    data_mass = {1.0};
  } else {
    d_idx = ordered_projection(scope, split.data);
    data_mass.assign(ctx.p().size() / nb, 0.0);
    for (std::size_t w = 0; w < ctx.p().size(); ++w) data_mass[d_idx[w]] += ctx.p()[w];
  }
  std::vector<CompensatedSum> acc(nb);
  std::vector<bool> dead(nb, false);
  for (std::size_t w = 0; w < ctx.p().size(); ++w) {
    const double m = data_mass[d_idx[w]];
    if (m == 0.0) continue;
    if (!std::isfinite(ctx.log_q()[w])) {
      dead[b_idx[w]] = true;
      continue;
    }
    acc[b_idx[w]].add(m * ctx.log_q()[w]);
  }
  std::vector<double> s(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    s[b] = dead[b] ? -std::numeric_limits<double>::infinity() : acc[b].value();
  }
  return s;
}

std::vector<double> softmax_of(const std::vector<double>& s) {
  const double hi = *std::max_element(s.begin(), s.end());
  std::vector<double> out(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += out[i] = std::exp(s[i] - hi);
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> belief_marginal(const EvalContext& ctx, const VarSet& beliefs) {
  const auto m = marginalize(ctx.p(), beliefs);
  // marginalize orders by scope; reorder to the belief list order.
  const Scope sub = subscope(ctx.p().scope(), beliefs);
  const auto idx = ordered_projection(sub, beliefs);
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[idx[i]] = m[i];
  return out;
}

std::vector<TermSpec> belief_terms(const BeliefSplit& s) {
  return {{"complexity", {PF(s.beliefs), -TF(s.prior_labels)}, 1.0},
          {"accuracy", {-TF(s.likelihood_labels)}, 1.0},
          {"constant", {PF(s.data)}, 1.0}};
}

}  // namespace

Problem with_point_masses(const Problem& problem, const VarSet& names) {
  std::vector<FactorSpec> fs = problem.system.factors();
  for (auto& f : fs) {
    if (!contains(names, f.child)) continue;
    std::size_t slices = 1;
    for (const auto& p : f.parents) slices *= static_cast<std::size_t>(problem.system.variable(p).cardinality);
    f.kind = FactorKind::kPointMass;
    f.values.clear();
    f.selector.assign(slices, 0);
  }
  Problem out = problem;
  out.system = ActualSystem(problem.system.variables(), std::move(fs));
  return out;
}

Objective elbo_bnn(const Problem& problem, const json& options) {
  check_options(options, "elbo_bnn", {});
  const BeliefSplit split = split_beliefs(problem, false);
  Objective obj{"elbo_bnn", "Eq. elbo", problem};
  obj.terms = belief_terms(split);
  obj.diagnostics = [split](const EvalContext& ctx, Breakdown& out) {
    const auto s = belief_scores(ctx, split);
    const auto oracle = softmax_of(s);
    const auto belief = belief_marginal(ctx, split.beliefs);
    out.diagnostics.emplace_back("posterior_kl_to_oracle", kl_direct(belief, oracle));
    const double hi = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - hi);
    out.diagnostics.emplace_back("optimal_total", out.term("constant") - (hi + std::log(z)));
    for (std::size_t b = 0; b < oracle.size(); ++b) {
      out.diagnostics.emplace_back("belief[" + std::to_string(b) + "]", belief[b]);
      out.diagnostics.emplace_back("oracle_posterior[" + std::to_string(b) + "]", oracle[b]);
    }
  };
  return finish(std::move(obj));
}

Objective map_point_mass(const Problem& problem, const json& options) {
  check_options(options, "map_point_mass", {"selector"});
  BeliefSplit split = split_beliefs(problem, true);
  Problem p = with_point_masses(problem, split.beliefs);
  if (options.contains("selector")) {
    const auto sel = option<std::vector<int>>(options, "selector", {});
    if (sel.size() != split.beliefs.size()) {
      throw Error(ErrorCode::kInvalidConfig, "selector needs one outcome per belief variable");
    }
    for (std::size_t i = 0; i < sel.size(); ++i) {
      FactorSpec f = p.system.factor(split.beliefs[i]);
      f.selector = {sel[i]};
      p.system = p.system.with_factor(f);
    }
  }
  Objective obj{"map_point_mass", "Eq. map", p};
  obj.terms = belief_terms(split);
  obj.search_point_masses = true;
  obj.diagnostics = [split](const EvalContext& ctx, Breakdown& out) {
    const Problem& prob = ctx.problem();
    const Scope& scope = prob.system.variables();
    // Selected parameter values.
    Assignment chosen;
    for (const auto& b : split.beliefs) chosen.bindings[b] = prob.system.factor(b).selector.at(0);
    // Independent route: E_{p(data)}[-ln q(data | chosen)] - ln q(chosen), enumerated over
    // the data outcomes only, with each target factor indexed directly.
    const Scope data_scope = split.data.empty() ? Scope{} : subscope(scope, split.data);
    const TabularDistribution* pd = nullptr;
    std::optional<TabularDistribution> data_marginal;
    if (!split.data.empty()) {
      data_marginal = marginalize(ctx.p(), split.data);
      pd = &*data_marginal;
    }
    const std::size_t nd = split.data.empty() ? 1 : pd->size();
    CompensatedSum accuracy, complexity;
    for (const auto& f : ctx.target_factors()) {
      const bool is_prior = subset_of(f.scope, split.beliefs);
      for (std::size_t d = 0; d < nd; ++d) {
        const double mass = split.data.empty() ? 1.0 : (*pd)[d];
        if (mass == 0.0) continue;
        const auto digits = split.data.empty() ? std::vector<int>{} : decode(data_scope, d);
        std::size_t idx = 0;
        for (const auto& name : f.scope) {
          const int card = prob.system.variable(name).cardinality;
          const int pos = index_of(data_scope, name);
          const int value = pos >= 0 ? digits[static_cast<std::size_t>(pos)] : chosen.at(name);
          idx = idx * static_cast<std::size_t>(card) + static_cast<std::size_t>(value);
        }
        (is_prior ? complexity : accuracy).add(-mass * f.log_values[idx]);
        if (is_prior) break;
      }
    }
    const double route = complexity.value() + accuracy.value();
    out.diagnostics.emplace_back("parameterized_target_form", route);
    out.diagnostics.emplace_back("map_form_residual",
                                 out.term("complexity") + out.term("accuracy") - route);
    out.diagnostics.emplace_back("belief_entropy", entropy(ctx.p(), split.beliefs));
    out.diagnostics.emplace_back(
        "belief_data_information",
        split.data.empty() ? 0.0 : mutual_information(ctx.p(), split.beliefs, split.data));
    const auto s = belief_scores(ctx, split);
    out.diagnostics.emplace_back(
        "oracle_map_index", static_cast<double>(std::max_element(s.begin(), s.end()) - s.begin()));
  };
  return finish(std::move(obj));
}

Objective amortized_vae(const Problem& problem, const json& options) {
  check_options(options, "amortized_vae", {"decoder"});
  const std::string decoder = option<std::string>(options, "decoder", "factorized");
  if (decoder != "factorized" && decoder != "autoregressive") {
    throw Error(ErrorCode::kInvalidConfig, "decoder must be 'factorized' or 'autoregressive'");
  }
  const auto& vars = problem.system.variables();
  const VarSet x = with_roles(vars, {Role::kPastInput, Role::kFutureInput});
  const VarSet z = with_roles(vars, {Role::kLatentState, Role::kParameter});
  if (z.empty()) fail("amortized_vae needs at least one latent variable");
  if (x.empty()) fail("amortized_vae needs at least one input variable");
  if (x.size() + z.size() != vars.size()) fail("amortized_vae expects only inputs and latents");
  for (const auto& name : z) {
    const auto& f = problem.system.factor(name);
    if (f.kind != FactorKind::kParameterized) fail("encoder for '" + name + "' must be parameterized");
    if (!subset_of(f.parents, x) || f.parents.empty()) {
      fail("encoder for '" + name + "' is not per-datum: its parents must be input variables");
    }
  }
  for (const auto& name : x) {
    if (problem.system.factor(name).kind == FactorKind::kParameterized) {
      fail("data factor for '" + name + "' is parameterized; the data distribution must be fixed");
    }
  }
  Problem p = problem;
  std::vector<std::string> priors, decoders;
  for (const auto& f : full_target(problem).factors) {
    (subset_of(f.scope, z) ? priors : decoders).push_back(f.label);
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    VarSet scope = z;
    if (decoder == "autoregressive") scope.insert(scope.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(j));
    scope.push_back(x[j]);
    p.target.factors.push_back(parameterized_factor("decoder:" + x[j], scope, zeros_for(problem, scope)));
    decoders.push_back("decoder:" + x[j]);
  }
  Objective obj{"amortized_vae", "Eq. amortized", p};
  obj.terms = {{"complexity", {PF(z), -TF(priors)}, 1.0}, {"info_bound", {TF(decoders), -PF(x)}, -1.0}};
  obj.diagnostics = [x, z](const EvalContext& ctx, Breakdown& out) {
    const auto contrastive = decompose_input_side(ctx.p(), ctx.q());
    const double ipk = contrastive.term("input_pref_kl");
    const double ibl = contrastive.term("info_bound_latent");
    out.diagnostics.emplace_back("input_pref_kl", ipk);
    out.diagnostics.emplace_back("info_bound_latent", ibl);
    out.diagnostics.emplace_back("contrastive_total", ipk - ibl);
    out.diagnostics.emplace_back("contrastive_residual", ipk - ibl - out.normalized_total());
    out.diagnostics.emplace_back("code_information", mutual_information(ctx.p(), x, z));
  };
  return finish(std::move(obj));
}

Objective kl_control(const Problem& problem, const json& options) {
  check_options(options, "kl_control", {"mode", "policy"});
  const std::string mode = option<std::string>(options, "mode", "kl-control");
  const std::string policy = option<std::string>(options, "policy", "stochastic");
  if (mode != "kl-control" && mode != "kl-regularized" && mode != "expected-reward") {
    throw Error(ErrorCode::kInvalidConfig, "mode must be kl-control, kl-regularized or expected-reward");
  }
  if (policy != "stochastic" && policy != "point-mass") {
    throw Error(ErrorCode::kInvalidConfig, "policy must be 'stochastic' or 'point-mass'");
  }
  if (mode != "kl-control" && problem.rewards.empty()) {
    fail("mode " + mode + " needs a reward table");
  }
  Problem p = problem;
  const auto& vars = problem.system.variables();
  const VarSet x = with_roles(vars, {Role::kPastInput, Role::kFutureInput});
  VarSet others;
  for (const auto& v : vars) {
    if (!contains(x, v.name)) others.push_back(v.name);
  }
  if (x.empty()) fail("kl_control needs input variables");
  if (policy == "point-mass") p = with_point_masses(p, with_roles(vars, {Role::kAction}));

  std::vector<TargetFactor> preference;
  for (const auto& f : problem.target.factors) {
    if (!subset_of(f.scope, x)) fail("kl_control target factor '" + f.label + "' must be over inputs");
    preference.push_back(f);
  }
  for (const auto& name : x) {
    if (mode == "expected-reward") {
      preference.push_back(actual_copy(p.system, name, "dynamics:" + name));
    } else if (mode == "kl-regularized") {
      auto it = problem.passive.find(name);
      const auto& f = p.system.factor(name);
      if (it != problem.passive.end()) {
        preference.push_back(table_factor("passive:" + name, join(f.parents, {name}), it->second, true));
      } else if (f.kind == FactorKind::kFixed) {
        preference.push_back(actual_copy(p.system, name, "passive:" + name));
      } else {
        fail("kl-regularized mode needs passive dynamics for '" + name + "'");
      }
    }
  }
  std::vector<std::string> copies;
  p.target.factors = preference;
  for (const auto& name : others) {
    p.target.factors.push_back(actual_copy(p.system, name));
    copies.push_back("copy:" + name);
  }
  std::vector<TargetFactor> input_side = preference;
  input_side.insert(input_side.end(), p.rewards.begin(), p.rewards.end());

  Objective obj{"kl_control", "Eq. control", p};
  obj.search_point_masses = policy == "point-mass";
  for (int t : distinct_steps(p, x)) {
    std::vector<std::string> labels;
    for (const auto& f : input_side) {
      if (latest_step(p, f.scope, x) == t) labels.push_back(f.label);
    }
    const std::string suffix = "_" + std::to_string(t);
    obj.terms.push_back({"expected_pref" + suffix, {TF(labels)}, -1.0});
    obj.terms.push_back({"curiosity" + suffix, {-P(at_step(p, x, t), before_step(p, x, t))}, -1.0});
  }
  if (!others.empty()) obj.terms.push_back({"latent_residual", {P(others, x), -TF(copies)}, 1.0});
  const auto reward_labels = labels_of(p.rewards);
  const bool expected_reward = mode == "expected-reward";
  obj.diagnostics = [reward_labels, expected_reward, x](const EvalContext& ctx, Breakdown& out) {
    const double reward = reward_labels.empty() ? 0.0 : ctx.expect(TF(reward_labels));
    out.diagnostics.emplace_back("expected_reward", reward);
    out.diagnostics.emplace_back("input_entropy", entropy(ctx.p(), x));
    if (expected_reward) out.diagnostics.emplace_back("curiosity_cancellation", out.total + reward);
  };
  return finish(std::move(obj));
}

Objective maxent_rl(const Problem& problem, const json& options) {
  check_options(options, "maxent_rl", {"action_prior", "include_environment"});
  if (!option<bool>(options, "include_environment", true)) {
    fail("maxent_rl requires the environment dynamics in the target");
  }
  const auto& vars = problem.system.variables();
  const VarSet actions = with_roles(vars, {Role::kAction});
  if (actions.empty()) fail("maxent_rl needs action variables");
  json prior = options.contains("action_prior") ? options.at("action_prior") : json("uniform");
  bool uniform_prior = prior.is_string() && prior.get<std::string>() == "uniform";
  if (prior.is_string() && !uniform_prior) throw Error(ErrorCode::kInvalidConfig, "action_prior must be 'uniform' or an object");
  if (!prior.is_string() && !prior.is_object()) throw Error(ErrorCode::kInvalidConfig, "action_prior must be 'uniform' or an object");

  Problem p = problem;
  p.target.factors.clear();
  for (const auto& v : vars) {
    if (!contains(actions, v.name)) p.target.factors.push_back(actual_copy(p.system, v.name, "env:" + v.name));
  }
  for (const auto& a : actions) {
    const auto card = static_cast<std::size_t>(p.system.variable(a).cardinality);
    std::vector<double> table = uniform(card);
    if (prior.is_object() && prior.contains(a)) {
      table = prior.at(a).get<std::vector<double>>();
      if (table.size() != card) throw Error(ErrorCode::kInvalidConfig, "action prior for '" + a + "' has the wrong size");
    }
    p.target.factors.push_back(table_factor("prior:" + a, {a}, table, true));
  }
  if (prior.is_object()) {
    for (const auto& [key, value] : prior.items()) {
      if (!contains(actions, key)) throw Error(ErrorCode::kInvalidConfig, "action prior for unknown action '" + key + "'");
      if (value != json(uniform(static_cast<std::size_t>(p.system.variable(key).cardinality)))) uniform_prior = false;
    }
    uniform_prior = uniform_prior || prior.empty();
  }

  Objective obj{"maxent_rl", "Eq. maxentrl", p};
  std::set<int> steps;
  for (const auto& a : actions) steps.insert(step_of(p, a));
  for (const auto& r : p.rewards) steps.insert(latest_step(p, r.scope));
  for (int t : steps) {
    const VarSet at = at_step(p, actions, t);
    std::vector<std::string> priors, rewards;
    for (const auto& a : at) priors.push_back("prior:" + a);
    for (const auto& r : p.rewards) {
      if (latest_step(p, r.scope) == t) rewards.push_back(r.label);
    }
    const std::string suffix = "_" + std::to_string(t);
    if (!at.empty()) obj.terms.push_back({"action_complexity" + suffix, {PF(at), -TF(priors)}, 1.0});
    if (!rewards.empty()) obj.terms.push_back({"reward" + suffix, {TF(rewards)}, -1.0});
  }
  const auto reward_labels = labels_of(p.rewards);
  obj.diagnostics = [actions, reward_labels, uniform_prior](const EvalContext& ctx, Breakdown& out) {
    const double reward = reward_labels.empty() ? 0.0 : ctx.expect(TF(reward_labels));
    out.diagnostics.emplace_back("expected_reward", reward);
    if (!uniform_prior) return;
    // With a uniform prior the complexity is ln|A| - H[a | parents].
    double stated = -reward;
    for (const auto& a : actions) {
      const auto& f = ctx.problem().system.factor(a);
      const double h = f.parents.empty() ? entropy(ctx.p(), {a}) : conditional_entropy(ctx.p(), {a}, f.parents);
      stated += std::log(static_cast<double>(ctx.problem().system.variable(a).cardinality)) - h;
    }
    out.diagnostics.emplace_back("entropy_form_total", stated);
    out.diagnostics.emplace_back("entropy_form_residual", out.total - stated);
  };
  return finish(std::move(obj));
}

Objective empowerment(const Problem& problem, const json& options) {
  check_options(options, "empowerment", {"k", "predictor", "reward"});
  const auto& vars = problem.system.variables();
  const VarSet x = with_roles(vars, {Role::kPastInput, Role::kFutureInput});
  VarSet actions = with_roles(vars, {Role::kAction});
  if (actions.empty()) fail("empowerment needs action variables");
  if (x.empty()) fail("empowerment needs input variables");
  if (x.size() + actions.size() != vars.size()) fail("empowerment expects only inputs and actions");
  std::stable_sort(actions.begin(), actions.end(),
                   [&](const std::string& a, const std::string& b) { return step_of(problem, a) < step_of(problem, b); });
  int k = -1;
  if (options.contains("k") && !(options.at("k").is_string() && options.at("k") == "full")) {
    k = option<int>(options, "k", -1);
    if (k < 0) throw Error(ErrorCode::kInvalidConfig, "k must be 'full' or a non-negative step count");
  }
  const std::string predictor = option<std::string>(options, "predictor", "learned");
  if (predictor != "learned" && predictor != "exact") {
    throw Error(ErrorCode::kInvalidConfig, "predictor must be 'learned' or 'exact'");
  }
  Problem p = problem;
  if (!option<bool>(options, "reward", false)) p.rewards.clear();

  std::vector<std::string> input_side, predictors;
  std::set<std::string> supplied;
  for (const auto& f : problem.target.factors) {
    if (subset_of(f.scope, x)) {
      input_side.push_back(f.label);
      continue;
    }
    const std::string& child = f.scope.back();
    if (!contains(actions, child)) fail("target factor '" + f.label + "' is neither an input model nor a reverse predictor");
    if (f.kind == TargetKind::kReward || (f.kind == TargetKind::kTable && !f.normalized)) {
      fail("reverse predictor '" + f.label + "' must be normalized per slice");
    }
    supplied.insert(child);
    predictors.push_back(f.label);
  }
  for (const auto& r : p.rewards) input_side.push_back(r.label);

  const TabularDistribution joint = build_joint(problem.system);
  const UnnormalizedTable joint_table = UnnormalizedTable::from(joint);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const std::string& a = actions[i];
    if (supplied.count(a)) continue;
    VarSet scope;
    for (const auto& name : x) {
      if (k < 0 || step_of(problem, name) <= step_of(problem, a) + k) scope.push_back(name);
    }
    scope.insert(scope.end(), actions.begin(), actions.begin() + static_cast<std::ptrdiff_t>(i));
    VarSet given = scope;
    scope.push_back(a);
    if (predictor == "exact") {
      // Current p(a | given) laid out with the child last.
      const auto cond = conditional_of(joint_table, {a}, given);
      const Scope given_scope = cond.given;
      const auto reorder = ordered_projection(given_scope, given);
      const auto card = static_cast<std::size_t>(problem.system.variable(a).cardinality);
      std::vector<double> table(cond.values.size());
      const std::size_t slices = cond.values.size() / card;
      for (std::size_t g = 0; g < slices; ++g) {
        for (std::size_t c = 0; c < card; ++c) table[reorder[g] * card + c] = cond.values[g * card + c];
      }
      p.target.factors.push_back(table_factor("predictor:" + a, scope, table, true));
    } else {
      p.target.factors.push_back(parameterized_factor("predictor:" + a, scope, zeros_for(problem, scope)));
    }
    predictors.push_back("predictor:" + a);
  }

  Objective obj{"empowerment", "Eq. empowerment", p};
  obj.terms = {{"control", {P(x, actions), -TF(input_side)}, 1.0},
               {"gen_empowerment_bound", {TF(predictors), -P(actions)}, -1.0}};
  obj.diagnostics = [x, actions](const EvalContext& ctx, Breakdown& out) {
    const double info = mutual_information(ctx.p(), x, actions);
    const double bound = out.term("gen_empowerment_bound");
    out.diagnostics.emplace_back("exact_information", info);
    out.diagnostics.emplace_back("bound_gap", info - bound);
    out.diagnostics.emplace_back("exact_form_total", out.term("control") + out.log_partition - info);
    out.diagnostics.emplace_back("action_entropy", entropy(ctx.p(), actions));
    out.diagnostics.emplace_back("input_entropy", entropy(ctx.p(), x));
  };
  return finish(std::move(obj));
}

Objective skill_discovery(const Problem& problem, const json& options) {
  check_options(options, "skill_discovery", {"window", "reward"});
  const std::string window = option<std::string>(options, "window", "full");
  if (window != "full" && window != "aligned") throw Error(ErrorCode::kInvalidConfig, "window must be 'full' or 'aligned'");
  const auto& vars = problem.system.variables();
  const VarSet skills = with_roles(vars, {Role::kSkill});
  if (skills.empty()) fail("skill_discovery needs skill variables");
  if (problem.horizon.T % problem.horizon.K != 0) fail("skill duration K must divide T");
  const VarSet x = with_roles(vars, {Role::kPastInput, Role::kFutureInput});
  const VarSet actions = with_roles(vars, {Role::kAction});
  if (x.size() + actions.size() + skills.size() != vars.size()) {
    fail("skill_discovery expects only inputs, actions and skills");
  }
  Problem p = problem;
  if (!option<bool>(options, "reward", true)) p.rewards.clear();
  for (const auto& f : problem.target.factors) {
    if (!subset_of(f.scope, x)) fail("skill_discovery target factor '" + f.label + "' must be over inputs");
  }
  std::vector<std::string> priors, predictors;
  for (const auto& a : actions) {
    const auto card = static_cast<std::size_t>(p.system.variable(a).cardinality);
    p.target.factors.push_back(table_factor("prior:" + a, {a}, uniform(card), true));
    priors.push_back("prior:" + a);
  }
  const int K = p.horizon.K;
  for (const auto& z : skills) {
    const int start = step_of(p, z);
    VarSet scope;
    for (const auto& name : x) {
      const int s = step_of(p, name);
      if (window == "full" || (s >= start && s <= start + K)) scope.push_back(name);
    }
    scope.push_back(z);
    p.target.factors.push_back(parameterized_factor("predictor:" + z, scope, zeros_for(p, scope)));
    predictors.push_back("predictor:" + z);
  }

  Objective obj{"skill_discovery", "Eq. skills", p};
  obj.total_includes_log_partition = true;
  obj.terms = {{"control", {PF(x), -Q(x)}, 1.0},
               {"action_complexity", {PF(actions), -TF(priors)}, 1.0},
               {"skill_info_bound", {TF(predictors), -PF(skills)}, -1.0}};
  obj.diagnostics = [x, skills](const EvalContext& ctx, Breakdown& out) {
    const double info = mutual_information(ctx.p(), skills, x);
    out.diagnostics.emplace_back("skill_information", info);
    out.diagnostics.emplace_back("skill_bound_gap", info - out.term("skill_info_bound"));
    // Pairwise separation of the final inputs across outcomes of the first skill.
    int last = std::numeric_limits<int>::min();
    for (const auto& name : x) last = std::max(last, ctx.problem().system.variable(name).step);
    VarSet final_inputs;
    for (const auto& name : x) {
      if (ctx.problem().system.variable(name).step == last) final_inputs.push_back(name);
    }
    const std::string& z = skills.front();
    const int card = ctx.problem().system.variable(z).cardinality;
    std::vector<std::vector<double>> per_skill;
    for (int s = 0; s < card; ++s) {
      Assignment a;
      a.bindings[z] = s;
      try {
        const auto c = condition(marginalize(ctx.p(), join(final_inputs, {z})), a);
        per_skill.emplace_back(c.probabilities().begin(), c.probabilities().end());
      } catch (const Error&) {
        per_skill.emplace_back();
      }
    }
    double min_tv = card > 1 ? 1.0 : 0.0;
    for (int s = 0; s < card; ++s)
      for (int r = s + 1; r < card; ++r) {
        if (per_skill[static_cast<std::size_t>(s)].empty() || per_skill[static_cast<std::size_t>(r)].empty()) {
          min_tv = 0.0;
          continue;
        }
        min_tv = std::min(min_tv, total_variation(per_skill[static_cast<std::size_t>(s)], per_skill[static_cast<std::size_t>(r)]));
      }
    out.diagnostics.emplace_back("terminal_input_tv", min_tv);
  };
  return finish(std::move(obj));
}

Objective info_gain(const Problem& problem, const json& options) {
  check_options(options, "info_gain", {"reward"});
  const auto& vars = problem.system.variables();
  if (with_roles(vars, {Role::kParameter}).empty()) fail("info_gain needs a parameter-role variable");
  const VarSet z = with_roles(vars, {Role::kParameter, Role::kLatentState});
  const int split = problem.horizon.split;
  VarSet past, future, realized;
  for (const auto& v : vars) {
    if (contains(z, v.name)) continue;
    const bool is_past = v.role == Role::kPastInput ||
                         (v.role != Role::kFutureInput && v.step <= split);
    (is_past ? past : future).push_back(v.name);
    if (v.role == Role::kAction || v.role == Role::kSkill) realized.push_back(v.name);
  }
  const VarSet x = join(past, future);
  Problem p = problem;
  if (!option<bool>(options, "reward", true)) p.rewards.clear();
  for (const auto& name : realized) p.target.factors.push_back(actual_copy(p.system, name, "policy:" + name));

  Objective obj{"info_gain", "Eq. infogain", p};
  obj.relation = Relation::kLowerBoundsJoint;
  obj.total_includes_log_partition = true;
  obj.terms = {{"simplicity", {P(z, past), -Q(z)}, 1.0},
               {"repr_learning", {Q(past, z), -P(past)}, -1.0},
               {"control", {P(future, join(past, z)), -Q(future, past)}, 1.0},
               {"info_gain", {Q(z, x), -P(z, past)}, -1.0}};
  std::vector<int> future_steps;
  for (const auto& name : future) future_steps.push_back(step_of(p, name));
  std::sort(future_steps.begin(), future_steps.end());
  future_steps.erase(std::unique(future_steps.begin(), future_steps.end()), future_steps.end());
  VarSet probe_actions;
  for (const auto& name : future) {
    if (p.system.variable(name).role == Role::kAction) probe_actions.push_back(name);
  }
  const VarSet inputs = with_roles(vars, {Role::kPastInput, Role::kFutureInput});
  obj.diagnostics = [z, past, future, future_steps, probe_actions, inputs](const EvalContext& ctx, Breakdown& out) {
    // Telescoped per-step information gain.
    double telescoped = 0.0;
    VarSet seen = past;
    for (int t : future_steps) {
      VarSet next = seen;
      for (const auto& name : future) {
        if (ctx.problem().system.variable(name).step == t) next.push_back(name);
      }
      telescoped += ctx.expect(Q(z, next)) - ctx.expect(P(z, seen));
      seen = next;
    }
    out.diagnostics.emplace_back("telescoped_info_gain", telescoped);
    out.diagnostics.emplace_back("telescope_gap", out.term("info_gain") - telescoped);
    out.diagnostics.emplace_back("latent_kl_given_past", ctx.expect(P(z, past)) - ctx.expect(Q(z, past)));
    // Expected information gain of each arm about z, by enumerating posteriors.
    const ActualSystem& sys = ctx.problem().system;
    for (const auto& a : probe_actions) {
      const int step = sys.variable(a).step;
      VarSet outcome;
      for (const auto& name : inputs) {
        if (sys.variable(name).step == step) outcome.push_back(name);
      }
      if (outcome.empty()) continue;
      for (int arm = 0; arm < sys.variable(a).cardinality; ++arm) {
        Assignment choice;
        choice.bindings[a] = arm;
        const auto joint = marginalize(build_joint(intervene(sys, choice)), join(z, outcome));
        const auto prior = marginalize(joint, z);
        const Scope out_scope = subscope(joint.scope(), outcome);
        const auto out_marginal = marginalize(joint, outcome);
        CompensatedSum eig;
        for (std::size_t o = 0; o < out_marginal.size(); ++o) {
          if (out_marginal[o] == 0.0) continue;
          const auto digits = decode(out_scope, o);
          Assignment seen_input;
          for (std::size_t i = 0; i < out_scope.size(); ++i) seen_input.bindings[out_scope[i].name] = digits[i];
          const auto posterior = condition(joint, seen_input);
          std::vector<double> post(posterior.probabilities().begin(), posterior.probabilities().end());
          std::vector<double> pri(prior.probabilities().begin(), prior.probabilities().end());
          eig.add(out_marginal[o] * kl_direct(post, pri));
        }
        out.diagnostics.emplace_back("eig:" + a + "=" + std::to_string(arm), eig.value());
      }
    }
  };
  return finish(std::move(obj));
}

const std::vector<FamilyInfo>& family_catalog() {
  static const std::vector<FamilyInfo> catalog = {
      {"elbo_bnn", "Eq. elbo", "identity", "variational belief over parameters: complexity + accuracy"},
      {"map_point_mass", "Eq. map", "identity", "point-mass belief: MAP / maximum-likelihood estimate"},
      {"amortized_vae", "Eq. amortized", "identity", "amortized encoder with decoder information bound"},
      {"kl_control", "Eq. control", "identity", "input preferences with curiosity; KL / expected-reward control"},
      {"maxent_rl", "Eq. maxentrl", "identity", "action complexity against a prior minus rewards"},
      {"empowerment", "Eq. empowerment", "identity", "control minus a reverse-predictor information bound"},
      {"skill_discovery", "Eq. skills", "identity", "control, action complexity and skill information bound"},
      {"info_gain", "Eq. infogain", "lower-bounds-joint", "simplicity, representation, control and information gain"},
  };
  return catalog;
}

Objective make_objective(std::string_view family, const Problem& problem, const json& options) {
  const json opts = options.is_null() ? json::object() : options;
  if (family == "elbo_bnn") return elbo_bnn(problem, opts);
  if (family == "map_point_mass") return map_point_mass(problem, opts);
  if (family == "amortized_vae") return amortized_vae(problem, opts);
  if (family == "kl_control") return kl_control(problem, opts);
  if (family == "maxent_rl") return maxent_rl(problem, opts);
  if (family == "empowerment") return empowerment(problem, opts);
  if (family == "skill_discovery") return skill_discovery(problem, opts);
  if (family == "info_gain") return info_gain(problem, opts);
  throw Error(ErrorCode::kInvalidConfig, "unknown objective family '" + std::string(family) + "'");
}

}  // namespace divmin

#include <cmath>
#include <numbers>

#include "divmin/systems.hpp"

namespace divmin {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = mix(seed_ ^ mix(stream_ + 0x632BE59BD9B4E019ULL));
  return mix(key + 0x9E3779B97F4A7C15ULL * ++counter_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

Rng Rng::split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream_)), stream); }

namespace {

VariableSpec var(std::string name, int card, Role role, int step) {
  return {std::move(name), card, role, step};
}

std::vector<double> random_conditional(Rng& rng, std::size_t slices, int card) {
  std::vector<double> out;
  for (std::size_t s = 0; s < slices; ++s) {
    std::vector<double> row(static_cast<std::size_t>(card));
    double total = 0.0;
    for (auto& v : row) {
      v = 0.05 + rng.uniform();
      total += v;
    }
    for (auto& v : row) out.push_back(v / total);
  }
  // Exact normalization of each slice: put the rounding residue on the last entry.
  for (std::size_t s = 0; s < slices; ++s) {
    double head = 0.0;
    const std::size_t base = s * static_cast<std::size_t>(card);
    for (int k = 0; k + 1 < card; ++k) head += out[base + static_cast<std::size_t>(k)];
    out[base + static_cast<std::size_t>(card - 1)] = 1.0 - head;
  }
  return out;
}

std::vector<double> random_logits(Rng& rng, std::size_t n, double scale) {
  std::vector<double> out(n);
  for (auto& v : out) v = scale * rng.normal();
  return out;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = 0.1 + 1.9 * rng.uniform();
  return out;
}

std::size_t slices_of(const Scope& vars, const VarSet& parents) {
  std::size_t n = 1;
  for (const auto& p : parents) n *= static_cast<std::size_t>(vars[static_cast<std::size_t>(index_of(vars, p))].cardinality);
  return n;
}

FactorSpec random_factor(Rng& rng, const Scope& vars, const std::string& child, VarSet parents,
                         bool learned) {
  const int card = vars[static_cast<std::size_t>(index_of(vars, child))].cardinality;
  const std::size_t slices = slices_of(vars, parents);
  if (learned) {
    return {child, std::move(parents), FactorKind::kParameterized,
            random_logits(rng, slices * static_cast<std::size_t>(card), 1.5), {}, 1.0};
  }
  return {child, std::move(parents), FactorKind::kFixed, random_conditional(rng, slices, card), {}, 1.0};
}

}  // namespace

Problem random_problem(std::uint64_t seed, int max_vars) {
  Rng rng(seed, 1);
  const int n = 2 + rng.below(std::max(1, max_vars - 1));
  const Role pool[] = {Role::kPastInput, Role::kFutureInput, Role::kLatentState, Role::kParameter,
                       Role::kAction};
  Scope vars;
  for (int i = 0; i < n; ++i) {
    Role role = i == 0 ? Role::kPastInput : i == 1 ? Role::kLatentState : pool[rng.below(5)];
    const int step = role == Role::kFutureInput ? 2 : 1;
    vars.push_back(var("v" + std::to_string(i), 2, role, step));
  }
  // Random topological order over the variables.
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(static_cast<int>(i)))]);
  }
  std::vector<FactorSpec> factors;
  bool any_learned = false;
  for (std::size_t r = 0; r < order.size(); ++r) {
    VarSet parents;
    for (std::size_t q = 0; q < r; ++q) {
      if (parents.size() < 2 && rng.uniform() < 0.5) parents.push_back(vars[order[q]].name);
    }
    bool learned = rng.uniform() < 0.5;
    if (r + 1 == order.size() && !any_learned) learned = true;
    any_learned = any_learned || learned;
    factors.push_back(random_factor(rng, vars, vars[order[r]].name, parents, learned));
  }
  TargetSpec target;
  const int n_factors = 1 + rng.below(3);
  for (int f = 0; f < n_factors; ++f) {
    VarSet scope;
    for (const auto& v : vars) {
      if (rng.uniform() < 0.5) scope.push_back(v.name);
    }
    if (scope.empty()) scope.push_back(vars[static_cast<std::size_t>(rng.below(n))].name);
    target.factors.push_back(table_factor("t" + std::to_string(f), scope,
                                          random_weights(rng, slices_of(vars, scope)), false));
  }
  // Every variable gets at least a unary factor so no target slice is flat by accident.
  VarSet all = names_of(vars);
  target.factors.push_back(table_factor("base", all, random_weights(rng, outcome_count(vars)), false));
  std::vector<TargetFactor> rewards;
  if (rng.uniform() < 0.3) {
    const auto& v = vars[static_cast<std::size_t>(rng.below(n))];
    rewards.push_back(reward_factor("reward:" + v.name, {v.name}, random_logits(rng, 2, 1.0)));
  }
  return {"random", ActualSystem(vars, factors), target, rewards, {2, 1, 1}, {}};
}

Problem random_maxent_problem(std::uint64_t seed) {
  Rng rng(seed, 2);
  Scope vars = {var("x1", 2, Role::kPastInput, 1), var("a1", 2, Role::kAction, 1),
                var("x2", 2, Role::kFutureInput, 2), var("a2", 2, Role::kAction, 2)};
  std::vector<FactorSpec> factors = {random_factor(rng, vars, "x1", {}, false),
                                     random_factor(rng, vars, "a1", {"x1"}, true),
                                     random_factor(rng, vars, "x2", {"x1", "a1"}, false),
                                     random_factor(rng, vars, "a2", {"x2"}, true)};
  std::vector<TargetFactor> rewards = {reward_factor("reward:x1", {"x1"}, random_logits(rng, 2, 1.0)),
                                       reward_factor("reward:x2", {"x2"}, random_logits(rng, 2, 1.0))};
  return {"random-maxent", ActualSystem(vars, factors), {}, rewards, {2, 1, 1}, {}};
}

Problem random_empowerment_problem(std::uint64_t seed) {
  Rng rng(seed, 3);
  Scope vars = {var("a1", 2, Role::kAction, 1), var("x1", 2, Role::kPastInput, 1),
                var("a2", 2, Role::kAction, 2), var("x2", 2, Role::kFutureInput, 2)};
  std::vector<FactorSpec> factors = {random_factor(rng, vars, "a1", {}, true),
                                     random_factor(rng, vars, "x1", {"a1"}, false),
                                     random_factor(rng, vars, "a2", {"x1"}, true),
                                     random_factor(rng, vars, "x2", {"x1", "a2"}, false)};
  TargetSpec target{{table_factor("input:x", {"x1", "x2"}, random_weights(rng, 4), false)}};
  return {"random-empowerment", ActualSystem(vars, factors), target, {}, {2, 1, 1}, {}};
}

Problem random_skill_problem(std::uint64_t seed) {
  Rng rng(seed, 4);
  Scope vars = {var("z1", 2, Role::kSkill, 1), var("x1", 2, Role::kPastInput, 1),
                var("a1", 2, Role::kAction, 1), var("x2", 2, Role::kFutureInput, 2)};
  std::vector<FactorSpec> factors = {random_factor(rng, vars, "z1", {}, true),
                                     random_factor(rng, vars, "x1", {}, false),
                                     random_factor(rng, vars, "a1", {"x1", "z1"}, true),
                                     random_factor(rng, vars, "x2", {"x1", "a1"}, false)};
  TargetSpec target{{table_factor("input:x", {"x1", "x2"}, random_weights(rng, 4), false)}};
  std::vector<TargetFactor> rewards;
  if (rng.uniform() < 0.5) rewards.push_back(reward_factor("reward:x2", {"x2"}, random_logits(rng, 2, 1.0)));
  return {"random-skills", ActualSystem(vars, factors), target, rewards, {1, 1, 1}, {}};
}

Problem random_infogain_problem(std::uint64_t seed) {
  Rng rng(seed, 5);
  Scope vars = {var("w", 2, Role::kParameter, 0), var("a1", 2, Role::kAction, 1),
                var("x1", 2, Role::kPastInput, 1), var("x2", 2, Role::kFutureInput, 2)};
  std::vector<FactorSpec> factors = {random_factor(rng, vars, "w", {}, rng.uniform() < 0.5),
                                     random_factor(rng, vars, "a1", {}, true),
                                     random_factor(rng, vars, "x1", {"a1", "w"}, false),
                                     random_factor(rng, vars, "x2", {"x1", "w"}, false)};
  TargetSpec target{{table_factor("prior:w", {"w"}, random_conditional(rng, 1, 2), true),
                     table_factor("lik:x1", {"a1", "w", "x1"}, random_conditional(rng, 4, 2), true),
                     table_factor("lik:x2", {"x1", "w", "x2"}, random_conditional(rng, 4, 2), true)}};
  return {"random-infogain", ActualSystem(vars, factors), target, {}, {2, 1, 1}, {}};
}

std::vector<double> random_parameters(const Problem& problem, std::uint64_t seed, double scale) {
  Rng rng(seed, 9);
  const std::size_t n = problem_parameters(problem).values.size();
  return random_logits(rng, n, scale);
}

}  // namespace divmin

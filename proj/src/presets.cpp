#include <cmath>
#include <set>

#include "divmin/systems.hpp"

namespace divmin {

namespace {

using nlohmann::json;

VariableSpec var(std::string name, int card, Role role, int step) {
  return {std::move(name), card, role, step};
}

FactorSpec fixed(std::string child, VarSet parents, std::vector<double> table) {
  return {std::move(child), std::move(parents), FactorKind::kFixed, std::move(table), {}, 1.0};
}

FactorSpec learned(std::string child, VarSet parents, std::size_t size) {
  return {std::move(child), std::move(parents), FactorKind::kParameterized,
          std::vector<double>(size, 0.0), {}, 1.0};
}

std::vector<double> one_hot(int card, int k) {
  std::vector<double> v(static_cast<std::size_t>(card), 0.0);
  v[static_cast<std::size_t>(k)] = 1.0;
  return v;
}

std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

void check_options(const json& options, std::string_view preset, const std::set<std::string>& allowed) {
  if (!options.is_object()) {
    throw Error(ErrorCode::kInvalidConfig, "preset options must be an object");
  }
  for (const auto& [key, value] : options.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kInvalidConfig,
                  "unknown option '" + key + "' for preset " + std::string(preset));
    }
  }
}

Problem bnn_toy(const json& options) {
  check_options(options, "bnn-toy", {"data", "prior", "fit0", "fit1"});
  std::vector<std::pair<int, int>> data = {{0, 0}, {1, 1}, {1, 1}, {0, 1}};
  if (options.contains("data")) {
    data.clear();
    for (const auto& row : options.at("data")) data.emplace_back(row.at(0).get<int>(), row.at(1).get<int>());
    if (data.empty()) throw Error(ErrorCode::kInvalidConfig, "bnn-toy needs at least one data pair");
  }
  const double prior0 = options.value("prior", 0.6);
  // Likelihood of w=0: y copies x; of w=1: y flips x.
  const double fit0 = options.value("fit0", 0.8);
  const double fit1 = options.value("fit1", 0.7);

  Scope vars;
  std::vector<FactorSpec> factors;
  TargetSpec target;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    const int step = static_cast<int>(i) + 1;
    vars.push_back(var("x" + n, 2, Role::kPastInput, step));
    vars.push_back(var("y" + n, 2, Role::kPastInput, step));
    factors.push_back(fixed("x" + n, {}, one_hot(2, data[i].first)));
    factors.push_back(fixed("y" + n, {}, one_hot(2, data[i].second)));
    std::vector<double> lik;
    for (int x = 0; x < 2; ++x) {
      // w = 0 slice then w = 1 slice
      lik.push_back(x == 0 ? fit0 : 1.0 - fit0);
      lik.push_back(x == 0 ? 1.0 - fit0 : fit0);
      lik.push_back(x == 0 ? 1.0 - fit1 : fit1);
      lik.push_back(x == 0 ? fit1 : 1.0 - fit1);
    }
    target.factors.push_back(table_factor("lik:y" + n, {"x" + n, "w", "y" + n}, lik, true));
  }
  vars.push_back(var("w", 2, Role::kParameter, 0));
  factors.push_back(learned("w", {}, 2));
  target.factors.insert(target.factors.begin(),
                        table_factor("prior:w", {"w"}, {prior0, 1.0 - prior0}, true));
  const int T = static_cast<int>(data.size());
  return {"bnn-toy", ActualSystem(vars, factors), target, {}, {T, 1, T}, {}};
}

Problem vae_toy(const json& options) {
  check_options(options, "vae-toy", {"code_cardinality"});
  const int codes = options.value("code_cardinality", 2);
  Scope vars = {var("x1", 2, Role::kPastInput, 1), var("x2", 2, Role::kPastInput, 1),
                var("z", codes, Role::kLatentState, 1)};
  std::vector<FactorSpec> factors = {fixed("x1", {}, {0.5, 0.5}),
                                     fixed("x2", {"x1"}, {1.0, 0.0, 0.0, 1.0}),
                                     learned("z", {"x1", "x2"}, 4 * static_cast<std::size_t>(codes))};
  TargetSpec target{{table_factor("prior:z", {"z"}, uniform(static_cast<std::size_t>(codes)), true)}};
  return {"vae-toy", ActualSystem(vars, factors), target, {}, {1, 1, 1}, {}};
}

// Joint over (x1, x2, x3) of a binary HMM with uniform start.
std::vector<double> hmm_inputs(double stay, double emit) {
  std::vector<double> out(8, 0.0);
  auto trans = [&](int a, int b) { return a == b ? stay : 1.0 - stay; };
  auto em = [&](int z, int x) { return z == x ? emit : 1.0 - emit; };
  for (int z1 = 0; z1 < 2; ++z1)
    for (int z2 = 0; z2 < 2; ++z2)
      for (int z3 = 0; z3 < 2; ++z3)
        for (int x = 0; x < 8; ++x) {
          const int x1 = x >> 2, x2 = (x >> 1) & 1, x3 = x & 1;
          out[static_cast<std::size_t>(x)] += 0.5 * trans(z1, z2) * trans(z2, z3) * em(z1, x1) *
                                              em(z2, x2) * em(z3, x3);
        }
  return out;
}

Problem hmm_filter(const json& options) {
  check_options(options, "hmm-filter", {"world", "true_stay", "model_stay", "emission"});
  const std::string world = options.value("world", std::string("mismatched"));
  if (world != "mismatched" && world != "bayesian") {
    throw Error(ErrorCode::kInvalidConfig, "hmm-filter world must be 'mismatched' or 'bayesian'");
  }
  const double true_stay = options.value("true_stay", 0.6);
  const double model_stay = options.value("model_stay", 0.9);
  const double emit = options.value("emission", 0.8);

  const auto joint = hmm_inputs(true_stay, emit);
  std::vector<double> px1(2, 0.0), px2(4, 0.0), px3(8, 0.0);
  for (int x = 0; x < 8; ++x) {
    px1[static_cast<std::size_t>(x >> 2)] += joint[static_cast<std::size_t>(x)];
    px2[static_cast<std::size_t>(x >> 1)] += joint[static_cast<std::size_t>(x)];
  }
  for (int x = 0; x < 8; ++x) px3[static_cast<std::size_t>(x)] = joint[static_cast<std::size_t>(x)] / px2[static_cast<std::size_t>(x >> 1)];
  for (int x = 0; x < 4; ++x) px2[static_cast<std::size_t>(x)] /= px1[static_cast<std::size_t>(x >> 1)];

  const std::vector<double> emission = {emit, 1.0 - emit, 1.0 - emit, emit};
  const std::vector<double> stay = {model_stay, 1.0 - model_stay, 1.0 - model_stay, model_stay};

  Scope vars = {var("x1", 2, Role::kPastInput, 1), var("x2", 2, Role::kPastInput, 2),
                var("z1", 2, Role::kLatentState, 1), var("z2", 2, Role::kLatentState, 2),
                var("z3", 2, Role::kLatentState, 3), var("x3", 2, Role::kFutureInput, 3)};
  std::vector<FactorSpec> factors = {fixed("x1", {}, px1), fixed("x2", {"x1"}, px2),
                                     learned("z1", {"x1", "x2"}, 8),
                                     learned("z2", {"z1", "x1", "x2"}, 16),
                                     learned("z3", {"z2", "x1", "x2"}, 16)};
  if (world == "bayesian") {
    factors.push_back(fixed("x3", {"z3"}, emission));
  } else {
    factors.push_back(fixed("x3", {"x1", "x2"}, px3));
  }
  TargetSpec target{{table_factor("prior:z1", {"z1"}, {0.5, 0.5}, true),
                     table_factor("trans:z2", {"z1", "z2"}, stay, true),
                     table_factor("trans:z3", {"z2", "z3"}, stay, true),
                     table_factor("emit:x1", {"z1", "x1"}, emission, true),
                     table_factor("emit:x2", {"z2", "x2"}, emission, true),
                     table_factor("emit:x3", {"z3", "x3"}, emission, true)}};
  return {"hmm-filter", ActualSystem(vars, factors), target, {}, {3, 1, 2}, {}};
}

// Next-state table over parents (x, a) for a clamped 1-D chain.
std::vector<double> chain_dynamics(int states, double intended) {
  std::vector<double> out(static_cast<std::size_t>(states * 2 * states), 0.0);
  for (int x = 0; x < states; ++x) {
    for (int a = 0; a < 2; ++a) {
      const int next = std::clamp(x + (a == 0 ? -1 : 1), 0, states - 1);
      const std::size_t base = static_cast<std::size_t>((x * 2 + a) * states);
      out[base + static_cast<std::size_t>(next)] += intended;
      out[base + static_cast<std::size_t>(x)] += 1.0 - intended;
    }
  }
  return out;
}

Problem chain_mdp(const json& options) {
  check_options(options, "chain-mdp", {"states", "intended", "reward", "distractor"});
  const int states = options.value("states", 5);
  const double intended = options.value("intended", 0.8);
  std::vector<double> reward(static_cast<std::size_t>(states), 0.0);
  reward.back() = 1.0;
  if (options.contains("reward")) reward = options.at("reward").get<std::vector<double>>();
  if (reward.size() != static_cast<std::size_t>(states)) {
    throw Error(ErrorCode::kInvalidConfig, "chain-mdp reward needs one value per state");
  }
  const bool distractor = options.value("distractor", false);
  const auto dyn = chain_dynamics(states, intended);
  const std::size_t s = static_cast<std::size_t>(states);

  Scope vars;
  std::vector<FactorSpec> factors;
  std::map<std::string, std::vector<double>> passive;
  std::vector<double> averaged(dyn.size(), 0.0);
  for (std::size_t x = 0; x < s; ++x)
    for (std::size_t y = 0; y < s; ++y) {
      const double avg = 0.5 * (dyn[(x * 2) * s + y] + dyn[(x * 2 + 1) * s + y]);
      averaged[(x * 2) * s + y] = avg;
      averaged[(x * 2 + 1) * s + y] = avg;
    }
  for (int t = 1; t <= 3; ++t) {
    const std::string x = "x" + std::to_string(t);
    const std::string a = "a" + std::to_string(t);
    vars.push_back(var(x, states, t == 1 ? Role::kPastInput : Role::kFutureInput, t));
    if (t == 1) {
      factors.push_back(fixed(x, {}, uniform(s)));
      passive[x] = uniform(s);
    } else {
      const std::string prev = std::to_string(t - 1);
      factors.push_back(fixed(x, {"x" + prev, "a" + prev}, dyn));
      passive[x] = averaged;
    }
    if (distractor) {
      // Reward-irrelevant noise that depends on the state.
      const std::string n = "n" + std::to_string(t);
      vars.push_back(var(n, 2, Role::kFutureInput, t));
      std::vector<double> noise;
      for (int k = 0; k < states; ++k) {
        const double p = 0.2 + 0.6 * k / std::max(1, states - 1);
        noise.push_back(p);
        noise.push_back(1.0 - p);
      }
      factors.push_back(fixed(n, {x}, noise));
    }
    vars.push_back(var(a, 2, Role::kAction, t));
    factors.push_back(learned(a, {x}, s * 2));
  }
  std::vector<TargetFactor> rewards = {reward_factor("reward:x3", {"x3"}, reward)};
  return {"chain-mdp", ActualSystem(vars, factors), {}, rewards, {3, 1, 1}, passive};
}

Problem free_choice(const json& options) {
  check_options(options, "free-choice", {"reward", "steps"});
  std::vector<double> r = {0.0, std::log(3.0)};
  if (options.contains("reward")) r = options.at("reward").get<std::vector<double>>();
  const int steps = options.value("steps", 2);
  if (steps < 1) throw Error(ErrorCode::kInvalidConfig, "free-choice needs steps >= 1");
  const int card = static_cast<int>(r.size());
  if (card < 1) throw Error(ErrorCode::kInvalidConfig, "free-choice reward must be non-empty");
  Scope vars;
  std::vector<FactorSpec> factors;
  std::vector<TargetFactor> rewards;
  for (int t = 1; t <= steps; ++t) {
    const std::string x = "x" + std::to_string(t);
    vars.push_back(var(x, card, t == 1 ? Role::kPastInput : Role::kFutureInput, t));
    if (t == 1) {
      factors.push_back(learned(x, {}, r.size()));
    } else {
      factors.push_back(learned(x, {"x" + std::to_string(t - 1)}, r.size() * r.size()));
    }
    rewards.push_back(reward_factor("reward:" + x, {x}, r));
  }
  return {"free-choice", ActualSystem(vars, factors), {}, rewards, {steps, 1, 1}, {}};
}

Problem bandit_infogain(const json& options) {
  check_options(options, "bandit-infogain", {"epsilon"});
  const double eps = options.value("epsilon", 0.05);
  if (!(eps > 0.0 && eps < 0.5)) throw Error(ErrorCode::kInvalidConfig, "epsilon must be in (0, 0.5)");
  // Parents (a, w): arm 0 is a fair coin, arm 1 reveals w.
  const std::vector<double> env = {0.5, 0.5, 0.5, 0.5, 1.0, 0.0, 0.0, 1.0};
  const std::vector<double> lik = {1 - eps, eps, eps, 1 - eps, 1 - eps, eps, eps, 1 - eps};
  Scope vars = {var("w", 2, Role::kParameter, 0), var("a1", 2, Role::kAction, 1),
                var("x1", 2, Role::kPastInput, 1), var("a2", 2, Role::kAction, 2),
                var("x2", 2, Role::kFutureInput, 2)};
  std::vector<FactorSpec> factors = {fixed("w", {}, {0.5, 0.5}), learned("a1", {}, 2),
                                     fixed("x1", {"a1", "w"}, env), learned("a2", {}, 2),
                                     fixed("x2", {"a2", "w"}, env)};
  TargetSpec target{{table_factor("prior:w", {"w"}, {0.5, 0.5}, true),
                     table_factor("lik:x1", {"a1", "w", "x1"}, lik, true),
                     table_factor("lik:x2", {"a2", "w", "x2"}, lik, true)}};
  return {"bandit-infogain", ActualSystem(vars, factors), target, {}, {2, 1, 1}, {}};
}

Problem two_room_skills(const json& options) {
  check_options(options, "two-room-skills", {"hall_penalty", "skills"});
  const double penalty = options.value("hall_penalty", 5.0);
  const int skills = options.value("skills", 2);
  // States: 0 start, 1 corridor, 2 left room, 3 right room, 4 hall.
  constexpr int kStates = 5;
  std::vector<double> to_corridor;
  for (int x = 0; x < kStates; ++x)
    for (int a = 0; a < 2; ++a) {
      auto row = one_hot(kStates, 1);
      to_corridor.insert(to_corridor.end(), row.begin(), row.end());
    }
  std::vector<double> rooms;
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2) {
      const int dest = a1 != a2 ? 4 : (a1 == 0 ? 2 : 3);
      auto row = one_hot(kStates, dest);
      rooms.insert(rooms.end(), row.begin(), row.end());
    }
  const std::size_t sk = static_cast<std::size_t>(skills);
  Scope vars = {var("z1", skills, Role::kSkill, 1), var("x1", kStates, Role::kPastInput, 1),
                var("a1", 2, Role::kAction, 1), var("x2", kStates, Role::kFutureInput, 2),
                var("a2", 2, Role::kAction, 2), var("x3", kStates, Role::kFutureInput, 3)};
  std::vector<FactorSpec> factors = {learned("z1", {}, sk), fixed("x1", {}, one_hot(kStates, 0)),
                                     learned("a1", {"x1", "z1"}, kStates * sk * 2),
                                     fixed("x2", {"x1", "a1"}, to_corridor),
                                     learned("a2", {"x2", "z1"}, kStates * sk * 2),
                                     fixed("x3", {"a1", "a2"}, rooms)};
  std::vector<double> r = {-penalty, -penalty, 0.0, 0.0, -penalty};
  std::vector<TargetFactor> rewards = {reward_factor("reward:x3", {"x3"}, r)};
  return {"two-room-skills", ActualSystem(vars, factors), {}, rewards, {2, 2, 1}, {}};
}

Problem dead_action(const json& options) {
  check_options(options, "dead-action", {"dead"});
  const bool dead = options.value("dead", true);
  if (!dead) {
    Scope vars = {var("a", 2, Role::kAction, 1), var("x1", 2, Role::kFutureInput, 2)};
    std::vector<FactorSpec> factors = {learned("a", {}, 2), fixed("x1", {"a"}, {1, 0, 0, 1})};
    TargetSpec target{{table_factor("input:x1", {"x1"}, {0.5, 0.5}, true)}};
    return {"dead-action", ActualSystem(vars, factors), target, {}, {1, 1, 1}, {}};
  }
  // Parents (x0, a): action 0 and 1 set the input, action 2 leaves it unchanged.
  std::vector<double> move;
  for (int x0 = 0; x0 < 2; ++x0)
    for (int a = 0; a < 3; ++a) {
      auto row = one_hot(2, a == 2 ? x0 : a);
      move.insert(move.end(), row.begin(), row.end());
    }
  Scope vars = {var("x0", 2, Role::kPastInput, 1), var("a", 3, Role::kAction, 1),
                var("x1", 2, Role::kFutureInput, 2)};
  std::vector<FactorSpec> factors = {fixed("x0", {}, {0.5, 0.5}), learned("a", {}, 3),
                                     fixed("x1", {"x0", "a"}, move)};
  TargetSpec target{{table_factor("input:x0", {"x0"}, {0.5, 0.5}, true),
                     table_factor("input:x1", {"x1"}, {0.5, 0.5}, true)}};
  return {"dead-action", ActualSystem(vars, factors), target, {}, {1, 1, 1}, {}};
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"bnn-toy",    "vae-toy",         "hmm-filter",      "chain-mdp",
          "free-choice", "bandit-infogain", "two-room-skills", "dead-action"};
}

Problem make_preset(std::string_view name, const nlohmann::json& options) {
  const json opts = options.is_null() ? json::object() : options;
  Problem p = [&] {
    if (name == "bnn-toy") return bnn_toy(opts);
    if (name == "vae-toy") return vae_toy(opts);
    if (name == "hmm-filter") return hmm_filter(opts);
    if (name == "chain-mdp") return chain_mdp(opts);
    if (name == "free-choice") return free_choice(opts);
    if (name == "bandit-infogain") return bandit_infogain(opts);
    if (name == "two-room-skills") return two_room_skills(opts);
    if (name == "dead-action") return dead_action(opts);
    throw Error(ErrorCode::kUnknownPreset, "unknown preset '" + std::string(name) + "'");
  }();
  validate_problem(p);
  return p;
}

}  // namespace divmin

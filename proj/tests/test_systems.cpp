#include <cmath>

#include <gtest/gtest.h>

#include "divmin/systems.hpp"
#include "support.hpp"

using namespace divmin;
using testing_support::SplitMix;

namespace {

template <typename F>
void expect_code(F&& f, ErrorCode code) {
  try {
    f();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

FactorSpec fixed(std::string child, VarSet parents, std::vector<double> table) {
  return {std::move(child), std::move(parents), FactorKind::kFixed, std::move(table), {}, 1.0};
}

FactorSpec learned(std::string child, VarSet parents, std::vector<double> logits) {
  return {std::move(child), std::move(parents), FactorKind::kParameterized, std::move(logits), {}, 1.0};
}

// Random binary system a -> b, (a, b) -> c with one learned factor.
ActualSystem random_system(SplitMix& rng) {
  Scope vars = {{"a", 2, Role::kPastInput, 1}, {"b", 2, Role::kLatentState, 1}, {"c", 2, Role::kAction, 1}};
  auto cond = [&](std::size_t slices) {
    std::vector<double> t;
    for (std::size_t s = 0; s < slices; ++s) {
      const double p = 0.05 + 0.9 * rng.uniform();
      t.push_back(p);
      t.push_back(1.0 - p);
    }
    return t;
  };
  std::vector<double> logits;
  for (int i = 0; i < 8; ++i) logits.push_back(2.0 * rng.uniform() - 1.0);
  return ActualSystem(vars, {fixed("a", {}, cond(1)), fixed("b", {"a"}, cond(2)), learned("c", {"a", "b"}, logits)});
}

// Naive per-outcome product, written independently of build_joint.
std::vector<double> naive_joint(const ActualSystem& s) {
  const auto& vars = s.variables();
  const std::size_t n = outcome_count(vars);
  std::vector<double> out(n, 1.0);
  for (std::size_t w = 0; w < n; ++w) {
    const auto digits = decode(vars, w);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto& f = s.factors()[i];
      std::size_t slice = 0;
      for (const auto& p : f.parents) {
        const std::size_t k = s.index(p);
        slice = slice * static_cast<std::size_t>(vars[k].cardinality) + static_cast<std::size_t>(digits[k]);
      }
      out[w] *= s.conditional(i)[slice * static_cast<std::size_t>(vars[i].cardinality) +
                                 static_cast<std::size_t>(digits[i])];
    }
  }
  return out;
}

}  // namespace

TEST(BuildJoint, SingleUniformFactor) {
  const ActualSystem s({{"x", 2, Role::kPastInput, 1}}, {learned("x", {}, {0.0, 0.0})});
  const auto p = build_joint(s);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(BuildJoint, DeterministicCopyIsDiagonal) {
  const ActualSystem s({{"x", 2, Role::kPastInput, 1}, {"z", 2, Role::kLatentState, 1}},
                       {learned("x", {}, {0.3, -0.2}), fixed("z", {"x"}, {1, 0, 0, 1})});
  const auto p = build_joint(s);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_NEAR(p[0] + p[3], 1.0, 1e-15);
}

TEST(BuildJoint, MatchesNaiveProductOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitMix rng(seed);
    const auto s = random_system(rng);
    const auto p = build_joint(s);
    const auto oracle = naive_joint(s);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], oracle[i], 1e-15);
  }
}

TEST(BuildJoint, TopologicalOrderInvariance) {
  SplitMix rng(9);
  const auto s = random_system(rng);
  const auto a = build_joint(s, {0, 1, 2});
  // A chain has a single valid order, so the reverse one is rejected.
  const auto b = build_joint(s, s.topological_order());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  expect_code([&] { build_joint(s, {2, 1, 0}); }, ErrorCode::kInvalidSystem);

  const ActualSystem wide({{"a", 2, Role::kPastInput, 1}, {"b", 2, Role::kPastInput, 1}, {"c", 2, Role::kAction, 1}},
                          {fixed("a", {}, {0.3, 0.7}), fixed("b", {}, {0.6, 0.4}),
                           learned("c", {"a", "b"}, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8})});
  const auto x = build_joint(wide, {0, 1, 2});
  const auto y = build_joint(wide, {1, 0, 2});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-12);
}

TEST(ActualSystem, Validation) {
  const Scope two = {{"x", 2, Role::kPastInput, 1}, {"z", 2, Role::kLatentState, 1}};
  expect_code([&] { ActualSystem(two, {learned("x", {}, {0, 0}), fixed("z", {"x"}, {0.5, 0.6, 0.5, 0.5})}); },
              ErrorCode::kInvalidTable);
  expect_code([&] { ActualSystem(two, {learned("x", {"z"}, {0, 0, 0, 0}), learned("z", {"x"}, {0, 0, 0, 0})}); },
              ErrorCode::kInvalidSystem);
  expect_code([&] { ActualSystem(two, {fixed("x", {}, {0.5, 0.5}), fixed("z", {"x"}, {1, 0, 0, 1})}); },
              ErrorCode::kInvalidSystem);
  expect_code([&] { ActualSystem(two, {learned("x", {}, {0, 0})}); }, ErrorCode::kInvalidSystem);
  expect_code([&] { ActualSystem(two, {learned("x", {}, {0, NAN}), learned("z", {}, {0, 0})}); },
              ErrorCode::kInvalidParameters);
  FactorSpec pm{"z", {"x"}, FactorKind::kPointMass, {}, {0, 2}, 1.0};
  expect_code([&] { ActualSystem(two, {learned("x", {}, {0, 0}), pm}); }, ErrorCode::kInvalidSystem);
}

TEST(Parameters, SoftmaxValues) {
  const auto half = softmax_slices(std::vector<double>{0.0, 0.0}, 2);
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  const auto p = softmax_slices(std::vector<double>{std::log(3.0), 0.0}, 2);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(Parameters, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix rng(seed);
    const auto s = random_system(rng);
    const auto phi = get_parameters(s);
    ASSERT_EQ(phi.values.size(), 8u);
    EXPECT_EQ(phi.coords[3].factor, "p:c");
    const auto back = set_parameters(s, phi.values);
    EXPECT_EQ(get_parameters(back).values, phi.values);
    const auto a = build_joint(s);
    const auto b = build_joint(back);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  }
}

TEST(Parameters, Errors) {
  SplitMix rng(1);
  const auto s = random_system(rng);
  expect_code([&] { set_parameters(s, std::vector<double>(3, 0.0)); }, ErrorCode::kInvalidParameters);
  std::vector<double> bad(8, 0.0);
  bad[2] = INFINITY;
  expect_code([&] { set_parameters(s, bad); }, ErrorCode::kInvalidParameters);
}

TEST(BuildTarget, NormalizedPriorHasZeroLogPartition) {
  const Scope x = {{"x", 2, Role::kPastInput, 1}};
  const auto t = build_target(TargetSpec{{table_factor("prior", {"x"}, {0.2, 0.8}, true)}}, x);
  EXPECT_NEAR(t.log_partition(), 0.0, 1e-15);
}

TEST(BuildTarget, RewardPotentialIsSoftmaxOfReward) {
  const Scope x = {{"x", 2, Role::kPastInput, 1}};
  const auto t = build_target(TargetSpec{{reward_factor("r", {"x"}, {0.0, std::log(3.0)})}}, x).normalized();
  EXPECT_NEAR(t[0], 0.25, 1e-15);
  EXPECT_NEAR(t[1], 0.75, 1e-15);
}

TEST(BuildTarget, PriorTimesLikelihoodIsBayesJoint) {
  const Scope s = {{"w", 2, Role::kParameter, 0}, {"y", 2, Role::kPastInput, 1}};
  const auto t = build_target(
      TargetSpec{{table_factor("prior", {"w"}, {0.6, 0.4}, true), table_factor("lik", {"w", "y"}, {0.8, 0.2, 0.3, 0.7}, true)}},
      s);
  // Hand enumeration: q(w, y) = q(w) q(y | w).
  const std::vector<double> expected = {0.48, 0.12, 0.12, 0.28};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(t[i], expected[i], 1e-15);
  EXPECT_NEAR(t.log_partition(), 0.0, 1e-15);
}

TEST(BuildTarget, UnnormalizedConditionalIsRejected) {
  const Scope s = {{"w", 2, Role::kParameter, 0}, {"y", 2, Role::kPastInput, 1}};
  expect_code([&] { build_target(TargetSpec{{table_factor("lik", {"w", "y"}, {0.8, 0.3, 0.3, 0.7}, true)}}, s); },
              ErrorCode::kInvalidTable);
  expect_code([&] { build_target(TargetSpec{{table_factor("zero", {"y"}, {0.0, 0.0}, false)}}, s); },
              ErrorCode::kZeroMass);
}

TEST(Intervene, RootDoEqualsConditioning) {
  const ActualSystem s({{"a", 2, Role::kAction, 1}, {"x", 2, Role::kFutureInput, 2}},
                       {learned("a", {}, {0.4, -0.1}), fixed("x", {"a"}, {0.9, 0.1, 0.2, 0.8})});
  Assignment r;
  r.bindings["a"] = 1;
  const auto done = realize(s, r, InterventionMode::kDo);
  const auto cond = realize(s, r, InterventionMode::kCondition);
  for (std::size_t i = 0; i < done.size(); ++i) EXPECT_NEAR(done[i], cond[i], 1e-15);
}

TEST(Intervene, DoLeavesAncestorsUnlikeConditioning) {
  const ActualSystem s({{"x", 2, Role::kPastInput, 1}, {"a", 2, Role::kAction, 1}},
                       {fixed("x", {}, {0.5, 0.5}), learned("a", {"x"}, {2.0, 0.0, 0.0, 2.0})});
  Assignment r;
  r.bindings["a"] = 1;
  const auto done = marginalize(realize(s, r, InterventionMode::kDo), {"x"});
  const auto cond = marginalize(realize(s, r, InterventionMode::kCondition), {"x"});
  EXPECT_NEAR(done[0], 0.5, 1e-15);
  EXPECT_GT(std::abs(cond[0] - 0.5), 0.1);
}

TEST(Intervene, LatentIsRejected) {
  SplitMix rng(2);
  const auto s = random_system(rng);
  Assignment r;
  r.bindings["b"] = 0;
  expect_code([&] { intervene(s, r); }, ErrorCode::kInvalidIntervention);
}

TEST(Intervene, EqualsPointMassSubstitution) {
  for (const auto& name : preset_names()) {
    const Problem pr = make_preset(name);
    Assignment r;
    std::vector<FactorSpec> factors = pr.system.factors();
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const auto& v = pr.system.variables()[i];
      if (v.role != Role::kAction && v.role != Role::kSkill) continue;
      const int value = v.cardinality - 1;
      r.bindings[v.name] = value;
      factors[i] = {v.name, {}, FactorKind::kPointMass, {}, {value}, 1.0};
    }
    if (r.bindings.empty()) continue;
    const auto a = build_joint(intervene(pr.system, r));
    const auto b = build_joint(ActualSystem(pr.system.variables(), factors));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15) << name;
  }
}

TEST(Presets, AllBuildWithinCapacity) {
  for (const auto& name : preset_names()) {
    const Problem pr = make_preset(name);
    const auto p = build_joint(pr.system);
    double total = 0.0;
    for (double v : p.probabilities()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-10) << name;
    EXPECT_LE(p.size(), kMaxOutcomes);
    EXPECT_NO_THROW(build_target(pr)) << name;
  }
  expect_code([] { make_preset("nope"); }, ErrorCode::kUnknownPreset);
  expect_code([] { make_preset("bnn-toy", {{"bogus", 1}}); }, ErrorCode::kInvalidConfig);
}

TEST(Presets, ChainMdpSize) {
  const Problem pr = make_preset("chain-mdp");
  EXPECT_LE(outcome_count(pr.system.variables()), 1000u);
  EXPECT_EQ(pr.system.names_with_role(Role::kAction).size(), 3u);
}

TEST(Presets, DeadActionMatchesNoOp) {
  const Problem pr = make_preset("dead-action");
  const auto& t = pr.system.factor("x1").values;  // parents (x0, a), child x1
  for (int x0 = 0; x0 < 2; ++x0) {
    const std::size_t slice = static_cast<std::size_t>(x0 * 3 + 2);
    EXPECT_EQ(t[slice * 2 + static_cast<std::size_t>(x0)], 1.0);
  }
}

TEST(Presets, BanditArms) {
  const Problem pr = make_preset("bandit-infogain");
  const auto& t = pr.system.factor("x1").values;  // parents (a1, w)
  for (int w = 0; w < 2; ++w) {
    EXPECT_EQ(t[static_cast<std::size_t>(w) * 2], 0.5);                     // arm 0 ignores w
    EXPECT_EQ(t[static_cast<std::size_t>(2 + w) * 2 + static_cast<std::size_t>(w)], 1.0);  // arm 1 shows w
  }
}

TEST(Horizon, Validation) {
  EXPECT_NO_THROW((Horizon{4, 2, 2}.validate(true)));
  expect_code([] { Horizon{4, 3, 2}.validate(true); }, ErrorCode::kInvalidSystem);
  expect_code([] { Horizon{4, 1, 5}.validate(false); }, ErrorCode::kInvalidSystem);
  expect_code([] { Horizon{4, 1, 0}.validate(false); }, ErrorCode::kInvalidSystem);
}

TEST(SystemJson, RoundTrip) {
  for (const auto& name : preset_names()) {
    const Problem pr = make_preset(name);
    const auto doc = problem_to_json(pr);
    const Problem back = problem_from_json(nlohmann::json::parse(doc.dump()));
    EXPECT_EQ(problem_to_json(back).dump(), doc.dump()) << name;
    const auto a = build_target(pr);
    const auto b = build_target(back);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << name;
  }
}

TEST(SystemJson, UnknownKeysRejected) {
  auto doc = nlohmann::json::parse(problem_to_json(make_preset("free-choice")).dump());
  doc["surprise"] = 1;
  expect_code([&] { problem_from_json(doc); }, ErrorCode::kInvalidConfig);
  doc.erase("surprise");
  doc["variables"][0]["colour"] = "red";
  expect_code([&] { problem_from_json(doc); }, ErrorCode::kInvalidConfig);
}

TEST(Rng, CounterBasedDeterminism) {
  Rng a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(RandomProblems, AreValidAndSmall) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Problem pr = random_problem(seed);
    EXPECT_LE(pr.system.variables().size(), 5u);
    EXPECT_NO_THROW(validate_problem(pr));
    EXPECT_NO_THROW(build_target(pr));
  }
}

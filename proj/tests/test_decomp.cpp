#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "divmin/decomp.hpp"
#include "support.hpp"

using namespace divmin;
using testing_support::SplitMix;

namespace {

using Key = std::vector<int>;

Key key_of(const Scope& scope, const std::vector<int>& digits, const VarSet& names) {
  Key k;
  for (const auto& n : names) k.push_back(digits[static_cast<std::size_t>(index_of(scope, n))]);
  return k;
}

// E_p[ln w(a | b)] with w normalized internally, by brute-force enumeration over maps.
double expect_log_cond(const Scope& scope, const std::vector<double>& p, const std::vector<double>& w,
                       const VarSet& a, const VarSet& b) {
  if (a.empty()) return 0.0;
  VarSet ab = b;
  ab.insert(ab.end(), a.begin(), a.end());
  std::map<Key, double> wab, wb;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto d = decode(scope, i);
    wab[key_of(scope, d, ab)] += w[i];
    wb[key_of(scope, d, b)] += w[i];
  }
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    const auto d = decode(scope, i);
    out += p[i] * (std::log(wab[key_of(scope, d, ab)]) - std::log(wb[key_of(scope, d, b)]));
  }
  return out;
}

struct Pair {
  Scope scope;
  std::vector<double> p, q;
  VarSet x, z, past, future;
};

Pair tables_of(const Problem& pr) {
  Pair out;
  const auto joint = build_joint(pr.system);
  const auto target = build_target(pr);
  out.scope = joint.scope();
  out.p.assign(joint.probabilities().begin(), joint.probabilities().end());
  out.q.assign(target.weights().begin(), target.weights().end());
  for (const auto& v : out.scope) {
    if (v.role == Role::kPastInput) out.past.push_back(v.name);
    if (v.role == Role::kFutureInput) out.future.push_back(v.name);
    if (is_input(v.role)) {
      out.x.push_back(v.name);
    } else {
      out.z.push_back(v.name);
    }
  }
  return out;
}

double direct_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double zq = 0.0;
  for (double v : q) zq += v;
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) out += p[i] * (std::log(p[i]) - std::log(q[i] / zq));
  }
  return out;
}

// z (latent root) -> x1 (past) -> x2 (future), x2 also reads z.
ActualSystem three_step(SplitMix& rng) {
  Scope vars = {{"z", 2, Role::kLatentState, 0}, {"x1", 2, Role::kPastInput, 1}, {"x2", 2, Role::kFutureInput, 2}};
  auto cond = [&](std::size_t slices) {
    std::vector<double> t;
    for (std::size_t s = 0; s < slices; ++s) {
      const double v = 0.1 + 0.8 * rng.uniform();
      t.push_back(v);
      t.push_back(1.0 - v);
    }
    return t;
  };
  return ActualSystem(vars, {{"z", {}, FactorKind::kFixed, cond(1), {}, 1.0},
                             {"x1", {"z"}, FactorKind::kFixed, cond(2), {}, 1.0},
                             {"x2", {"z", "x1"}, FactorKind::kParameterized,
                              {0.3, -0.1, 0.2, 0.5, -0.6, 0.1, 0.0, 0.4}, {}, 1.0}});
}

std::vector<double> random_conditional(SplitMix& rng, std::size_t slices) {
  std::vector<double> t;
  for (std::size_t s = 0; s < slices; ++s) {
    const double v = 0.1 + 0.8 * rng.uniform();
    t.push_back(v);
    t.push_back(1.0 - v);
  }
  return t;
}

}  // namespace

TEST(JointKl, MatchesDirectSumAndLogPartition) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = joint_kl(build_joint(pr.system), build_target(pr));
    ASSERT_FALSE(r.divergent);
    EXPECT_NEAR(r.joint_kl, direct_kl(t.p, t.q), 1e-10) << seed;
    double zq = 0.0;
    for (double v : t.q) zq += v;
    EXPECT_NEAR(r.log_partition, std::log(zq), 1e-12);
    EXPECT_GE(r.joint_kl, -1e-12);
  }
}

TEST(Decompositions, LatentSideMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = decompose_latent_side(build_joint(pr.system), build_target(pr));
    const double pref = expect_log_cond(t.scope, t.p, t.p, t.z, t.x) - expect_log_cond(t.scope, t.p, t.q, t.z, {});
    const double info = expect_log_cond(t.scope, t.p, t.q, t.x, t.z) - expect_log_cond(t.scope, t.p, t.p, t.x, {});
    EXPECT_NEAR(r.term("latent_pref_kl"), pref, 1e-10) << seed;
    EXPECT_NEAR(r.term("info_bound"), info, 1e-10) << seed;
    EXPECT_NEAR(r.slack, 0.0, 1e-9);
  }
}

TEST(Decompositions, InputSideMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = decompose_input_side(build_joint(pr.system), build_target(pr));
    const double pref = expect_log_cond(t.scope, t.p, t.p, t.x, t.z) - expect_log_cond(t.scope, t.p, t.q, t.x, {});
    const double info = expect_log_cond(t.scope, t.p, t.q, t.z, t.x) - expect_log_cond(t.scope, t.p, t.p, t.z, {});
    EXPECT_NEAR(r.term("input_pref_kl"), pref, 1e-10) << seed;
    EXPECT_NEAR(r.term("info_bound_latent"), info, 1e-10) << seed;
    EXPECT_NEAR(r.slack, 0.0, 1e-9);
  }
}

TEST(Decompositions, EnergyEntropyMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = energy_entropy(build_joint(pr.system), build_target(pr));
    double energy = 0.0;
    for (std::size_t i = 0; i < t.p.size(); ++i) {
      if (t.p[i] > 0.0) energy -= t.p[i] * std::log(t.q[i]);
    }
    EXPECT_NEAR(r.term("energy"), energy, 1e-10);
    EXPECT_NEAR(r.term("entropy"), testing_support::plain_entropy(t.p), 1e-10);
    EXPECT_NEAR(r.slack, 0.0, 1e-9);
  }
}

TEST(Decompositions, ExpectedFreeEnergyMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = expected_free_energy(build_joint(pr.system), build_target(pr));
    const double efe = -expect_log_cond(t.scope, t.p, t.q, t.x, t.z) +
                       expect_log_cond(t.scope, t.p, t.p, t.z, t.x) - expect_log_cond(t.scope, t.p, t.q, t.z, {});
    EXPECT_NEAR(r.term("efe"), efe, 1e-10);
    EXPECT_NEAR(r.term("input_entropy"), -expect_log_cond(t.scope, t.p, t.p, t.x, {}), 1e-10);
    EXPECT_NEAR(r.slack, 0.0, 1e-9);
  }
}

TEST(Decompositions, ExpectedFreeEnergyWithDeterministicInputs) {
  // A point-mass input has zero entropy, so the expected free energy is the whole joint KL.
  const Scope vars = {{"z", 2, Role::kLatentState, 0}, {"x", 2, Role::kPastInput, 1}};
  const ActualSystem s(vars, {{"z", {}, FactorKind::kParameterized, {0.2, -0.3}, {}, 1.0},
                              {"x", {}, FactorKind::kPointMass, {}, {1}, 1.0}});
  const TargetSpec q{{table_factor("prior", {"z"}, {0.3, 0.7}, true), table_factor("lik", {"z", "x"}, {0.6, 0.4, 0.1, 0.9}, true)}};
  const auto r = expected_free_energy(s, q);
  EXPECT_NEAR(r.term("input_entropy"), 0.0, 1e-15);
  EXPECT_NEAR(r.term("efe"), r.joint_kl, 1e-12);
}

TEST(MissingData, HmmFilterHasUncontrolledFuture) {
  const Problem pr = make_preset("hmm-filter");
  const auto r = bayesian_future_check(pr.system, pr.target, pr.horizon);
  EXPECT_GT(r.term("uncontrolled_future"), 1e-3);
  EXPECT_EQ(r.extra("bayesian_satisfied"), 0.0);
  EXPECT_NEAR(r.slack, 0.0, 1e-9);
}

TEST(MissingData, BayesianFutureMatchGivesZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix rng(seed);
    const auto s = three_step(rng);
    // The target's future model is the actual one; its past and latent models are arbitrary.
    const TargetSpec matched{{table_factor("prior", {"z"}, random_conditional(rng, 1), true),
                              table_factor("lik", {"z", "x1"}, random_conditional(rng, 2), true),
                              actual_copy(s, "x2")}};
    const Horizon h{2, 1, 1};
    const auto r = bayesian_future_check(s, matched, h);
    EXPECT_NEAR(r.term("uncontrolled_future"), 0.0, 1e-12);
    EXPECT_EQ(r.extra("bayesian_satisfied"), 1.0);
    EXPECT_NEAR(r.term("past_vi"), r.joint_kl, 1e-12);

    TargetSpec mismatched = matched;
    mismatched.factors[2] = table_factor("future", {"z", "x1", "x2"}, random_conditional(rng, 4), true);
    const auto m = bayesian_future_check(s, mismatched, h);
    EXPECT_GT(m.term("uncontrolled_future"), 1e-6);
    EXPECT_NEAR(m.slack, 0.0, 1e-9);
  }
}

TEST(PastFuture, SlackIsLatentKlGivenPast) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pr = random_problem(seed);
    const auto t = tables_of(pr);
    const auto r = past_future_split(build_joint(pr.system), build_target(pr));
    const double oracle = expect_log_cond(t.scope, t.p, t.p, t.z, t.past) - expect_log_cond(t.scope, t.p, t.q, t.z, t.past);
    EXPECT_EQ(r.relation, Relation::kLowerBoundsJoint);
    EXPECT_NEAR(r.slack, oracle, 1e-9) << seed;
    EXPECT_GE(r.slack, -1e-12);
    EXPECT_NEAR(r.extra("bound") - r.joint_kl, r.slack, 1e-12);
  }
}

TEST(PastFuture, TightWhenLatentBeliefsMatch) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix rng(seed);
    const auto s = three_step(rng);
    const TargetSpec q{{actual_copy(s, "z"), actual_copy(s, "x1"),
                        table_factor("future", {"z", "x1", "x2"}, random_conditional(rng, 4), true)}};
    const auto r = past_future_split(s, q, Horizon{2, 1, 1}, Assignment{});
    EXPECT_NEAR(r.slack, 0.0, 1e-12);
    EXPECT_GT(r.joint_kl, 0.0);
  }
}

TEST(PastFuture, RealizedPastIsConditionedOn) {
  SplitMix rng(3);
  const auto s = three_step(rng);
  const TargetSpec q{{actual_copy(s, "z"), actual_copy(s, "x1"), actual_copy(s, "x2")}};
  Assignment seen;
  seen.bindings["x1"] = 1;
  const auto r = past_future_split(s, q, Horizon{2, 1, 1}, seen);
  // Conditioning p but not q leaves a positive mismatch on x1.
  EXPECT_GT(r.joint_kl, 0.0);
  // With a faithful target both future terms reduce to I(x2; z | x1).
  EXPECT_GT(r.term("exploration"), 0.0);
  EXPECT_NEAR(r.term("future_input_pref"), r.term("exploration"), 1e-12);
  Assignment bad;
  bad.bindings["z"] = 0;
  EXPECT_THROW(past_future_split(s, q, Horizon{2, 1, 1}, bad), Error);
}

TEST(Divergence, FlaggedNotThrown) {
  const Scope vars = {{"x", 2, Role::kPastInput, 1}};
  const ActualSystem s(vars, {{"x", {}, FactorKind::kParameterized, {0.0, 0.0}, {}, 1.0}});
  const TargetSpec q{{table_factor("prior", {"x"}, {1.0, 0.0}, true)}};
  for (const auto& r : {joint_kl(s, q), decompose_latent_side(s, q), decompose_input_side(s, q),
                        energy_entropy(s, q), expected_free_energy(s, q)}) {
    EXPECT_TRUE(r.divergent) << r.equation;
  }
}

TEST(Report, JsonCarriesTerms) {
  const auto pr = make_preset("bnn-toy");
  const auto j = decompose_latent_side(build_joint(pr.system), build_target(pr)).to_json();
  EXPECT_EQ(j["relation"], "identity");
  EXPECT_TRUE(j["terms"].contains("latent_pref_kl"));
  EXPECT_TRUE(j["terms"].contains("info_bound"));
}

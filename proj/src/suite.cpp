#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>

#include "divmin/families.hpp"
#include "divmin/suite.hpp"

namespace divmin {

namespace {

using Violation = std::function<double(std::uint64_t seed)>;

double below(double value, double floor) { return std::max(0.0, floor - value); }

TabularDistribution joint_of(const Problem& problem) { return build_joint(problem.system); }
UnnormalizedTable target_of(const Problem& problem) { return build_target(problem); }

double identity_violation(const DecompositionReport& r) { return r.divergent ? 0.0 : std::abs(r.slack); }

// Marginal sums of a weight vector over `names`, indexed by ordered_projection.
struct Marginal {
  std::vector<std::size_t> index;
  std::vector<double> mass;
};

Marginal marginal(const Scope& scope, std::span<const double> w, const VarSet& names) {
  Marginal m;
  if (names.empty()) {
    m.index.assign(w.size(), 0);
    m.mass = {0.0};
  } else {
    m.index = ordered_projection(scope, names);
    std::size_t n = 1;
    for (const auto& name : names) n *= static_cast<std::size_t>(scope[static_cast<std::size_t>(index_of(scope, name))].cardinality);
    m.mass.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < w.size(); ++i) m.mass[m.index[i]] += w[i];
  return m;
}

double at(const Marginal& m, std::size_t i) { return m.mass[m.index[i]]; }

VarSet join(VarSet a, const VarSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// q'(w) = q(x<) p(z | x<) q(x> | x<, z): the target whose latent conditional matches p.
UnnormalizedTable matched_latent_target(const TabularDistribution& p, const UnnormalizedTable& q) {
  const auto roles = partition_roles(p.scope());
  const Scope& scope = p.scope();
  const auto qw = q.weights();
  const auto pw = p.probabilities();
  const auto q_past = marginal(scope, qw, roles.past);
  const auto q_past_z = marginal(scope, qw, join(roles.past, roles.latents));
  const auto p_past = marginal(scope, pw, roles.past);
  const auto p_past_z = marginal(scope, pw, join(roles.past, roles.latents));
  double zq = 0.0;
  for (double v : qw) zq += v;
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double pp = at(p_past, i);
    const double qpz = at(q_past_z, i);
    if (pp == 0.0 || qpz == 0.0) continue;
    out[i] = (at(q_past, i) / zq) * (at(p_past_z, i) / pp) * (qw[i] / qpz);
  }
  return UnnormalizedTable(scope, std::move(out));
}

// Random normalized conditional r(z | x), laid out as conditional_of would.
ConditionalTable random_decoder(const TabularDistribution& p, const VarSet& z, const VarSet& x, std::uint64_t seed) {
  ConditionalTable c = conditional_of(UnnormalizedTable::from(p), z, x);
  Rng rng(seed, 17);
  std::size_t nt = 1;
  for (const auto& v : c.targets) nt *= static_cast<std::size_t>(v.cardinality);
  for (std::size_t g = 0; g < c.values.size() / nt; ++g) {
    double total = 0.0;
    for (std::size_t t = 0; t < nt; ++t) total += c.values[g * nt + t] = 0.05 + rng.uniform();
    for (std::size_t t = 0; t < nt; ++t) c.values[g * nt + t] /= total;
  }
  return c;
}

Problem with_random_phi(const Problem& problem, std::uint64_t seed) {
  return with_parameters(problem, random_parameters(problem, seed));
}

double certificate_violation(const Breakdown& b) {
  if (b.divergent) return 0.0;
  if (b.relation == Relation::kIdentity) return std::abs(b.slack);
  return below(b.slack, 0.0);
}

struct Check {
  CheckInfo info;
  int max_seeds;  // 0: all requested seeds
  Violation run;
};

std::vector<Check> build_checks() {
  std::vector<Check> checks;
  auto add = [&](std::string name, std::string eq, double tol, int cap, Violation v) {
    checks.push_back({{std::move(name), std::move(eq), tol}, cap, std::move(v)});
  };

  add("latent_side_identity", "Eq. latent_side", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto p = joint_of(pr);
    const auto r = decompose_latent_side(p, target_of(pr));
    const auto roles = partition_roles(p.scope());
    const double mi = mutual_information(p, roles.inputs, roles.latents);
    return std::max(identity_violation(r), below(mi, r.term("info_bound")));
  });
  add("input_side_identity", "Eq. input_side", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto p = joint_of(pr);
    const auto r = decompose_input_side(p, target_of(pr));
    const auto roles = partition_roles(p.scope());
    const double mi = mutual_information(p, roles.inputs, roles.latents);
    return std::max(identity_violation(r), below(mi, r.term("info_bound_latent")));
  });
  add("missing_data_identity", "Eq. missing_data", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto r = bayesian_future_check(joint_of(pr), target_of(pr));
    if (r.divergent) return 0.0;
    return std::max({std::abs(r.slack), below(r.term("past_vi"), 0.0), below(r.term("uncontrolled_future"), 0.0)});
  });
  add("expected_free_energy_identity", "Eq. expected_free_energy", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    return identity_violation(expected_free_energy(joint_of(pr), target_of(pr)));
  });
  add("energy_entropy_identity", "Eq. energy_entropy", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    return identity_violation(energy_entropy(joint_of(pr), target_of(pr)));
  });
  add("maxentrl_identity", "Eq. maxentrl", 1e-9, 0, [](std::uint64_t s) {
    const auto obj = maxent_rl(random_maxent_problem(s));
    const auto b = obj.evaluate(random_parameters(obj.problem, s));
    return std::max(certificate_violation(b), std::abs(b.diagnostic("entropy_form_residual")));
  });
  add("empowerment_exact_form", "Eq. empowerment", 1e-9, 0, [](std::uint64_t s) {
    const Problem pr = with_random_phi(random_empowerment_problem(s), s);
    const auto learned = empowerment(pr).evaluate(random_parameters(empowerment(pr).problem, s + 1));
    const auto exact = empowerment(pr, {{"predictor", "exact"}}).evaluate();
    // A learned predictor leaves the bound gap between the exact form and the joint KL.
    return std::max({std::abs(learned.diagnostic("exact_form_total") + learned.diagnostic("bound_gap") -
                              learned.joint_kl),
                     below(learned.diagnostic("bound_gap"), 0.0), certificate_violation(learned),
                     std::abs(exact.diagnostic("exact_form_total") - exact.joint_kl),
                     std::abs(exact.diagnostic("bound_gap")), certificate_violation(exact)});
  });
  add("skills_identity", "Eq. skills", 1e-9, 0, [](std::uint64_t s) {
    const auto obj = skill_discovery(random_skill_problem(s));
    const auto b = obj.evaluate(random_parameters(obj.problem, s));
    return std::max(certificate_violation(b), below(b.diagnostic("skill_bound_gap"), 0.0));
  });
  add("past_future_bound", "Eq. past_future", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto r = past_future_split(joint_of(pr), target_of(pr));
    if (r.divergent) return 0.0;
    return std::max(below(r.slack, 0.0), std::abs(r.slack - r.extra("latent_kl_given_past")));
  });
  add("past_future_tightness", "Eq. past_future", 1e-9, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto p = joint_of(pr);
    const auto r = past_future_split(p, matched_latent_target(p, target_of(pr)));
    return r.divergent ? 0.0 : std::abs(r.slack);
  });
  add("infogain_bound", "Eq. infogain", 1e-9, 0, [](std::uint64_t s) {
    const auto obj = info_gain(random_infogain_problem(s));
    const auto b = obj.evaluate(random_parameters(obj.problem, s));
    return std::max(certificate_violation(b), below(b.diagnostic("telescope_gap"), 0.0));
  });
  add("infogain_tightness", "Eq. infogain", 1e-9, 0, [](std::uint64_t s) {
    Problem pr = with_random_phi(random_infogain_problem(s), s);
    pr.target.factors.clear();
    pr.rewards.clear();
    for (const auto& v : pr.system.variables()) pr.target.factors.push_back(actual_copy(pr.system, v.name));
    const auto b = info_gain(pr).evaluate();
    return std::max(std::abs(b.slack), std::abs(b.diagnostic("telescope_gap")));
  });
  add("variational_mi_bound", "Eq. variational_mi", 1e-10, 0, [](std::uint64_t s) {
    const auto pr = random_problem(s);
    const auto p = joint_of(pr);
    const auto roles = partition_roles(p.scope());
    const auto decoder = random_decoder(p, roles.inputs, roles.latents, s);
    const Nats bound = variational_mi_lower_bound(p, decoder, roles.inputs, roles.latents);
    const double mi = mutual_information(p, roles.inputs, roles.latents);
    // Gap against E KL[p(x|z) || r(x|z)], with r embedded as a joint p(z) r(x|z).
    const Scope& scope = p.scope();
    const auto z_idx = roles.latents.empty() ? std::vector<std::size_t>(p.size(), 0)
                                             : ordered_projection(scope, names_of(decoder.given));
    const auto x_idx = ordered_projection(scope, names_of(decoder.targets));
    std::size_t nt = 1;
    for (const auto& v : decoder.targets) nt *= static_cast<std::size_t>(v.cardinality);
    std::vector<double> w(p.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = decoder.values[z_idx[i] * nt + x_idx[i]];
    const Nats gap = expected_conditional_kl(p, UnnormalizedTable(scope, w), roles.inputs, roles.latents);
    if (bound.divergent || gap.divergent) return 0.0;
    return std::max(below(mi - bound.value, -1e-12), std::abs(mi - bound.value - gap.value));
  });
  add("family_certificates", "Eq. joint_kl", 1e-9, 20, [](std::uint64_t s) {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"bnn-toy", "elbo_bnn"},          {"bnn-toy", "map_point_mass"},   {"vae-toy", "amortized_vae"},
        {"chain-mdp", "kl_control"},      {"chain-mdp", "maxent_rl"},      {"dead-action", "empowerment"},
        {"two-room-skills", "skill_discovery"}, {"bandit-infogain", "info_gain"}};
    double worst = 0.0;
    for (const auto& [preset, family] : cases) {
      const auto obj = make_objective(family, make_preset(preset, nlohmann::json::object()));
      worst = std::max(worst, certificate_violation(obj.evaluate(random_parameters(obj.problem, s))));
    }
    return worst;
  });
  add("map_equivalence", "Eq. map", 1e-12, 0, [](std::uint64_t s) {
    const auto base = map_point_mass(make_preset("bnn-toy", nlohmann::json::object()));
    const int card = base.problem.system.variable("w").cardinality;
    const auto obj = map_point_mass(base.problem, {{"selector", {static_cast<int>(s % static_cast<std::uint64_t>(card))}}});
    return std::abs(obj.evaluate().diagnostic("map_form_residual"));
  });
  add("amortized_forms", "Eq. amortized", 1e-9, 20, [](std::uint64_t s) {
    const auto obj = amortized_vae(make_preset("vae-toy", nlohmann::json::object()));
    const auto b = obj.evaluate(random_parameters(obj.problem, s));
    return std::max(certificate_violation(b), std::abs(b.diagnostic("contrastive_residual")));
  });
  add("curiosity_cancellation", "Eq. control", 1e-9, 20, [](std::uint64_t s) {
    const auto obj = kl_control(make_preset("chain-mdp", nlohmann::json::object()), {{"mode", "expected-reward"}});
    const auto a = obj.evaluate(random_parameters(obj.problem, s));
    const auto b = obj.evaluate(random_parameters(obj.problem, s + 1000003));
    return std::max(certificate_violation(a), std::abs(a.diagnostic("curiosity_cancellation") -
                                                        b.diagnostic("curiosity_cancellation")));
  });
  return checks;
}

bool matches(const CheckInfo& info, const std::string& tag) {
  if (tag.empty()) return false;
  return info.name == tag || info.equation == tag || info.equation == "Eq. " + tag;
}

}  // namespace

const std::vector<CheckInfo>& suite_checks() {
  static const std::vector<CheckInfo> infos = [] {
    std::vector<CheckInfo> out;
    for (const auto& c : build_checks()) out.push_back(c.info);
    return out;
  }();
  return infos;
}

unsigned worker_count(unsigned requested) {
  unsigned n = requested;
  if (n == 0) {
    n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DIVMIN_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap > 0) n = std::min(n, static_cast<unsigned>(cap));
    }
  }
  return std::max(1u, n);
}

std::vector<std::string> SuiteResult::failing_equations() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.passed && std::find(out.begin(), out.end(), c.equation) == out.end()) out.push_back(c.equation);
  }
  return out;
}

nlohmann::ordered_json SuiteResult::to_json(const SuiteOptions& options) const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["seeds"] = options.seeds;
  j["tol_scale"] = options.tol_scale;
  j["passed"] = passed;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["equation"] = c.equation;
    e["seeds"] = c.seeds;
    e["max_violation"] = c.max_violation;
    e["tolerance"] = c.tolerance;
    e["worst_seed"] = c.worst_seed;
    e["passed"] = c.passed;
    j["checks"].push_back(std::move(e));
  }
  return j;
}

SuiteResult run_suite(const SuiteOptions& options) {
  if (options.seeds < 1) throw Error(ErrorCode::kInvalidConfig, "--seeds must be at least 1");
  if (!(options.tol_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "--tol-scale must be positive");
  if (!options.inject_fault.empty()) {
    const auto& infos = suite_checks();
    if (std::none_of(infos.begin(), infos.end(), [&](const CheckInfo& i) { return matches(i, options.inject_fault); })) {
      throw Error(ErrorCode::kInvalidConfig, "no check matches fault tag '" + options.inject_fault + "'");
    }
  }
  const auto checks = build_checks();
  // Flatten (check, seed) jobs; each writes its own slot so aggregation is order independent.
  struct Job {
    std::size_t check;
    int seed;
  };
  std::vector<Job> jobs;
  std::vector<std::size_t> first(checks.size());
  for (std::size_t c = 0; c < checks.size(); ++c) {
    first[c] = jobs.size();
    const int n = checks[c].max_seeds > 0 ? std::min(options.seeds, checks[c].max_seeds) : options.seeds;
    for (int s = 0; s < n; ++s) jobs.push_back({c, s});
  }
  std::vector<double> violation(jobs.size(), 0.0);
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        violation[j] = checks[jobs[j].check].run(static_cast<std::uint64_t>(jobs[j].seed));
        if (std::isnan(violation[j])) violation[j] = std::numeric_limits<double>::infinity();
      } catch (const std::exception& e) {
        violation[j] = std::numeric_limits<double>::infinity();
        errors[j] = e.what();
      }
    }
  };
  const unsigned n_workers = std::min<std::size_t>(worker_count(options.threads), jobs.size());
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SuiteResult result;
  for (std::size_t c = 0; c < checks.size(); ++c) {
    CheckResult r;
    r.name = checks[c].info.name;
    r.equation = checks[c].info.equation;
    r.tolerance = checks[c].info.tolerance * options.tol_scale;
    const std::size_t end = c + 1 < checks.size() ? first[c + 1] : jobs.size();
    r.seeds = static_cast<int>(end - first[c]);
    for (std::size_t j = first[c]; j < end; ++j) {
      if (r.worst_seed < 0 || violation[j] > r.max_violation) {
        r.max_violation = violation[j];
        r.worst_seed = jobs[j].seed;
      }
    }
    if (matches(checks[c].info, options.inject_fault)) r.max_violation += 1e-3;
    r.passed = r.max_violation <= r.tolerance;
    result.passed = result.passed && r.passed;
    result.checks.push_back(std::move(r));
  }
  return result;
}

}  // namespace divmin

// Acceptance criteria: one PASS/FAIL line each, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "divmin/experiment.hpp"
#include "divmin/suite.hpp"
#include "support.hpp"

using namespace divmin;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string config_path(const std::string& name) {
  return std::string(DIVMIN_SOURCE_DIR) + "/configs/" + name + ".json";
}

ExperimentConfig config(const std::string& name) { return load_config(config_path(name)); }

std::vector<double> marginal_of(const Objective& obj, const std::string& var) {
  const auto m = marginalize(build_joint(obj.problem.system), {var});
  return {m.probabilities().begin(), m.probabilities().end()};
}

const SuiteResult& suite() {
  static const SuiteResult result = [] {
    SuiteOptions o;
    o.seeds = 100;
    return run_suite(o);
  }();
  return result;
}

void suite_checks(Verdict& v, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    bool found = false;
    for (const auto& c : suite().checks) {
      if (c.name != n) continue;
      found = true;
      v.detail << " " << n << "=" << c.max_violation;
      v.require(c.passed && c.seeds == 100, n);
    }
    v.require(found, "missing check " + n);
  }
}

Verdict identity_suite() {
  Verdict v;
  const auto start = Clock::now();
  SuiteOptions o;
  o.seeds = 100;
  run_suite(o);
  const double elapsed = seconds_since(start);
  suite_checks(v, {"latent_side_identity", "input_side_identity", "missing_data_identity", "maxentrl_identity",
                   "empowerment_exact_form", "skills_identity", "expected_free_energy_identity",
                   "energy_entropy_identity"});
  v.detail << " runtime " << elapsed << " s";
  v.require(elapsed < 10.0, "runtime");
  return v;
}

Verdict bound_suite() {
  Verdict v;
  suite_checks(v, {"past_future_bound", "past_future_tightness", "infogain_bound", "infogain_tightness",
                   "variational_mi_bound"});
  return v;
}

Verdict vi_exactness() {
  Verdict v;
  const auto start = Clock::now();
  const auto cfg = config("bnn-toy");
  const auto run = run_experiment(cfg);
  const double elapsed = seconds_since(start);
  // Exact posterior by enumeration: the data are point masses, so q~(w | data) is q~ on the observed slice.
  const auto& obj = run.trace.objective;
  const auto tuned = obj.at(run.trace.phi);
  const auto p = build_joint(tuned.problem.system);
  const auto q = build_target(tuned.problem);
  const Scope& scope = p.scope();
  const int w_index = index_of(scope, "w");
  std::vector<double> post(2, 0.0), belief(2, 0.0);
  double data_mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto digits = decode(scope, i);
    const std::size_t w = static_cast<std::size_t>(digits[static_cast<std::size_t>(w_index)]);
    belief[w] += p[i];
    digits[static_cast<std::size_t>(w_index)] = 0;
    double slice = 0.0;
    for (int k = 0; k < 2; ++k) {
      digits[static_cast<std::size_t>(w_index)] = k;
      slice += p[encode(scope, digits)];
    }
    if (slice > 0.0 && w == 0) data_mass += slice;
    if (slice > 0.0) post[w] += q[i];
  }
  post = testing_support::normalized(post);
  double kl = 0.0;
  for (std::size_t w = 0; w < 2; ++w) kl += belief[w] * std::log(belief[w] / post[w]);
  const int iters = run.trace.rows.back().iter;
  v.detail << " KL " << kl << ", " << iters << " iterations, " << elapsed << " s";
  v.require(std::abs(data_mass - 1.0) < 1e-12, "data are not point masses");
  v.require(kl < 1e-6, "KL");
  v.require(iters <= 5000, "iterations");
  v.require(elapsed < 5.0, "runtime");
  return v;
}

Verdict map_equivalence() {
  Verdict v;
  double worst = 0.0;
  const Problem pr = make_preset("bnn-toy");
  for (int k = 0; k < 2; ++k) {
    const auto b = map_point_mass(pr, {{"selector", {k}}}).evaluate();
    worst = std::max(worst, std::abs(b.total - b.diagnostic("parameterized_target_form")));
  }
  v.detail << " max difference " << worst;
  v.require(worst < 1e-12, "difference");
  suite_checks(v, {"map_equivalence"});
  return v;
}

Verdict reward_matching() {
  Verdict v;
  const auto run = run_experiment(config("free-choice"));
  const auto tuned = run.trace.objective.at(run.trace.phi);
  for (const std::string x : {"x1", "x2"}) {
    const auto m = marginal_of(tuned, x);
    const double tv = total_variation(m, std::vector<double>{0.25, 0.75});
    v.detail << " TV(" << x << ") " << tv;
    v.require(tv < 1e-3, "TV " + x);
  }
  return v;
}

Verdict curiosity_cancellation() {
  Verdict v;
  double worst_er = 0.0, worst_me = 0.0;
  const auto er = kl_control(make_preset("chain-mdp"), {{"mode", "expected-reward"}});
  const auto me = maxent_rl(make_preset("chain-mdp"));
  for (std::uint64_t s = 0; s < 20; ++s) {
    worst_er = std::max(worst_er, std::abs(er.evaluate(random_parameters(er.problem, s)).diagnostic("curiosity_cancellation")));
    worst_me = std::max(worst_me, std::abs(me.evaluate(random_parameters(me.problem, s)).diagnostic("entropy_form_residual")));
  }
  const auto sb = testing_support::soft_bellman();
  const auto run = run_experiment(config("chain-mdp-maxent"));
  const double gap = std::abs(run.trace.final.total - sb.optimum);
  v.detail << " expected-reward residual " << worst_er << ", maxent residual " << worst_me << ", soft-Bellman gap "
           << gap;
  v.require(worst_er < 1e-9, "expected-reward form");
  v.require(worst_me < 1e-9, "maxent form");
  v.require(gap < 1e-6, "soft-Bellman");
  return v;
}

Verdict empowerment_criterion() {
  Verdict v;
  const auto channel = run_experiment(config("identity-channel"));
  const double bound = channel.trace.final.term("gen_empowerment_bound");
  v.detail << " identity-channel bound " << bound;
  v.require(std::abs(bound - std::log(2.0)) < 1e-3, "ln 2");
  const auto dead = run_experiment(config("dead-action"));
  const auto a = marginal_of(dead.trace.objective.at(dead.trace.phi), "a");
  v.detail << ", dead-action policy (" << a[0] << ", " << a[1] << ", " << a[2] << ")";
  v.require(a[2] < a[0] && a[2] < a[1], "dead action not least likely");
  return v;
}

Verdict info_gain_criterion() {
  Verdict v;
  const auto run = run_experiment(config("bandit-infogain"));
  const auto tuned = run.trace.objective.at(run.trace.phi);
  double eig[2];
  for (int arm = 0; arm < 2; ++arm) {
    Assignment choice;
    choice.bindings["a2"] = arm;
    const auto joint = build_joint(intervene(tuned.problem.system, choice));
    // Expected posterior-to-prior KL over the arm's outcome, enumerated.
    const auto wx = marginalize(joint, {"w", "x2"});
    const auto pw = marginalize(joint, {"w"});
    const auto px = marginalize(joint, {"x2"});
    eig[arm] = 0.0;
    for (std::size_t w = 0; w < 2; ++w)
      for (std::size_t x = 0; x < 2; ++x) {
        const double pj = wx[w * 2 + x];
        if (pj > 0.0) eig[arm] += pj * std::log(pj / (pw[w] * px[x]));
      }
  }
  const double informative = marginal_of(tuned, "a2")[1];
  v.detail << " EIG (" << eig[1] << ", " << eig[0] << "), p(informative) " << informative;
  v.require(std::abs(eig[1] - std::log(2.0)) < 1e-9 && std::abs(eig[0]) < 1e-9, "EIG");
  v.require(std::abs(run.trace.final.diagnostic("eig:a2=1") - eig[1]) < 1e-9, "library EIG");
  v.require(informative >= 0.9, "policy");
  return v;
}

Verdict skills_criterion() {
  Verdict v;
  const auto run = run_experiment(config("two-room-skills"));
  const double bound = run.trace.final.term("skill_info_bound");
  const auto tuned = run.trace.objective.at(run.trace.phi);
  const auto joint = marginalize(build_joint(tuned.problem.system), {"z1", "x3"});
  std::vector<std::vector<double>> terminal;
  for (int z = 0; z < 2; ++z) {
    Assignment a;
    a.bindings["z1"] = z;
    const auto c = condition(joint, a);
    terminal.emplace_back(c.probabilities().begin(), c.probabilities().end());
  }
  const double tv = total_variation(terminal[0], terminal[1]);
  v.detail << " bound " << bound << ", terminal TV " << tv;
  v.require(bound >= std::log(2.0) - 0.05, "bound");
  v.require(tv >= 0.9, "TV");
  return v;
}

Verdict gradients() {
  Verdict v;
  double worst = 0.0, residual = 0.0;
  std::set<std::string> families;
  for (const auto& name : {"bnn-toy", "bnn-map", "vae-toy", "free-choice", "chain-mdp-maxent",
                           "chain-mdp-expected-reward", "identity-channel", "dead-action", "two-room-skills",
                           "bandit-infogain"}) {
    const auto cfg = config(name);
    const auto report = gradcheck(cfg, 5, 1e-5);
    families.insert(cfg.family);
    worst = std::max(worst, report.worst_deviation);
    residual = std::max(residual, report.worst_score_residual);
    v.require(report.passed, name);
  }
  v.detail << " " << families.size() << " families, max relative deviation " << worst << ", score residual "
           << residual;
  v.require(families.size() == 8, "family coverage");
  v.require(worst < 1e-5 && residual < 1e-10, "thresholds");
  return v;
}

Verdict bayesian_assumption() {
  Verdict v;
  const Problem matched = make_preset("hmm-filter", {{"world", "bayesian"}});
  const Problem mismatched = make_preset("hmm-filter");
  const double m = bayesian_future_check(matched.system, matched.target, matched.horizon).term("uncontrolled_future");
  const double mm =
      bayesian_future_check(mismatched.system, mismatched.target, mismatched.horizon).term("uncontrolled_future");
  v.detail << " matched " << m << ", mismatched " << mm;
  v.require(std::abs(m) < 1e-9, "matched");
  v.require(mm > 0.0, "mismatched");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// report.json with the timestamp line removed.
std::string without_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("\"timestamp\"") == std::string::npos && line.find("\"output_dir\"") == std::string::npos) {
      out << line << "\n";
    }
  }
  return out.str();
}

Verdict determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "divmin_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string bin = DIVMIN_BINARY;
  for (int k = 0; k < 2; ++k) {
    const auto out = root / ("verify" + std::to_string(k) + ".json");
    v.require(shell(bin + " verify --seeds 100 --out " + out.string()) == 0, "verify exit");
  }
  v.require(slurp(root / "verify0.json") == slurp(root / "verify1.json"), "verify reports differ");
  int runs = 0;
  for (const auto& entry : fs::directory_iterator(std::string(DIVMIN_SOURCE_DIR) + "/configs")) {
    if (entry.path().extension() != ".json") continue;
    const std::string name = entry.path().stem().string();
    std::string reports[2], traces[2];
    for (int k = 0; k < 2; ++k) {
      const auto dir = root / (name + std::to_string(k));
      v.require(shell(bin + " run " + entry.path().string() + " --out " + dir.string() + " > /dev/null") == 0,
                name + " exit");
      reports[k] = without_timestamp(slurp(dir / "report.json"));
      traces[k] = slurp(dir / "trace.csv");
    }
    v.require(!reports[0].empty() && reports[0] == reports[1], name + " report differs");
    v.require(traces[0] == traces[1], name + " trace differs");
    ++runs;
  }
  v.detail << " verify twice and " << runs << " bundled runs twice";
  v.require(runs > 0, "no bundled configs");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"identity suite", identity_suite},
      {"bound suite", bound_suite},
      {"VI exactness", vi_exactness},
      {"MAP equivalence", map_equivalence},
      {"reward matching", reward_matching},
      {"curiosity cancellation", curiosity_cancellation},
      {"empowerment", empowerment_criterion},
      {"information gain", info_gain_criterion},
      {"skill discovery", skills_criterion},
      {"gradient correctness", gradients},
      {"Bayesian assumption", bayesian_assumption},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail << " exception: " << e.what();
    }
    std::cout << (v.ok ? "PASS " : "FAIL ") << (i + 1) << " " << criteria[i].first << ":" << v.detail.str()
              << std::endl;
    if (!v.ok) ++failed;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}

#include <cmath>
#include <limits>

#include "divmin/objective.hpp"

namespace divmin {

LogPart P(VarSet of, VarSet given) { return {Source::kActual, std::move(of), std::move(given), {}, 1.0}; }
LogPart Q(VarSet of, VarSet given) { return {Source::kTarget, std::move(of), std::move(given), {}, 1.0}; }
LogPart PF(std::vector<std::string> children) {
  return {Source::kActualFactors, {}, {}, std::move(children), 1.0};
}
LogPart TF(std::vector<std::string> labels) {
  return {Source::kTargetFactors, {}, {}, std::move(labels), 1.0};
}
LogPart operator-(LogPart part) {
  part.sign = -part.sign;
  return part;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lookup(const TermList& list, const std::string& name, const char* what) {
  for (const auto& [k, v] : list) {
    if (k == name) return v;
  }
  throw Error(ErrorCode::kInvalidObjective, std::string("no ") + what + " named '" + name + "'");
}

std::size_t bucket_count(const Scope& scope, const VarSet& names) {
  std::size_t n = 1;
  for (const auto& name : names) {
    const int k = index_of(scope, name);
    if (k < 0) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + name + "'");
    n *= static_cast<std::size_t>(scope[static_cast<std::size_t>(k)].cardinality);
  }
  return n;
}

struct Margin {
  std::vector<std::size_t> idx;
  std::vector<double> mass;
};

// Bucket sums of `weights` over `names`; an empty set gives one bucket holding the total.
Margin margin(const Scope& scope, std::span<const double> weights, const VarSet& names) {
  Margin m;
  if (names.empty()) {
    m.idx.assign(weights.size(), 0);
    m.mass = {compensated_total(weights)};
    return m;
  }
  m.idx = ordered_projection(scope, names);
  std::vector<CompensatedSum> acc(bucket_count(scope, names));
  for (std::size_t i = 0; i < weights.size(); ++i) acc[m.idx[i]].add(weights[i]);
  m.mass.resize(acc.size());
  for (std::size_t b = 0; b < acc.size(); ++b) m.mass[b] = acc[b].value();
  return m;
}

VarSet join(VarSet a, const VarSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_disjoint(const LogPart& part) {
  for (const auto& n : part.of) {
    for (const auto& g : part.given) {
      if (n == g) throw Error(ErrorCode::kOverlappingSubsets, "'" + n + "' is on both sides of a conditional");
    }
  }
}

std::vector<double> exp_all(const std::vector<double>& logs) {
  std::vector<double> out(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::exp(logs[i]);
  return out;
}

Problem applied(const Problem& problem, std::span<const double> phi) { return with_parameters(problem, phi); }

}  // namespace

double Breakdown::term(const std::string& name) const { return lookup(terms, name, "term"); }
double Breakdown::diagnostic(const std::string& name) const {
  return lookup(diagnostics, name, "diagnostic");
}
bool Breakdown::has_diagnostic(const std::string& name) const {
  for (const auto& [k, v] : diagnostics) {
    if (k == name) return true;
  }
  return false;
}

bool Breakdown::certified(double tol) const {
  if (divergent || !std::isfinite(slack)) return false;
  if (relation == Relation::kIdentity) return std::abs(slack) <= tol;
  return slack >= -tol;
}

nlohmann::ordered_json Breakdown::to_json() const {
  nlohmann::ordered_json j;
  j["family"] = family;
  j["equation"] = equation;
  j["relation"] = std::string(to_string(relation));
  j["total"] = total;
  j["total_includes_log_partition"] = total_includes_log_partition;
  j["normalized_total"] = normalized_total();
  j["joint_kl"] = joint_kl;
  j["log_partition"] = log_partition;
  j["slack"] = slack;
  j["certified"] = certified();
  j["divergent"] = divergent;
  j["terms"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : terms) j["terms"][k] = v;
  j["diagnostics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : diagnostics) j["diagnostics"][k] = v;
  return j;
}

EvalContext::EvalContext(const Problem& problem, std::span<const double> phi)
    : EvalContext(applied(problem, phi)) {}

EvalContext::EvalContext(const Problem& problem)
    : problem_(problem),
      p_(build_joint(problem_.system)),
      factors_(resolve_target(full_target(problem_), problem_.system.variables(), &problem_.system)),
      log_q_(target_log_weights(factors_, problem_.system.variables())),
      q_(problem_.system.variables(), exp_all(log_q_)) {}

std::vector<double> EvalContext::values(const LogPart& part) const {
  const Scope& scope = p_.scope();
  const std::size_t n = p_.size();
  std::vector<double> h(n, 0.0);
  switch (part.source) {
    case Source::kActual:
    case Source::kTarget: {
      if (part.of.empty()) return h;
      check_disjoint(part);
      const auto weights = part.source == Source::kActual ? p_.probabilities() : q_.weights();
      const Margin ab = margin(scope, weights, join(part.of, part.given));
      const Margin b = margin(scope, weights, part.given);
      for (std::size_t w = 0; w < n; ++w) {
        const double num = ab.mass[ab.idx[w]];
        h[w] = num > 0.0 ? std::log(num / b.mass[b.idx[w]]) : kNegInf;
      }
      return h;
    }
    case Source::kActualFactors:
      for (const auto& child : part.factors) {
        const std::size_t i = problem_.system.index(child);
        VarSet local = problem_.system.factors()[i].parents;
        local.push_back(child);
        const auto idx = ordered_projection(scope, local);
        const auto& table = problem_.system.conditional(i);
        for (std::size_t w = 0; w < n; ++w) {
          const double v = table[idx[w]];
          h[w] += v > 0.0 ? std::log(v) : kNegInf;
        }
      }
      return h;
    case Source::kTargetFactors:
      for (const auto& label : part.factors) {
        const FactorTable* f = nullptr;
        for (const auto& t : factors_) {
          if (t.label == label) f = &t;
        }
        if (f == nullptr) throw Error(ErrorCode::kInvalidObjective, "no target factor labelled '" + label + "'");
        const auto idx = ordered_projection(scope, f->scope);
        for (std::size_t w = 0; w < n; ++w) h[w] += f->log_values[idx[w]];
      }
      return h;
  }
  return h;
}

double EvalContext::expect(const LogPart& part, bool* divergent) const {
  const auto h = values(part);
  CompensatedSum s;
  for (std::size_t w = 0; w < h.size(); ++w) {
    if (p_[w] == 0.0) continue;
    if (!std::isfinite(h[w])) {
      if (divergent) *divergent = true;
      continue;
    }
    s.add(p_[w] * h[w]);
  }
  return part.sign * s.value();
}

double EvalContext::expect(const std::vector<LogPart>& parts, bool* divergent) const {
  double total = 0.0;
  for (const auto& part : parts) total += expect(part, divergent);
  return total;
}

Breakdown Objective::evaluate(std::span<const double> phi, bool with_diagnostics) const {
  const EvalContext ctx(problem, phi);
  Breakdown out;
  out.family = family;
  out.equation = equation;
  out.relation = relation;
  out.total_includes_log_partition = total_includes_log_partition;
  for (const auto& t : terms) {
    const double v = ctx.expect(t.parts, &out.divergent);
    out.terms.emplace_back(t.name, v);
    out.total += t.weight * v;
  }
  const KlResult r = kl(ctx.p(), ctx.q());
  out.joint_kl = r.kl_nats;
  out.log_partition = r.log_partition;
  out.divergent = out.divergent || r.divergent;
  out.slack = out.normalized_total() - out.joint_kl;
  if (diagnostics && with_diagnostics) diagnostics(ctx, out);
  return out;
}

double Objective::value(std::span<const double> phi, bool* divergent) const {
  const EvalContext ctx(problem, phi);
  double total = 0.0;
  for (const auto& t : terms) total += t.weight * ctx.expect(t.parts, divergent);
  return total;
}

Objective Objective::at(std::span<const double> phi) const {
  Objective out = *this;
  out.problem = with_parameters(problem, phi);
  return out;
}

namespace {

// Accumulates sum_w c(w) * d ln f(w) / d logits for a softmax factor with
// local index idx(w), writing into grad[offset ...].
void add_softmax_gradient(const std::vector<double>& coef, const std::vector<std::size_t>& idx,
                          const std::vector<double>& probs, int card, double temperature,
                          std::size_t offset, std::vector<double>& grad) {
  std::vector<CompensatedSum> acc(probs.size());
  for (std::size_t w = 0; w < coef.size(); ++w) {
    if (coef[w] != 0.0) acc[idx[w]].add(coef[w]);
  }
  const auto c = static_cast<std::size_t>(card);
  for (std::size_t base = 0; base < probs.size(); base += c) {
    double slice = 0.0;
    for (std::size_t k = 0; k < c; ++k) slice += acc[base + k].value();
    for (std::size_t k = 0; k < c; ++k) {
      grad[offset + base + k] += (acc[base + k].value() - probs[base + k] * slice) / temperature;
    }
  }
}

struct Layout {
  std::vector<std::size_t> actual_offset;  // per variable; npos when not parameterized
  std::vector<std::size_t> target_offset;  // per model target factor
  std::size_t size = 0;
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

Layout layout_of(const Problem& problem) {
  Layout l;
  for (const auto& f : problem.system.factors()) {
    if (f.kind == FactorKind::kParameterized) {
      l.actual_offset.push_back(l.size);
      l.size += f.values.size();
    } else {
      l.actual_offset.push_back(kNone);
    }
  }
  for (const auto& f : problem.target.factors) {
    if (f.kind == TargetKind::kParameterized) {
      l.target_offset.push_back(l.size);
      l.size += f.values.size();
    } else {
      l.target_offset.push_back(kNone);
    }
  }
  return l;
}

void add_actual_scores(const EvalContext& ctx, const Layout& layout, const std::vector<double>& coef,
                       std::vector<double>& grad) {
  const auto& sys = ctx.problem().system;
  for (std::size_t i = 0; i < sys.factors().size(); ++i) {
    if (layout.actual_offset[i] == kNone) continue;
    const auto& f = sys.factors()[i];
    VarSet local = f.parents;
    local.push_back(f.child);
    add_softmax_gradient(coef, ordered_projection(sys.variables(), local), sys.conditional(i),
                         sys.variables()[i].cardinality, f.temperature, layout.actual_offset[i], grad);
  }
}

}  // namespace

std::vector<double> Objective::score_expectation(std::span<const double> phi) const {
  const EvalContext ctx(problem, phi);
  const Layout layout = layout_of(ctx.problem());
  std::vector<double> grad(layout.size, 0.0);
  std::vector<double> coef(ctx.p().probabilities().begin(), ctx.p().probabilities().end());
  add_actual_scores(ctx, layout, coef, grad);
  return grad;
}

std::vector<double> Objective::gradient(std::span<const double> phi) const {
  const EvalContext ctx(problem, phi);
  const Problem& prob = ctx.problem();
  const Scope& scope = prob.system.variables();
  const auto& p = ctx.p();
  const auto& q = ctx.q();
  const std::size_t n = p.size();
  const Layout layout = layout_of(prob);
  std::vector<double> grad(layout.size, 0.0);

  std::vector<double> H(n, 0.0);
  std::vector<double> shared(n, 0.0);
  std::vector<std::vector<double>> own(ctx.target_factors().size());

  for (const auto& t : terms) {
    for (const auto& part : t.parts) {
      const double w = t.weight * part.sign;
      const auto h = ctx.values(part);
      for (std::size_t i = 0; i < n; ++i) {
        if (p[i] == 0.0) continue;
        if (!std::isfinite(h[i])) {
          throw Error(ErrorCode::kDivergent, "objective is divergent at this parameter vector");
        }
        H[i] += w * h[i];
      }
      if (part.source == Source::kTargetFactors) {
        for (const auto& label : part.factors) {
          for (std::size_t k = 0; k < ctx.target_factors().size(); ++k) {
            if (ctx.target_factors()[k].label != label) continue;
            if (own[k].empty()) own[k].assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) own[k][i] += w * p[i];
          }
        }
      } else if (part.source == Source::kTarget && !part.of.empty()) {
        // d E_p[ln q(a|b)] through q: sum_w G(w) q(w) [p(a,b)/q(a,b) - p(b)/q(b)].
        const VarSet ab_names = join(part.of, part.given);
        const Margin pab = margin(scope, p.probabilities(), ab_names);
        const Margin qab = margin(scope, q.weights(), ab_names);
        const Margin pb = margin(scope, p.probabilities(), part.given);
        const Margin qb = margin(scope, q.weights(), part.given);
        for (std::size_t i = 0; i < n; ++i) {
          if (q[i] == 0.0) continue;
          const double qa = qab.mass[qab.idx[i]];
          const double qg = qb.mass[qb.idx[i]];
          shared[i] += w * q[i] * (pab.mass[pab.idx[i]] / qa - pb.mass[pb.idx[i]] / qg);
        }
      }
    }
  }

  std::vector<double> coef(n);
  for (std::size_t i = 0; i < n; ++i) coef[i] = p[i] * H[i];
  add_actual_scores(ctx, layout, coef, grad);

  const std::size_t model_count = prob.target.factors.size();
  for (std::size_t k = 0; k < ctx.target_factors().size(); ++k) {
    const FactorTable& f = ctx.target_factors()[k];
    std::size_t offset = kNone;
    std::vector<double> probs;
    double temperature = 1.0;
    if (k < model_count && prob.target.factors[k].kind == TargetKind::kParameterized) {
      offset = layout.target_offset[k];
      probs = exp_all(f.log_values);
    } else if (k < model_count && prob.target.factors[k].kind == TargetKind::kActualCopy) {
      const std::size_t i = prob.system.index(f.scope.back());
      offset = layout.actual_offset[i];
      if (offset != kNone) {
        probs = prob.system.conditional(i);
        temperature = prob.system.factors()[i].temperature;
      }
    }
    if (offset == kNone) continue;
    std::vector<double> b = shared;
    if (!own[k].empty()) {
      for (std::size_t i = 0; i < n; ++i) b[i] += own[k][i];
    }
    const int card = scope[prob.system.index(f.scope.back())].cardinality;
    add_softmax_gradient(b, ordered_projection(scope, f.scope), probs, card, temperature, offset, grad);
  }
  return grad;
}

}  // namespace divmin

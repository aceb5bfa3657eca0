#include <algorithm>
#include <cmath>

#include "divmin/prob.hpp"

namespace divmin {

namespace {

void require_names(const Scope& scope, const VarSet& names) {
  for (const auto& n : names) {
    if (index_of(scope, n) < 0) {
      throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + n + "'");
    }
  }
}

void require_disjoint(const VarSet& a, const VarSet& b) {
  for (const auto& n : a) {
    if (std::find(b.begin(), b.end(), n) != b.end()) {
      throw Error(ErrorCode::kOverlappingSubsets, "variable '" + n + "' appears in both sets");
    }
  }
}

void require_same_scope(const Scope& a, const Scope& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kScopeMismatch, "scopes differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].cardinality != b[i].cardinality) {
      throw Error(ErrorCode::kScopeMismatch,
                  "scope mismatch at position " + std::to_string(i) + ": '" + a[i].name +
                      "' vs '" + b[i].name + "'");
    }
  }
}

VarSet join(const VarSet& a, const VarSet& b) {
  VarSet out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Marginal sums of `values` (over `scope`) onto `names`, in scope order.
std::vector<double> marginal_sums(const Scope& scope, std::span<const double> values,
                                  const VarSet& names) {
  if (names.empty()) return {compensated_total(values)};
  const auto proj = projection(scope, names);
  const std::size_t n = outcome_count(subscope(scope, names));
  std::vector<CompensatedSum> acc(n);
  for (std::size_t i = 0; i < values.size(); ++i) acc[proj[i]].add(values[i]);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = acc[k].value();
  return out;
}

std::vector<std::size_t> sub_projection(const Scope& scope, const VarSet& joint,
                                        const VarSet& part) {
  const Scope sub = subscope(scope, joint);
  if (part.empty()) return std::vector<std::size_t>(outcome_count(sub), 0);
  return projection(sub, part);
}

double plogp_sum(std::span<const double> probs) {
  CompensatedSum s;
  for (double p : probs) {
    if (p > 0.0) s.add(-p * std::log(p));
  }
  return s.value();
}

}  // namespace

double entropy(const TabularDistribution& dist, const VarSet& subset) {
  if (subset.empty()) throw Error(ErrorCode::kEmptySubset, "entropy: empty subset");
  require_names(dist.scope(), subset);
  return plogp_sum(marginal_sums(dist.scope(), dist.probabilities(), subset));
}

double conditional_entropy(const TabularDistribution& dist, const VarSet& targets,
                           const VarSet& conditions) {
  if (targets.empty()) throw Error(ErrorCode::kEmptySubset, "conditional_entropy: no targets");
  require_disjoint(targets, conditions);
  require_names(dist.scope(), targets);
  require_names(dist.scope(), conditions);
  const double joint = entropy(dist, join(targets, conditions));
  return conditions.empty() ? joint : joint - entropy(dist, conditions);
}

KlResult kl(const TabularDistribution& p, const UnnormalizedTable& q) {
  require_same_scope(p.scope(), q.scope());
  KlResult out;
  out.log_partition = q.log_partition();
  CompensatedSum s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      out.divergent = true;
      continue;
    }
    s.add(p[i] * (std::log(p[i]) - std::log(q[i]) + out.log_partition));
  }
  out.kl_nats = s.value();
  return out;
}

Nats expected_conditional_kl(const TabularDistribution& p, const UnnormalizedTable& q,
                             const VarSet& a_vars, const VarSet& b_vars) {
  if (a_vars.empty()) throw Error(ErrorCode::kEmptySubset, "expected_conditional_kl: empty a");
  require_same_scope(p.scope(), q.scope());
  require_disjoint(a_vars, b_vars);
  require_names(p.scope(), a_vars);
  require_names(p.scope(), b_vars);
  const VarSet ab = join(a_vars, b_vars);
  const auto p_ab = marginal_sums(p.scope(), p.probabilities(), ab);
  const auto q_ab = marginal_sums(q.scope(), q.weights(), ab);
  const auto p_b = marginal_sums(p.scope(), p.probabilities(), b_vars);
  const auto q_b = marginal_sums(q.scope(), q.weights(), b_vars);
  const auto to_b = sub_projection(p.scope(), ab, b_vars);
  Nats out;
  CompensatedSum s;
  for (std::size_t k = 0; k < p_ab.size(); ++k) {
    if (p_ab[k] == 0.0) continue;
    if (q_ab[k] == 0.0) {
      out.divergent = true;
      continue;
    }
    const std::size_t b = to_b[k];
    s.add(p_ab[k] * (std::log(p_ab[k] / p_b[b]) - std::log(q_ab[k] / q_b[b])));
  }
  out.value = s.value();
  return out;
}

double mutual_information(const TabularDistribution& dist, const VarSet& x_vars,
                          const VarSet& z_vars) {
  if (x_vars.empty() || z_vars.empty()) {
    throw Error(ErrorCode::kEmptySubset, "mutual_information: empty argument");
  }
  require_disjoint(x_vars, z_vars);
  require_names(dist.scope(), x_vars);
  require_names(dist.scope(), z_vars);
  const VarSet xz = join(x_vars, z_vars);
  const auto p_xz = marginal_sums(dist.scope(), dist.probabilities(), xz);
  const auto p_x = marginal_sums(dist.scope(), dist.probabilities(), x_vars);
  const auto p_z = marginal_sums(dist.scope(), dist.probabilities(), z_vars);
  const auto to_x = sub_projection(dist.scope(), xz, x_vars);
  const auto to_z = sub_projection(dist.scope(), xz, z_vars);
  CompensatedSum s;
  for (std::size_t k = 0; k < p_xz.size(); ++k) {
    if (p_xz[k] == 0.0) continue;
    s.add(p_xz[k] * std::log(p_xz[k] / (p_x[to_x[k]] * p_z[to_z[k]])));
  }
  return s.value();
}

Nats variational_mi_lower_bound(const TabularDistribution& p,
                                const ConditionalTable& q_conditional, const VarSet& x_vars,
                                const VarSet& z_vars) {
  if (x_vars.empty() || z_vars.empty()) {
    throw Error(ErrorCode::kEmptySubset, "variational bound: empty argument");
  }
  require_disjoint(x_vars, z_vars);
  require_names(p.scope(), x_vars);
  require_names(p.scope(), z_vars);
  auto same_set = [](const Scope& s, const VarSet& names) {
    if (s.size() != names.size()) return false;
    for (const auto& v : s) {
      if (std::find(names.begin(), names.end(), v.name) == names.end()) return false;
    }
    return true;
  };
  if (!same_set(q_conditional.targets, x_vars) || !same_set(q_conditional.given, z_vars)) {
    throw Error(ErrorCode::kScopeMismatch, "decoder scope does not match x_vars | z_vars");
  }
  const std::size_t n_targets = outcome_count(q_conditional.targets);
  const std::size_t n_given = q_conditional.given.empty() ? 1 : outcome_count(q_conditional.given);
  if (q_conditional.values.size() != n_targets * n_given) {
    throw Error(ErrorCode::kInvalidTable, "decoder table has the wrong size");
  }
  for (std::size_t g = 0; g < n_given; ++g) {
    CompensatedSum s;
    for (std::size_t t = 0; t < n_targets; ++t) {
      const double v = q_conditional.values[g * n_targets + t];
      if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidTable, "decoder entries must be >= 0");
      s.add(v);
    }
    if (std::abs(s.value() - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidTable,
                  "decoder slice " + std::to_string(g) + " is not normalized");
    }
  }

  const VarSet xz = join(x_vars, z_vars);
  const Scope xz_scope = subscope(p.scope(), xz);
  const auto p_xz = marginal_sums(p.scope(), p.probabilities(), xz);
  const auto p_x = marginal_sums(p.scope(), p.probabilities(), x_vars);
  const auto to_x = sub_projection(p.scope(), xz, x_vars);

  // Map each (x, z) outcome onto the decoder's own variable order.
  std::vector<int> t_pos, g_pos;
  for (const auto& v : q_conditional.targets) t_pos.push_back(index_of(xz_scope, v.name));
  for (const auto& v : q_conditional.given) g_pos.push_back(index_of(xz_scope, v.name));
  Nats out;
  CompensatedSum s;
  std::vector<int> t_digits(t_pos.size()), g_digits(g_pos.size());
  for (std::size_t k = 0; k < p_xz.size(); ++k) {
    if (p_xz[k] == 0.0) continue;
    const auto digits = decode(xz_scope, k);
    for (std::size_t i = 0; i < t_pos.size(); ++i) t_digits[i] = digits[t_pos[i]];
    for (std::size_t i = 0; i < g_pos.size(); ++i) g_digits[i] = digits[g_pos[i]];
    const std::size_t g = encode(q_conditional.given, g_digits);
    const std::size_t t = encode(q_conditional.targets, t_digits);
    const double qv = q_conditional.values[g * n_targets + t];
    if (qv == 0.0) {
      out.divergent = true;
      continue;
    }
    s.add(p_xz[k] * (std::log(qv) - std::log(p_x[to_x[k]])));
  }
  out.value = s.value();
  return out;
}

Nats expected_log_conditional(const TabularDistribution& p, const UnnormalizedTable& d,
                              const VarSet& of, const VarSet& given) {
  if (of.empty()) return {};
  require_same_scope(p.scope(), d.scope());
  require_disjoint(of, given);
  const VarSet ab = join(of, given);
  const auto p_ab = marginal_sums(p.scope(), p.probabilities(), ab);
  const auto d_ab = marginal_sums(d.scope(), d.weights(), ab);
  const auto d_b = marginal_sums(d.scope(), d.weights(), given);
  const auto to_b = sub_projection(p.scope(), ab, given);
  Nats out;
  CompensatedSum s;
  for (std::size_t k = 0; k < p_ab.size(); ++k) {
    if (p_ab[k] == 0.0) continue;
    if (d_ab[k] == 0.0) {
      out.divergent = true;
      continue;
    }
    s.add(p_ab[k] * std::log(d_ab[k] / d_b[to_b[k]]));
  }
  out.value = s.value();
  return out;
}

ConditionalTable conditional_of(const UnnormalizedTable& d, const VarSet& targets,
                                const VarSet& given) {
  if (targets.empty()) throw Error(ErrorCode::kEmptySubset, "conditional_of: no targets");
  require_disjoint(targets, given);
  ConditionalTable out;
  out.targets = subscope(d.scope(), targets);
  out.given = given.empty() ? Scope{} : subscope(d.scope(), given);
  const std::size_t nt = outcome_count(out.targets);
  const std::size_t ng = out.given.empty() ? 1 : outcome_count(out.given);
  out.values.assign(nt * ng, 0.0);
  const VarSet ab = join(targets, given);
  const Scope ab_scope = subscope(d.scope(), ab);
  const auto d_ab = marginal_sums(d.scope(), d.weights(), ab);
  std::vector<int> t_pos, g_pos;
  for (const auto& v : out.targets) t_pos.push_back(index_of(ab_scope, v.name));
  for (const auto& v : out.given) g_pos.push_back(index_of(ab_scope, v.name));
  std::vector<int> td(t_pos.size()), gd(g_pos.size());
  for (std::size_t k = 0; k < d_ab.size(); ++k) {
    const auto digits = decode(ab_scope, k);
    for (std::size_t i = 0; i < t_pos.size(); ++i) td[i] = digits[t_pos[i]];
    for (std::size_t i = 0; i < g_pos.size(); ++i) gd[i] = digits[g_pos[i]];
    out.values[encode(out.given, gd) * nt + encode(out.targets, td)] = d_ab[k];
  }
  for (std::size_t g = 0; g < ng; ++g) {
    double total = 0.0;
    for (std::size_t t = 0; t < nt; ++t) total += out.values[g * nt + t];
    for (std::size_t t = 0; t < nt; ++t) {
      out.values[g * nt + t] = total > 0.0 ? out.values[g * nt + t] / total
                                           : 1.0 / static_cast<double>(nt);
    }
  }
  return out;
}

}  // namespace divmin

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <locale>
#include <sstream>

#include "divmin/optim.hpp"

namespace divmin {

namespace {

double norm2(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x * x);
  return std::sqrt(s.value());
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double checked_value(const Objective& objective, std::span<const double> phi) {
  bool divergent = false;
  const double v = objective.value(phi, &divergent);
  if (divergent || !std::isfinite(v)) throw Error(ErrorCode::kDivergent, "objective diverges at a perturbed point");
  return v;
}

TraceRow make_row(const Objective& objective, int iter, std::span<const double> phi, double grad_norm,
                  double step) {
  const Breakdown b = objective.evaluate(phi, false);
  return {iter, hash_parameters(phi), b.total, b.terms, grad_norm, b.joint_kl, step};
}

}  // namespace

std::string_view to_string(Termination reason) {
  switch (reason) {
    case Termination::kGradientTol: return "gradient-tol";
    case Termination::kMaxIters: return "max-iters";
    case Termination::kDivergence: return "divergence";
    case Termination::kNoDecrease: return "no-decrease";
    case Termination::kExhaustive: return "exhaustive";
  }
  return "max-iters";
}

GradientReport analytic_gradient(const Objective& objective, std::span<const double> phi) {
  GradientReport r{objective.gradient(phi), "analytic", 0.0};
  r.max_abs = max_abs(r.gradient);
  return r;
}

GradientReport finite_difference_gradient(const Objective& objective, std::span<const double> phi, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidParameters, "finite-difference step must be positive");
  std::vector<double> x(phi.begin(), phi.end());
  GradientReport r{std::vector<double>(x.size()), "central-difference", 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = checked_value(objective, x);
    x[i] = saved - h;
    const double down = checked_value(objective, x);
    x[i] = saved;
    r.gradient[i] = (up - down) / (2.0 * h);
  }
  r.max_abs = max_abs(r.gradient);
  return r;
}

double score_residual(const Objective& objective, std::span<const double> phi) {
  return norm2(objective.score_expectation(phi));
}

GradientCheck check_gradient(const Objective& objective, std::span<const double> phi, double h) {
  const auto a = analytic_gradient(objective, phi);
  const auto fd = finite_difference_gradient(objective, phi, h);
  const auto coords = objective.parameter_vector().coords;
  GradientCheck out;
  for (std::size_t i = 0; i < a.gradient.size(); ++i) {
    const double dev = std::abs(a.gradient[i] - fd.gradient[i]) / std::max(1.0, std::abs(a.gradient[i]));
    if (dev > out.max_relative_deviation || i == 0) {
      out.max_relative_deviation = std::max(out.max_relative_deviation, dev);
      out.worst_coordinate = i;
      const auto& c = coords[i];
      out.worst_name = c.factor + "[" + std::to_string(c.slice) + "," + std::to_string(c.outcome) + "]";
    }
  }
  out.score_residual = score_residual(objective, phi);
  return out;
}

std::uint64_t hash_parameters(std::span<const double> phi) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : phi) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void OptimTrace::write_csv(std::ostream& os) const {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "iter,total";
  if (!rows.empty()) {
    for (const auto& [name, v] : rows.front().terms) out << ',' << name;
  }
  out << ",grad_norm,joint_kl,step,phi_hash\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.iter << ',' << r.total;
    for (const auto& [name, v] : r.terms) out << ',' << v;
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << r.phi_hash;
    out << ',' << r.grad_norm << ',' << r.joint_kl << ',' << r.step << ',' << hex.str() << '\n';
  }
  os << out.str();
}

OptimTrace minimize(const Objective& objective, std::vector<double> phi, const OptimOptions& options) {
  if (!(options.step > 0.0)) throw Error(ErrorCode::kInvalidParameters, "step must be positive");
  if (options.max_iters < 0) throw Error(ErrorCode::kInvalidParameters, "max_iters must be non-negative");
  OptimTrace trace(objective);
  bool divergent = false;
  double f = objective.value(phi, &divergent);
  if (divergent || !std::isfinite(f)) throw Error(ErrorCode::kDivergent, "objective is not finite at the start point");

  double step = options.step;
  double last_step = 0.0;
  trace.reason = Termination::kMaxIters;
  for (int iter = 0;; ++iter) {
    std::vector<double> g;
    try {
      g = objective.gradient(phi);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDivergent) throw;
      trace.reason = Termination::kDivergence;
      break;
    }
    const double gn = norm2(g);
    trace.rows.push_back(make_row(objective, iter, phi, gn, last_step));
    if (!std::isfinite(gn)) {
      trace.reason = Termination::kDivergence;
      break;
    }
    if (gn < options.grad_tol) {
      trace.reason = Termination::kGradientTol;
      break;
    }
    if (iter >= options.max_iters) break;

    bool accepted = false;
    std::vector<double> candidate(phi.size());
    for (int halving = 0; halving <= options.max_halvings; ++halving) {
      for (std::size_t i = 0; i < phi.size(); ++i) candidate[i] = phi[i] - step * g[i];
      bool div = false;
      const double fc = objective.value(candidate, &div);
      if (!div && std::isfinite(fc) && fc < f) {
        phi.swap(candidate);
        f = fc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trace.reason = Termination::kNoDecrease;
      break;
    }
    last_step = step;
    // Let the step recover after a run of short ones.
    step = std::min(options.step, 2.0 * step);
  }
  trace.phi = std::move(phi);
  trace.final = objective.evaluate(trace.phi);
  return trace;
}

namespace {

struct SearchSlot {
  std::size_t factor = 0;  // index into system.factors()
  int cardinality = 0;
};

}  // namespace

OptimTrace search_point_masses(const Objective& objective, std::span<const double> phi) {
  const ActualSystem& sys = objective.problem.system;
  std::vector<SearchSlot> slots;
  double combos = 1.0;
  for (std::size_t i = 0; i < sys.factors().size(); ++i) {
    const auto& f = sys.factors()[i];
    if (f.kind != FactorKind::kPointMass) continue;
    const int card = sys.variables()[i].cardinality;
    for (std::size_t s = 0; s < f.selector.size(); ++s) {
      slots.push_back({i, card});
      combos *= card;
    }
  }
  if (combos > static_cast<double>(1 << 20)) {
    throw Error(ErrorCode::kInvalidObjective, "point-mass search space is too large to enumerate");
  }
  OptimTrace trace(objective);
  trace.reason = Termination::kExhaustive;
  trace.phi.assign(phi.begin(), phi.end());
  std::vector<int> digits(slots.size(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_digits = digits;
  for (;;) {
    std::vector<FactorSpec> factors = sys.factors();
    std::vector<std::size_t> cursor(factors.size(), 0);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      auto& f = factors[slots[k].factor];
      f.selector[cursor[slots[k].factor]++] = digits[k];
    }
    Objective candidate = objective;
    candidate.problem.system = ActualSystem(sys.variables(), std::move(factors));
    const Breakdown b = candidate.evaluate(phi, false);
    const double total = b.divergent ? std::numeric_limits<double>::infinity() : b.total;
    trace.scan.push_back({digits, total, b.joint_kl});
    if (total < best) {
      best = total;
      best_digits = digits;
      trace.objective = std::move(candidate);
    }
    std::size_t k = 0;
    for (; k < digits.size(); ++k) {
      if (++digits[k] < slots[k].cardinality) break;
      digits[k] = 0;
    }
    if (k == digits.size()) break;
  }
  if (!std::isfinite(best)) trace.reason = Termination::kDivergence;
  trace.rows.push_back(make_row(trace.objective, 0, phi, 0.0, 0.0));
  trace.final = trace.objective.evaluate(phi);
  return trace;
}

OptimTrace optimize(const Objective& objective, std::vector<double> phi0, const OptimOptions& options) {
  bool has_point_mass = false;
  for (const auto& f : objective.problem.system.factors()) has_point_mass = has_point_mass || f.kind == FactorKind::kPointMass;
  if (!objective.search_point_masses || !has_point_mass) return minimize(objective, std::move(phi0), options);
  OptimTrace scan = search_point_masses(objective, phi0);
  if (phi0.empty() || scan.reason == Termination::kDivergence) return scan;
  OptimTrace trace = minimize(scan.objective, std::move(phi0), options);
  trace.scan = std::move(scan.scan);
  return trace;
}

OptimTrace anneal(const Objective& objective, std::vector<double> phi0, const VarSet& factors,
                  const std::vector<double>& temperatures, const OptimOptions& options) {
  if (temperatures.empty()) throw Error(ErrorCode::kInvalidParameters, "annealing needs at least one temperature");
  for (const auto& name : factors) {
    if (objective.problem.system.factor(name).kind != FactorKind::kParameterized) {
      throw Error(ErrorCode::kInvalidParameters, "annealed factor '" + name + "' is not parameterized");
    }
  }
  OptimTrace out(objective);
  int offset = 0;
  for (double t : temperatures) {
    if (!(t > 0.0)) throw Error(ErrorCode::kInvalidParameters, "temperatures must be positive");
    Objective tempered = objective;
    for (const auto& name : factors) {
      FactorSpec f = tempered.problem.system.factor(name);
      f.temperature = t;
      tempered.problem.system = tempered.problem.system.with_factor(f);
    }
    OptimTrace stage = minimize(tempered, phi0, options);
    for (auto& row : stage.rows) {
      row.iter += offset;
      out.rows.push_back(std::move(row));
    }
    offset = out.rows.empty() ? 0 : out.rows.back().iter + 1;
    phi0 = stage.phi;
    out.objective = std::move(stage.objective);
    out.reason = stage.reason;
    out.final = std::move(stage.final);
    if (out.reason == Termination::kDivergence) break;
  }
  out.phi = std::move(phi0);
  return out;
}

}  // namespace divmin

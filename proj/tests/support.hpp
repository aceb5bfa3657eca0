#pragma once

// Small helpers shared by the test binaries. The generator is deliberately
// independent of the library's Rng so property tests do not share its bugs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "divmin/prob.hpp"

namespace testing_support {

struct SplitMix {
  std::uint64_t state;

  explicit SplitMix(std::uint64_t seed) : state(seed * 0x9E3779B97F4A7C15ULL + 12345) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
};

inline divmin::Scope binary_scope(int n) {
  divmin::Scope s;
  for (int i = 0; i < n; ++i) s.push_back({"v" + std::to_string(i), 2, divmin::Role::kLatentState, 0});
  return s;
}

inline std::vector<double> random_weights(SplitMix& rng, std::size_t n, double floor = 0.02) {
  std::vector<double> w(n);
  for (auto& v : w) v = floor + rng.uniform();
  return w;
}

inline std::vector<double> normalized(std::vector<double> w) {
  double t = 0.0;
  for (double v : w) t += v;
  for (auto& v : w) v /= t;
  return w;
}

inline divmin::TabularDistribution random_distribution(SplitMix& rng, const divmin::Scope& scope) {
  return divmin::TabularDistribution(scope, normalized(random_weights(rng, divmin::outcome_count(scope))));
}

// H of a plain probability vector, written out directly.
inline double plain_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// Soft-Bellman recursion on the default chain (5 states, intended 0.8, reward 1 at the right end).
struct SoftBellman {
  std::vector<std::vector<double>> policy;  // policy[t][x * 2 + a], t = 0, 1
  double optimum;
};

inline SoftBellman soft_bellman() {
  const int n = 5;
  auto next = [&](int x, int a, int y) {
    const int intended = std::clamp(x + (a == 0 ? -1 : 1), 0, n - 1);
    return (y == intended ? 0.8 : 0.0) + (y == x ? 0.2 : 0.0);
  };
  std::vector<double> v(n, 0.0);
  v[n - 1] = 1.0;  // the a3 term is minimized at the prior and adds nothing
  SoftBellman out;
  out.policy.resize(2);
  for (int t = 1; t >= 0; --t) {
    std::vector<double> nv(n);
    out.policy[static_cast<std::size_t>(t)].resize(2 * n);
    for (int x = 0; x < n; ++x) {
      double q[2];
      for (int a = 0; a < 2; ++a) {
        q[a] = 0.0;
        for (int y = 0; y < n; ++y) q[a] += next(x, a, y) * v[static_cast<std::size_t>(y)];
      }
      nv[static_cast<std::size_t>(x)] = std::log(0.5 * std::exp(q[0]) + 0.5 * std::exp(q[1]));
      for (int a = 0; a < 2; ++a) {
        out.policy[static_cast<std::size_t>(t)][static_cast<std::size_t>(x * 2 + a)] =
            std::exp(q[a]) / (std::exp(q[0]) + std::exp(q[1]));
      }
    }
    v = nv;
  }
  double start = 0.0;
  for (double x : v) start += x / n;
  out.optimum = -start;
  return out;
}

}  // namespace testing_support

#pragma once

// Choosing the HO block: its length h from the budget-constrained variance
// bound, and its start j from a sampling policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rlr/chain.hpp"
#include "rlr/errors.hpp"
#include "rlr/rng.hpp"

namespace rlr {

/// Per-step deviation magnitudes: V_h for FO/HO steps, V_z for ZO steps.
struct VarianceProfile {
  double V_h = 0.01;
  double V_z = 1.0;

  void validate() const {
    if (!(V_h >= 0.0 && V_h < V_z)) throw ContractViolation("variance profile: need 0 <= V_h < V_z");
  }
  /// The solution formula assumes V_h << V_z.
  bool weakly_separated() const { return V_h > 0.5 * V_z; }
};

/// Quadratic upper bound on estimator variance in n = h + 1 low-variance steps:
/// Q = a n^2 + b n + c, the expansion of (n V_h + (T - n) V_z)^2.
struct QuadraticBound {
  double a, b, c;

  double operator()(int h) const {
    const double n = h + 1.0;
    return a * n * n + b * n + c;
  }
  /// Minimiser in h of the quadratic itself: -b / 2a - 1.
  double vertex_h() const { return -b / (2.0 * a) - 1.0; }
};

inline QuadraticBound quadratic_bound(int T, const VarianceProfile& vp) {
  const double d = vp.V_z - vp.V_h;
  return {d * d, -2.0 * T * vp.V_z * d, double(T) * T * vp.V_z * vp.V_z};
}

inline double variance_bound_q(int h, int T, const VarianceProfile& vp) {
  if (h < 0 || h > T - 1) throw ContractViolation("variance_bound_q: need 0 <= h <= T-1");
  return quadratic_bound(T, vp)(h);
}

enum class Binding { Budget, Variance, Degenerate };

inline const char* to_string(Binding b) {
  switch (b) {
    case Binding::Budget: return "budget";
    case Binding::Variance: return "variance";
    case Binding::Degenerate: return "degenerate";
  }
  return "?";
}

struct HStar {
  int h = 0;
  Binding binding = Binding::Budget;
  double budget_term = 0.0;    // (B - B_z (T-1)) / (B_h - B_z), before flooring
  double variance_term = 0.0;  // T V_z / (2 (V_z - V_h)) - 1, before flooring
  double vertex = 0.0;         // vertex of Q, reported alongside
  std::vector<std::string> warnings;
};

/// Integer part with a 1e-9 nudge, so values that are mathematically integral
/// but land just below in floating point floor to that integer.
inline long long nudged_floor(double x) { return static_cast<long long>(std::floor(x + 1e-9)); }

inline HStar solve_h_star(const BudgetModel& budget, int T, const VarianceProfile& vp) {
  budget.validate(T);
  vp.validate();
  HStar out;
  out.budget_term = (budget.B - budget.B_z * (T - 1)) / (budget.B_h - budget.B_z);
  out.variance_term = T * vp.V_z / (2.0 * (vp.V_z - vp.V_h)) - 1.0;
  out.vertex = quadratic_bound(T, vp).vertex_h();
  const long long hb = nudged_floor(out.budget_term);
  const long long hv = nudged_floor(out.variance_term);
  long long h = std::min(hb, hv);
  out.binding = hb <= hv ? Binding::Budget : Binding::Variance;
  if (vp.weakly_separated())
    out.warnings.push_back("V_h > 0.5 V_z: the closed-form solution assumes V_h << V_z");
  if (h <= 0) {
    out.warnings.push_back("h* formula gave " + std::to_string(h) + "; using h = 0");
    out.binding = Binding::Degenerate;
    h = 0;
  }
  out.h = static_cast<int>(std::min<long long>(h, T - 1));
  return out;
}

// ---------------------------------------------------------------------------
// j sampling
// ---------------------------------------------------------------------------

enum class JPolicy { Uniform, SoftmaxGradNorm, Windowed };

inline const char* to_string(JPolicy p) {
  switch (p) {
    case JPolicy::Uniform: return "uniform";
    case JPolicy::SoftmaxGradNorm: return "softmax-gradnorm";
    case JPolicy::Windowed: return "windowed";
  }
  return "?";
}

struct JSampler {
  JPolicy policy = JPolicy::Uniform;
  std::vector<double> norm_history;  // entry i is the norm estimate for step i + 2
  double temperature = 1.0;
  int window_a = 0;
  int window_b = 0;

  void validate(int T, int h) const {
    if (!(temperature > 0.0)) throw ConfigError("j sampler: temperature must be positive");
    if (policy == JPolicy::Windowed) {
      const int a = window_a, b = window_b;
      if (!(1 < a && a < b && b < T - h && b - a > h))
        throw ConfigError("j sampler: window needs 1 < a < b < T-h and b-a > h (a=" +
                          std::to_string(a) + ", b=" + std::to_string(b) +
                          ", T=" + std::to_string(T) + ", h=" + std::to_string(h) + ")");
    }
  }
};

/// softmax(||g_2|| / tau, ..., ||g_{T-h}|| / tau); entry k is the probability of j = k + 2.
inline std::vector<double> build_j_weights(const std::vector<double>& norm_history, int T, int h,
                                           double temperature = 1.0) {
  const int support = T - h - 1;
  if (support < 1) throw ConfigError("build_j_weights: empty support {2..T-h}");
  if (static_cast<int>(norm_history.size()) < support)
    throw ContractViolation("build_j_weights: norm history shorter than T-h-1");
  if (!(temperature > 0.0)) throw ContractViolation("build_j_weights: temperature must be positive");
  double hi = 0.0;
  for (int k = 0; k < support; ++k) {
    const double v = norm_history[static_cast<std::size_t>(k)];
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ContractViolation("build_j_weights: norms must be finite and non-negative");
    hi = std::max(hi, v);
  }
  std::vector<double> w(static_cast<std::size_t>(support));
  double total = 0.0;
  for (int k = 0; k < support; ++k) {
    w[static_cast<std::size_t>(k)] =
        std::exp((norm_history[static_cast<std::size_t>(k)] - hi) / temperature);
    total += w[static_cast<std::size_t>(k)];
  }
  for (double& x : w) x /= total;
  return w;
}

inline int sample_j(const JSampler& sampler, int h, int T, std::uint64_t seed) {
  sampler.validate(T, h);
  Engine eng = make_engine(seed, 0, stream::kJ);
  switch (sampler.policy) {
    case JPolicy::Uniform: {
      if (T - h < 2) throw ConfigError("sample_j: empty support {2..T-h}");
      return std::uniform_int_distribution<int>(2, T - h)(eng);
    }
    case JPolicy::SoftmaxGradNorm: {
      const std::vector<double> w = build_j_weights(sampler.norm_history, T, h, sampler.temperature);
      return 2 + std::discrete_distribution<int>(w.begin(), w.end())(eng);
    }
    case JPolicy::Windowed: {
      const int hi = std::min(sampler.window_b, T - h);
      return std::uniform_int_distribution<int>(sampler.window_a, hi)(eng);
    }
  }
  throw ConfigError("sample_j: unknown policy");
}

}  // namespace rlr

#pragma once

// Recursive stochastic chain x_T -> x_{T-1} -> ... -> x_0.
//
// Step t maps x_t to x_{t-1}. Additive steps compute phi(x_t; theta) + z_t
// with z_t ~ N(0, sigma_t^2 I); ZO steps compute phi(x_t; theta + z_t) with
// z_t ~ N(0, sigma_param^2 I_p) and no latent noise.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlr/diffcore.hpp"
#include "rlr/errors.hpp"
#include "rlr/rng.hpp"

namespace rlr {

inline constexpr double kDivergenceNorm = 1e12;

struct ChainSpec {
  int T = 3;
  std::vector<double> sigma;  // sigma[t-1] is the std-dev of z_t
  double sigma_param = 1e-2;
  Backbone backbone;
  RewardFn reward;
  std::optional<Vector> fixed_x_T;  // nullopt: x_T ~ N(0, I)

  double sigma_at(int t) const { return sigma.at(static_cast<std::size_t>(t - 1)); }
  int dim() const { return backbone.latent_dim; }

  void validate() const {
    if (T < 3) throw ContractViolation("chain: T must be at least 3");
    if (static_cast<int>(sigma.size()) != T)
      throw ContractViolation("chain: sigma schedule must have T entries");
    for (double s : sigma)
      if (!(s > 0.0) || !std::isfinite(s)) throw ContractViolation("chain: sigma_t must be > 0");
    if (!(sigma_param > 0.0)) throw ContractViolation("chain: sigma_param must be > 0");
    backbone.validate();
    if (backbone.time_conditioning && backbone.horizon != T)
      throw ContractViolation("chain: time-conditioned backbone horizon must equal T");
    if (reward.dim() != backbone.latent_dim)
      throw ContractViolation("chain: reward dimension does not match latent dimension");
    if (fixed_x_T && fixed_x_T->size() != backbone.latent_dim)
      throw ContractViolation("chain: fixed x_T has wrong dimension");
  }

  /// Builds and validates; the backbone horizon is set to T.
  static ChainSpec make(int T, std::vector<double> sigma, double sigma_param, Backbone bb,
                        RewardFn reward, std::optional<Vector> fixed_x_T = std::nullopt) {
    bb.horizon = T;
    ChainSpec s{T, std::move(sigma), sigma_param, bb, std::move(reward), std::move(fixed_x_T)};
    s.validate();
    return s;
  }
};

inline std::vector<double> constant_schedule(int T, double sigma = 0.1) {
  return std::vector<double>(static_cast<std::size_t>(T), sigma);
}

/// Geometric decay; sigma_T = start at the noisy end, sigma_1 = end.
inline std::vector<double> geometric_schedule(int T, double start = 0.5, double end = 0.01) {
  std::vector<double> s(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 1.0 : double(t - 1) / double(T - 1);
    s[static_cast<std::size_t>(t - 1)] = end * std::pow(start / end, frac);
  }
  return s;
}

/// sigma_t = sqrt(beta_t) with beta linear from beta_start at t = 1 to
/// beta_end at t = T, as in DDPM-style samplers.
inline std::vector<double> linear_beta_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02) {
  std::vector<double> s(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 1.0 : double(t - 1) / double(T - 1);
    s[static_cast<std::size_t>(t - 1)] = std::sqrt(beta_start + (beta_end - beta_start) * frac);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

enum class StepMode : std::uint8_t {
  PathwiseFO,  // additive noise, differentiated through
  HoScore,     // additive noise, score taken at this step's noise
  HoPath,      // additive noise inside the HO block, differentiated through
  ZO,          // parameter perturbation, score taken
  ScoreRL,     // additive noise, per-step score with a one-step Jacobian
};

inline char mode_letter(StepMode m) {
  switch (m) {
    case StepMode::PathwiseFO: return 'F';
    case StepMode::HoScore: return 'S';
    case StepMode::HoPath: return 'P';
    case StepMode::ZO: return 'Z';
    case StepMode::ScoreRL: return 'R';
  }
  return '?';
}

inline bool is_additive(StepMode m) { return m != StepMode::ZO; }

struct EstimatorPlan {
  std::vector<StepMode> modes;  // modes[t-1] is step t
  int h = 0;
  int j = 0;  // 0 when the plan has no HO block

  int T() const { return static_cast<int>(modes.size()); }
  StepMode mode(int t) const { return modes.at(static_cast<std::size_t>(t - 1)); }
  bool has_ho_block() const { return j > 0; }

  /// Mode string from step 1 to step T, e.g. "FZSPP", plus (j,h) when set.
  std::string digest() const {
    std::string s;
    s.reserve(modes.size() + 16);
    for (StepMode m : modes) s.push_back(mode_letter(m));
    if (has_ho_block()) s += "/j" + std::to_string(j) + "h" + std::to_string(h);
    return s;
  }
};

/// FO at step 1, HO block [j, j+h] (score at j), ZO elsewhere. Not validated.
inline EstimatorPlan rlr_plan(int T, int j, int h) {
  EstimatorPlan p{std::vector<StepMode>(static_cast<std::size_t>(T), StepMode::ZO), h, j};
  for (int t = j; t <= j + h; ++t)
    if (t >= 1 && t <= T) p.modes[static_cast<std::size_t>(t - 1)] = t == j ? StepMode::HoScore : StepMode::HoPath;
  p.modes[0] = StepMode::PathwiseFO;
  return p;
}

inline EstimatorPlan full_bp_plan(int T) {
  return {std::vector<StepMode>(static_cast<std::size_t>(T), StepMode::PathwiseFO), 0, 0};
}

inline EstimatorPlan score_rl_plan(int T) {
  return {std::vector<StepMode>(static_cast<std::size_t>(T), StepMode::ScoreRL), 0, 0};
}

/// Every step perturbs the parameters; no latent noise anywhere.
inline EstimatorPlan pure_zo_plan(int T) {
  return {std::vector<StepMode>(static_cast<std::size_t>(T), StepMode::ZO), 0, 0};
}

inline bool all_additive(const EstimatorPlan& p) {
  for (StepMode m : p.modes)
    if (!is_additive(m)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

struct NoiseDraw {
  std::uint64_t seed = 0;
  Vector x_T;
  std::map<int, Vector> latent_noise;  // additive steps
  std::map<int, ParamVector> param_noise;  // ZO steps
};

/// Each (seed, step) pair owns an independent stream, so a subset of steps
/// can be regenerated on its own.
inline Vector draw_latent_noise(const ChainSpec& spec, std::uint64_t seed, int t) {
  Engine eng = make_engine(seed, static_cast<std::uint64_t>(t), stream::kLatent);
  return normal_vector(eng, spec.dim(), spec.sigma_at(t));
}

inline ParamVector draw_param_noise(const ChainSpec& spec, std::uint64_t seed, int t) {
  Engine eng = make_engine(seed, static_cast<std::uint64_t>(t), stream::kParam);
  return normal_vector(eng, spec.backbone.param_count(), spec.sigma_param);
}

inline Vector draw_start(const ChainSpec& spec, std::uint64_t seed) {
  if (spec.fixed_x_T) return *spec.fixed_x_T;
  Engine eng = make_engine(seed, 0, stream::kStart);
  return normal_vector(eng, spec.dim(), 1.0);
}

inline NoiseDraw draw_noise(const ChainSpec& spec, const EstimatorPlan& plan, std::uint64_t seed) {
  if (plan.T() != spec.T) throw ContractViolation("draw_noise: plan length differs from T");
  NoiseDraw nd;
  nd.seed = seed;
  nd.x_T = draw_start(spec, seed);
  for (int t = 1; t <= spec.T; ++t) {
    if (is_additive(plan.mode(t)))
      nd.latent_noise.emplace(t, draw_latent_noise(spec, seed, t));
    else
      nd.param_noise.emplace(t, draw_param_noise(spec, seed, t));
  }
  return nd;
}

/// Same plan shape with every noise set to zero.
inline NoiseDraw zero_noise(const ChainSpec& spec, const EstimatorPlan& plan, Vector x_T) {
  NoiseDraw nd;
  nd.x_T = std::move(x_T);
  for (int t = 1; t <= spec.T; ++t) {
    if (is_additive(plan.mode(t)))
      nd.latent_noise.emplace(t, Vector::Zero(spec.dim()));
    else
      nd.param_noise.emplace(t, ParamVector::Zero(spec.backbone.param_count()));
  }
  return nd;
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<Vector> latents;   // latents[t] = x_t, t = 0..T
  double reward_value = 0.0;
  std::map<int, Vector> retained;  // step -> input latent x_t, additive steps only

  const Vector& x0() const { return latents.front(); }
  const Vector& x(int t) const { return latents.at(static_cast<std::size_t>(t)); }
};

inline const Vector& lookup_noise(const std::map<int, Vector>& m, int t, const char* what) {
  auto it = m.find(t);
  if (it == m.end())
    throw ContractViolation(std::string("noise draw has no ") + what + " for step " +
                            std::to_string(t));
  return it->second;
}

inline void check_finite_latent(const Vector& x, int t) {
  if (!x.allFinite() || x.norm() > kDivergenceNorm)
    throw DivergenceError(t, "chain diverged at step " + std::to_string(t));
}

inline Trajectory forward_chain(const ChainSpec& spec, const EstimatorPlan& plan,
                                const ParamVector& params, const NoiseDraw& noise) {
  if (plan.T() != spec.T) throw ContractViolation("forward_chain: plan length differs from T");
  if (noise.x_T.size() != spec.dim()) throw ContractViolation("forward_chain: x_T dimension");
  Trajectory tr;
  tr.latents.resize(static_cast<std::size_t>(spec.T) + 1);
  tr.latents[static_cast<std::size_t>(spec.T)] = noise.x_T;
  for (int t = spec.T; t >= 1; --t) {
    const Vector& xt = tr.latents[static_cast<std::size_t>(t)];
    const StepMode m = plan.mode(t);
    Vector next;
    if (is_additive(m)) {
      tr.retained.emplace(t, xt);
      next = backbone_forward(spec.backbone, params, xt, t) +
             lookup_noise(noise.latent_noise, t, "latent noise");
    } else {
      const ParamVector perturbed = params + lookup_noise(noise.param_noise, t, "parameter noise");
      next = backbone_forward(spec.backbone, perturbed, xt, t);
    }
    check_finite_latent(next, t);
    tr.latents[static_cast<std::size_t>(t - 1)] = std::move(next);
  }
  tr.reward_value = spec.reward.value(tr.x0());
  if (!std::isfinite(tr.reward_value)) throw DivergenceError(0, "reward is not finite");
  return tr;
}

/// Score of N(0, sigma^2 I) at z: -z / sigma^2.
inline Vector gaussian_log_score(const Vector& z, double sigma) {
  if (!(sigma > 0.0)) throw ContractViolation("gaussian_log_score: sigma must be > 0");
  return -z / (sigma * sigma);
}

// ---------------------------------------------------------------------------
// Budget model
// ---------------------------------------------------------------------------

struct BudgetModel {
  double B_h = 8.0;
  double B_z = 0.24;
  double B = 30.0;

  void validate(int T) const {
    if (!(B_h > B_z && B_z > 0.0)) throw ContractViolation("budget: need B_h > B_z > 0");
    if (!(B_z * T < B && B < B_h * T))
      throw ContractViolation("budget: need B_z*T < B < B_h*T");
  }
};

/// True when the plan has the RLR shape: FO at 1, a HO block, ZO elsewhere.
inline bool is_rlr_shaped(const EstimatorPlan& plan) {
  if (!plan.has_ho_block() || plan.T() < 1 || plan.mode(1) != StepMode::PathwiseFO) return false;
  for (int t = 2; t <= plan.T(); ++t) {
    const bool in_block = t >= plan.j && t <= plan.j + plan.h;
    const StepMode want = !in_block ? StepMode::ZO : (t == plan.j ? StepMode::HoScore : StepMode::HoPath);
    if (plan.mode(t) != want) return false;
  }
  return true;
}

/// RLR plans: B_h * h + B_z * (T - 1 - h), the FO step excluded. Other plans:
/// B_h per backpropagated step plus B_z per ZO step.
inline double plan_cost(const EstimatorPlan& plan, const BudgetModel& budget) {
  const int T = plan.T();
  if (is_rlr_shaped(plan)) return budget.B_h * plan.h + budget.B_z * (T - 1 - plan.h);
  int backprop = 0, zo = 0;
  for (StepMode m : plan.modes) (m == StepMode::ZO ? zo : backprop) += 1;
  return budget.B_h * backprop + budget.B_z * zo;
}

}  // namespace rlr

#pragma once

// Gradient estimators over the chain: full and truncated backpropagation, the
// score-function baseline, and the three terms of the recursive likelihood
// ratio estimator (one-step FO, h-length HO block, ZO on the remaining steps).
//
// Sign convention: grad log N(z; 0, s^2 I) = -z / s^2, so every
// "-R * grad log f" term is computed as +R * z / s^2.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlr/chain.hpp"
#include "rlr/diffcore.hpp"
#include "rlr/errors.hpp"

namespace rlr {

struct GradientEstimate {
  ParamVector grad;
  double cost_units = 0.0;
  std::string plan_digest;
  double reward_value = 0.0;
  int j = 0;  // HO start index for RLR estimates, 0 otherwise
  /// Norm of each score term by step (index t-1), 0 where the step carried
  /// none. Feeds the gradient-norm j policy.
  std::vector<double> step_norms;
};

// ---------------------------------------------------------------------------
// Plan validation
// ---------------------------------------------------------------------------

enum class PlanError {
  None,
  LengthMismatch,
  OutOfRange,
  OverlapWithFO,
  FONotAtStart,
  NonContiguousHO,
  ModeMismatch,
};

inline const char* to_string(PlanError e) {
  switch (e) {
    case PlanError::None: return "ok";
    case PlanError::LengthMismatch: return "LengthMismatch";
    case PlanError::OutOfRange: return "OutOfRange";
    case PlanError::OverlapWithFO: return "OverlapWithFO";
    case PlanError::FONotAtStart: return "FONotAtStart";
    case PlanError::NonContiguousHO: return "NonContiguousHO";
    case PlanError::ModeMismatch: return "ModeMismatch";
  }
  return "?";
}

struct PlanCheck {
  PlanError error = PlanError::None;
  std::string message;

  bool ok() const { return error == PlanError::None; }
  explicit operator bool() const { return ok(); }
};

/// Accepts exactly: FO at step 1, one contiguous HO block [j, j+h] with the
/// score at j, ZO everywhere else, 2 <= j and j + h <= T. j = 1 is accepted
/// only with `allow_j1`. Reports the first violated constraint.
inline PlanCheck validate_plan(const EstimatorPlan& plan, const ChainSpec& spec,
                               bool allow_j1 = false) {
  auto fail = [](PlanError e, std::string msg) { return PlanCheck{e, std::move(msg)}; };
  const int T = spec.T;
  if (plan.T() != T)
    return fail(PlanError::LengthMismatch, "plan has " + std::to_string(plan.T()) +
                                               " modes for T=" + std::to_string(T));
  if (plan.h < 0 || plan.j < 1 || plan.j + plan.h > T)
    return fail(PlanError::OutOfRange, "HO block [" + std::to_string(plan.j) + ", " +
                                           std::to_string(plan.j + plan.h) + "] outside [1, " +
                                           std::to_string(T) + "]");
  if (plan.j == 1 && !allow_j1)
    return fail(PlanError::OverlapWithFO, "HO block starts at step 1, which is the FO step");
  if (plan.mode(1) != StepMode::PathwiseFO)
    return fail(PlanError::FONotAtStart, "step 1 must be PATHWISE-FO");

  int first = 0, last = 0, count = 0;
  for (int t = 2; t <= T; ++t) {
    const StepMode m = plan.mode(t);
    if (m == StepMode::HoScore || m == StepMode::HoPath) {
      if (first == 0) first = t;
      last = t;
      ++count;
    }
  }
  if (count > 0 && last - first + 1 != count)
    return fail(PlanError::NonContiguousHO, "HO steps are not contiguous");

  for (int t = 2; t <= T; ++t) {
    const bool in_block = t >= plan.j && t <= plan.j + plan.h;
    const StepMode want =
        !in_block ? StepMode::ZO : (t == plan.j ? StepMode::HoScore : StepMode::HoPath);
    if (plan.mode(t) != want)
      return fail(PlanError::ModeMismatch, "step " + std::to_string(t) + " has mode '" +
                                               std::string(1, mode_letter(plan.mode(t))) +
                                               "', expected '" +
                                               std::string(1, mode_letter(want)) + "'");
  }
  return {};
}

// ---------------------------------------------------------------------------
// Pathwise sweeps
// ---------------------------------------------------------------------------

/// Per-step theta-contributions of the exact pathwise gradient of R(x_0) with
/// all noise frozen: entry t-1 is (dphi_t/dtheta)^T lambda_{t-1}, where lambda
/// is the reverse-mode cotangent of x_{t-1}. ZO steps are differentiated at
/// their perturbed parameters. Only steps 1..upto are swept.
inline std::vector<ParamVector> pathwise_contributions(const ChainSpec& spec,
                                                       const EstimatorPlan& plan,
                                                       const ParamVector& params,
                                                       const NoiseDraw& noise,
                                                       const Trajectory& traj, int upto) {
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(upto));
  Vector cot = spec.reward.grad(traj.x0());
  for (int t = 1; t <= upto; ++t) {
    BackboneVjp r;
    if (is_additive(plan.mode(t))) {
      r = backbone_vjp(spec.backbone, params, traj.x(t), t, cot);
    } else {
      const ParamVector perturbed = params + lookup_noise(noise.param_noise, t, "parameter noise");
      r = backbone_vjp(spec.backbone, perturbed, traj.x(t), t, cot);
    }
    out.push_back(std::move(r.dtheta));
    cot = std::move(r.dx);
  }
  return out;
}

/// Sum of pathwise contributions over steps 1..upto for any plan.
inline ParamVector pathwise_gradient(const ChainSpec& spec, const EstimatorPlan& plan,
                                     const ParamVector& params, const NoiseDraw& noise,
                                     const Trajectory& traj, int upto) {
  ParamVector g = ParamVector::Zero(spec.backbone.param_count());
  for (const ParamVector& c : pathwise_contributions(spec, plan, params, noise, traj, upto)) g += c;
  return g;
}

namespace detail {

inline void require_all_additive(const NoiseDraw& noise, int T, const char* who) {
  for (int t = 1; t <= T; ++t)
    if (!noise.latent_noise.count(t))
      throw ContractViolation(std::string(who) + ": needs additive noise at every step");
}

}  // namespace detail

/// Full backpropagation through the all-additive chain with frozen noise.
inline GradientEstimate grad_full_bp(const ChainSpec& spec, const ParamVector& params,
                                     const NoiseDraw& noise) {
  detail::require_all_additive(noise, spec.T, "grad_full_bp");
  const EstimatorPlan plan = full_bp_plan(spec.T);
  const Trajectory tr = forward_chain(spec, plan, params, noise);
  GradientEstimate e;
  e.grad = pathwise_gradient(spec, plan, params, noise, tr, spec.T);
  e.plan_digest = plan.digest();
  e.reward_value = tr.reward_value;
  return e;
}

/// Backpropagation stopped after the theta-VJP of step T'.
inline GradientEstimate grad_truncated_bp(const ChainSpec& spec, const ParamVector& params,
                                          const NoiseDraw& noise, int T_prime) {
  if (T_prime < 1 || T_prime > spec.T)
    throw ContractViolation("grad_truncated_bp: need 1 <= T' <= T");
  detail::require_all_additive(noise, spec.T, "grad_truncated_bp");
  const EstimatorPlan plan = full_bp_plan(spec.T);
  const Trajectory tr = forward_chain(spec, plan, params, noise);
  GradientEstimate e;
  e.grad = pathwise_gradient(spec, plan, params, noise, tr, T_prime);
  e.plan_digest = plan.digest() + "/T'" + std::to_string(T_prime);
  e.reward_value = tr.reward_value;
  return e;
}

// ---------------------------------------------------------------------------
// RLR terms
// ---------------------------------------------------------------------------

inline const Vector& retained_input(const Trajectory& traj, int t) {
  auto it = traj.retained.find(t);
  if (it == traj.retained.end())
    throw ContractViolation("trajectory did not retain the input of step " + std::to_string(t));
  return it->second;
}

/// D_theta phi_1^T dR/dx_0.
inline ParamVector grad_fo_term(const ChainSpec& spec, const ParamVector& params,
                                const Trajectory& traj) {
  const Vector& x1 = retained_input(traj, 1);
  return backbone_vjp_theta(spec.backbone, params, x1, 1, spec.reward.grad(traj.x0()));
}

/// -R(x_0) D_theta phi_{j:j+h}^T grad log f(z_j), by a local reverse sweep from
/// step j (seeded with the score of z_j) up to step j+h.
inline ParamVector grad_ho_term(const ChainSpec& spec, const ParamVector& params,
                                const Trajectory& traj, const NoiseDraw& noise, int j, int h) {
  if (j < 1 || h < 0 || j + h > spec.T) throw ContractViolation("grad_ho_term: j out of range");
  const Vector& zj = lookup_noise(noise.latent_noise, j, "latent noise");
  Vector cot = gaussian_log_score(zj, spec.sigma_at(j));
  ParamVector g = ParamVector::Zero(spec.backbone.param_count());
  for (int t = j; t <= j + h; ++t) {
    BackboneVjp r = backbone_vjp(spec.backbone, params, retained_input(traj, t), t, cot);
    g += r.dtheta;
    cot = std::move(r.dx);
  }
  return -traj.reward_value * g;
}

/// -R(x_0) grad log f(z_i) = R(x_0) z_i / sigma_param^2.
inline ParamVector grad_zo_term(const Trajectory& traj, int step_i, const NoiseDraw& noise,
                                double sigma_param) {
  auto it = noise.param_noise.find(step_i);
  if (it == noise.param_noise.end())
    throw ContractViolation("grad_zo_term: step " + std::to_string(step_i) + " is not a ZO step");
  return -traj.reward_value * gaussian_log_score(it->second, sigma_param);
}

/// Sum over every step of the one-step score term -R D_theta phi_t^T grad log f(z_t).
inline GradientEstimate grad_score_rl(const ChainSpec& spec, const ParamVector& params,
                                      const NoiseDraw& noise) {
  detail::require_all_additive(noise, spec.T, "grad_score_rl");
  const EstimatorPlan plan = score_rl_plan(spec.T);
  const Trajectory tr = forward_chain(spec, plan, params, noise);
  GradientEstimate e;
  e.grad = ParamVector::Zero(spec.backbone.param_count());
  e.step_norms.assign(static_cast<std::size_t>(spec.T), 0.0);
  for (int t = 1; t <= spec.T; ++t) {
    const ParamVector term = grad_ho_term(spec, params, tr, noise, t, 0);
    e.step_norms[static_cast<std::size_t>(t - 1)] = term.norm();
    e.grad += term;
  }
  e.plan_digest = plan.digest();
  e.reward_value = tr.reward_value;
  return e;
}

/// RLR estimate for a validated plan on a given noise draw.
inline GradientEstimate rlr_from_noise(const ChainSpec& spec, const ParamVector& params,
                                       const EstimatorPlan& plan, const NoiseDraw& noise) {
  const Trajectory tr = forward_chain(spec, plan, params, noise);
  GradientEstimate e;
  e.step_norms.assign(static_cast<std::size_t>(spec.T), 0.0);
  e.grad = grad_fo_term(spec, params, tr);
  const ParamVector ho = grad_ho_term(spec, params, tr, noise, plan.j, plan.h);
  e.step_norms[static_cast<std::size_t>(plan.j - 1)] = ho.norm();
  e.grad += ho;
  for (int i = 2; i <= spec.T; ++i) {
    if (i >= plan.j && i <= plan.j + plan.h) continue;
    const ParamVector zo = grad_zo_term(tr, i, noise, spec.sigma_param);
    e.step_norms[static_cast<std::size_t>(i - 1)] = zo.norm();
    e.grad += zo;
  }
  e.plan_digest = plan.digest();
  e.reward_value = tr.reward_value;
  e.j = plan.j;
  return e;
}

/// Sum of ZO terms over every step of the all-ZO plan.
inline GradientEstimate grad_pure_zo(const ChainSpec& spec, const ParamVector& params,
                                     std::uint64_t seed) {
  const EstimatorPlan plan = pure_zo_plan(spec.T);
  const NoiseDraw noise = draw_noise(spec, plan, seed);
  const Trajectory tr = forward_chain(spec, plan, params, noise);
  GradientEstimate e;
  e.grad = ParamVector::Zero(spec.backbone.param_count());
  e.step_norms.assign(static_cast<std::size_t>(spec.T), 0.0);
  for (int i = 1; i <= spec.T; ++i) {
    const ParamVector zo = grad_zo_term(tr, i, noise, spec.sigma_param);
    e.step_norms[static_cast<std::size_t>(i - 1)] = zo.norm();
    e.grad += zo;
  }
  e.plan_digest = plan.digest();
  e.reward_value = tr.reward_value;
  return e;
}

struct RlrOptions {
  bool allow_j1 = false;
  std::optional<BudgetModel> budget;
};

/// Draws noise for the (j, h) plan, simulates, and sums FO + HO + ZO terms.
inline GradientEstimate grad_rlr(const ChainSpec& spec, const ParamVector& params, int j, int h,
                                 std::uint64_t seed, const RlrOptions& opts = {}) {
  const EstimatorPlan plan = rlr_plan(spec.T, j, h);
  if (PlanCheck chk = validate_plan(plan, spec, opts.allow_j1); !chk)
    throw ContractViolation(std::string("grad_rlr: ") + to_string(chk.error) + ": " + chk.message);
  const double cost = plan_cost(plan, opts.budget.value_or(BudgetModel{}));
  if (opts.budget) {
    if (cost > opts.budget->B)
      throw ContractViolation("grad_rlr: plan cost " + std::to_string(cost) +
                              " exceeds budget " + std::to_string(opts.budget->B));
  }
  const NoiseDraw noise = draw_noise(spec, plan, seed);
  GradientEstimate e = rlr_from_noise(spec, params, plan, noise);
  e.cost_units = cost;
  return e;
}

}  // namespace rlr

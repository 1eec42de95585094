#pragma once

// Optimisation loops driven by any estimator, the step-size rule from the
// smooth non-convex convergence bound, and the Monte Carlo meters (bias,
// variance, convergence) used by the experiments.
//
// The trainer maximises E[R] by ascent. The convergence bound is stated for
// minimisation; squared gradient norms and |Delta_0| are sign-free, so the
// report applies unchanged.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rlr/chain.hpp"
#include "rlr/estimators.hpp"
#include "rlr/montecarlo.hpp"
#include "rlr/param_io.hpp"
#include "rlr/planner.hpp"

namespace rlr {

// ---------------------------------------------------------------------------
// Estimator dispatch
// ---------------------------------------------------------------------------

enum class EstimatorKind { Rlr, FullBp, TruncatedBp, ScoreRl, PureZo };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Rlr: return "rlr";
    case EstimatorKind::FullBp: return "full-bp";
    case EstimatorKind::TruncatedBp: return "truncated-bp";
    case EstimatorKind::ScoreRl: return "score-rl";
    case EstimatorKind::PureZo: return "pure-zo";
  }
  return "?";
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Rlr;
  int h = 2;
  JSampler sampler;
  int T_prime = 1;
  bool allow_j1 = false;

  std::string label() const {
    switch (kind) {
      case EstimatorKind::Rlr: return "rlr(h=" + std::to_string(h) + "," + to_string(sampler.policy) + ")";
      case EstimatorKind::TruncatedBp: return "truncated-bp(T'=" + std::to_string(T_prime) + ")";
      default: return to_string(kind);
    }
  }

  static EstimatorConfig rlr(int h, JPolicy policy = JPolicy::Uniform) {
    EstimatorConfig c;
    c.h = h;
    c.sampler.policy = policy;
    return c;
  }
  static EstimatorConfig of(EstimatorKind k, int T_prime = 1) {
    EstimatorConfig c;
    c.kind = k;
    c.T_prime = T_prime;
    return c;
  }
};

/// One seeded draw of the configured estimator. For RLR, j is sampled from the
/// same seed on its own stream.
inline GradientEstimate estimate(const ChainSpec& spec, const ParamVector& params,
                                 const EstimatorConfig& cfg, std::uint64_t seed,
                                 const std::optional<BudgetModel>& budget = std::nullopt) {
  const BudgetModel cost_model = budget.value_or(BudgetModel{});
  switch (cfg.kind) {
    case EstimatorKind::Rlr: {
      const int j = sample_j(cfg.sampler, cfg.h, spec.T, seed);
      return grad_rlr(spec, params, j, cfg.h, seed, RlrOptions{cfg.allow_j1, budget});
    }
    case EstimatorKind::FullBp: {
      const EstimatorPlan plan = full_bp_plan(spec.T);
      GradientEstimate e = grad_full_bp(spec, params, draw_noise(spec, plan, seed));
      e.cost_units = plan_cost(plan, cost_model);
      return e;
    }
    case EstimatorKind::TruncatedBp: {
      GradientEstimate e =
          grad_truncated_bp(spec, params, draw_noise(spec, full_bp_plan(spec.T), seed), cfg.T_prime);
      e.cost_units = cost_model.B_h * cfg.T_prime;
      return e;
    }
    case EstimatorKind::ScoreRl: {
      const EstimatorPlan plan = score_rl_plan(spec.T);
      GradientEstimate e = grad_score_rl(spec, params, draw_noise(spec, plan, seed));
      e.cost_units = plan_cost(plan, cost_model);
      return e;
    }
    case EstimatorKind::PureZo: {
      GradientEstimate e = grad_pure_zo(spec, params, seed);
      e.cost_units = plan_cost(pure_zo_plan(spec.T), cost_model);
      return e;
    }
  }
  throw ContractViolation("estimate: unknown estimator kind");
}

inline MCStats estimator_stats(const ChainSpec& spec, const ParamVector& params,
                               const EstimatorConfig& cfg, long long n, std::uint64_t seed,
                               int workers = 1) {
  return mc_stats([&](std::uint64_t s) { return estimate(spec, params, cfg, s).grad; }, n, seed,
                  workers);
}

/// Monte Carlo statistics of the omitted chain-rule terms, steps T'+1..T, with
/// full and truncated sharing each replication's noise.
inline MCStats truncation_bias_stats(const ChainSpec& spec, const ParamVector& params, int T_prime,
                                     long long n, std::uint64_t seed, int workers = 1) {
  if (T_prime < 1 || T_prime > spec.T) throw ContractViolation("truncation_bias: need 1 <= T' <= T");
  const EstimatorPlan plan = full_bp_plan(spec.T);
  return mc_stats(
      [&](std::uint64_t s) {
        const NoiseDraw noise = draw_noise(spec, plan, s);
        const Trajectory tr = forward_chain(spec, plan, params, noise);
        const auto parts = pathwise_contributions(spec, plan, params, noise, tr, spec.T);
        ParamVector b = ParamVector::Zero(spec.backbone.param_count());
        for (int t = T_prime + 1; t <= spec.T; ++t) b += parts[static_cast<std::size_t>(t - 1)];
        return b;
      },
      n, seed, workers);
}

inline Vector truncation_bias(const ChainSpec& spec, const ParamVector& params, int T_prime,
                              long long n_samples, std::uint64_t seed, int workers = 1) {
  if (n_samples < 1) throw ContractViolation("truncation_bias: need n_samples >= 1");
  if (T_prime == spec.T) return Vector::Zero(spec.backbone.param_count());
  if (n_samples == 1) {
    const EstimatorPlan plan = full_bp_plan(spec.T);
    const NoiseDraw noise = draw_noise(spec, plan, derive_seed(seed, 0, stream::kReplicate));
    const Trajectory tr = forward_chain(spec, plan, params, noise);
    const auto parts = pathwise_contributions(spec, plan, params, noise, tr, spec.T);
    Vector b = Vector::Zero(spec.backbone.param_count());
    for (int t = T_prime + 1; t <= spec.T; ++t) b += parts[static_cast<std::size_t>(t - 1)];
    return b;
  }
  return truncation_bias_stats(spec, params, T_prime, n_samples, seed, workers).mean;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct UnbiasednessReport {
  MCStats a, b;
  Vector z;              // per-coordinate (mean_a - mean_b) / combined SE
  int flags = 0;         // coordinates with |z| > k_sigma
  double expected_flags = 0.0;
  double max_abs_z = 0.0;
  double k_sigma = 4.0;
  bool pass = false;
};

/// Flags coordinates whose mean difference exceeds k_sigma combined standard
/// errors; passes when the flag count does not exceed p * P(|N(0,1)| > k).
inline UnbiasednessReport compare_means(MCStats a, MCStats b, double k_sigma) {
  UnbiasednessReport r;
  r.k_sigma = k_sigma;
  const Vector se = (a.standard_error().array().square() + b.standard_error().array().square()).sqrt();
  r.z = Vector::Zero(a.mean.size());
  for (Eigen::Index i = 0; i < a.mean.size(); ++i) {
    const double diff = a.mean[i] - b.mean[i];
    if (se[i] > 0.0) {
      r.z[i] = diff / se[i];
    } else {
      r.z[i] = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    }
    if (std::abs(r.z[i]) > k_sigma) ++r.flags;
    r.max_abs_z = std::max(r.max_abs_z, std::abs(r.z[i]));
  }
  r.expected_flags = double(a.mean.size()) * std::erfc(k_sigma / std::sqrt(2.0));
  r.pass = r.flags <= r.expected_flags;
  r.a = std::move(a);
  r.b = std::move(b);
  return r;
}

inline UnbiasednessReport unbiasedness_report(const ChainSpec& spec, const ParamVector& params,
                                              const EstimatorConfig& est_a,
                                              const EstimatorConfig& est_b, long long n,
                                              double k_sigma, std::uint64_t seed_a,
                                              std::uint64_t seed_b, int workers = 1) {
  return compare_means(estimator_stats(spec, params, est_a, n, seed_a, workers),
                       estimator_stats(spec, params, est_b, n, seed_b, workers), k_sigma);
}

/// gamma = [ (2 Delta_0 / ((K+1) L sigma^2))^(-1/2) + L ]^(-1); the first addend
/// is 0 when Delta_0 = 0 or sigma^2 = 0, giving gamma = 1/L.
inline double theorem2_step_size(double L, double delta0, double sigma2, long long K) {
  if (!(L > 0.0)) throw ContractViolation("theorem2_step_size: L must be positive");
  if (delta0 < 0.0 || sigma2 < 0.0 || K < 0)
    throw ContractViolation("theorem2_step_size: need delta0, sigma2, K >= 0");
  double first = 0.0;
  if (delta0 > 0.0 && sigma2 > 0.0)
    first = std::sqrt(double(K + 1) * L * sigma2 / (2.0 * delta0));
  return 1.0 / (first + L);
}

/// sqrt(8 L Delta_0 sigma^2 / (K+1)) + 2 L Delta_0 / (K+1).
inline double theorem2_bound(double L, double delta0, double sigma2, long long K) {
  const double k1 = double(K + 1);
  return std::sqrt(8.0 * L * delta0 * sigma2 / k1) + 2.0 * L * delta0 / k1;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OptimizerKind { Sgd, SgdTheorem2, Adam };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::SgdTheorem2: return "sgd-theorem2";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Constants for sgd-theorem2.
  double L = 1.0;
  double delta0 = 0.0;
  double sigma2 = 0.0;
};

struct TrainConfig {
  EstimatorConfig estimator;
  OptimizerConfig optimizer;
  int iterations = 100;  // K + 1 parameter updates
  int batch = 8;
  std::uint64_t seed = 0;
  std::optional<BudgetModel> budget;
  int eval_samples = 64;       // fixed draws for the logged reward mean
  std::uint64_t eval_seed = 0;
  double ema_decay = 0.9;      // gradient-norm history for the softmax j policy
  int collapse_window = 10;
  double collapse_drop = 0.5;  // relative drop of the windowed reward that counts as collapse
  int workers = 1;

  void validate(const ChainSpec& spec) const {
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1 (K >= 0)");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (eval_samples < 1) throw ConfigError("train: eval_samples must be >= 1");
    if (estimator.kind == EstimatorKind::Rlr) {
      estimator.sampler.validate(spec.T, estimator.h);
      if (estimator.h < 0 || 2 + estimator.h > spec.T)
        throw ConfigError("train: rlr needs 0 <= h <= T-2");
    }
    if (estimator.kind == EstimatorKind::TruncatedBp &&
        (estimator.T_prime < 1 || estimator.T_prime > spec.T))
      throw ConfigError("train: truncated-bp needs 1 <= T' <= T");
    if (optimizer.kind == OptimizerKind::SgdTheorem2 && !(optimizer.L > 0.0))
      throw ConfigError("train: sgd-theorem2 needs L > 0");
  }
};

struct TrainRecord {
  int iter = 0;
  double reward_mean = 0.0;
  double grad_sq_norm = 0.0;
  double step_size = 0.0;
  int j = 0;
  double cost_units = 0.0;
  bool collapsed = false;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<ParamVector> snapshots;  // theta_k before update k
  ParamVector final_params;
  bool collapsed = false;
  double avg_sq_grad_norm = 0.0;
  double wall_seconds = 0.0;
  OptimizerKind optimizer = OptimizerKind::Sgd;

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(records.size());
    for (const auto& rec : records) r.push_back(rec.reward_mean);
    return r;
  }
};

/// Mean reward of the all-additive chain at theta over fixed evaluation draws.
inline double eval_reward(const ChainSpec& spec, const ParamVector& params, int samples,
                          std::uint64_t seed) {
  const EstimatorPlan plan = full_bp_plan(spec.T);
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    const NoiseDraw nd = draw_noise(spec, plan, derive_seed(seed, std::uint64_t(s), stream::kEval));
    total += forward_chain(spec, plan, params, nd).reward_value;
  }
  return total / samples;
}

inline const char* kTrainCsvHeader = "iter,reward_mean,grad_sq_norm,step_size,j,cost_units,collapsed";

inline void write_train_csv(std::ostream& os, const TrainLog& log) {
  os << kTrainCsvHeader << '\n';
  for (const auto& r : log.records) {
    os << r.iter << ',' << format_double(r.reward_mean) << ',' << format_double(r.grad_sq_norm)
       << ',' << format_double(r.step_size) << ',' << r.j << ',' << format_double(r.cost_units)
       << ',' << (r.collapsed ? 1 : 0) << '\n';
  }
}

namespace detail {

inline double window_mean(const std::vector<TrainRecord>& recs, std::size_t begin, std::size_t len) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + len; ++i) s += recs[i].reward_mean;
  return s / double(len);
}

}  // namespace detail

inline TrainLog train(const ChainSpec& spec, const ParamVector& init, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate(spec);
  const auto t0 = std::chrono::steady_clock::now();
  const long long K = cfg.iterations - 1;
  const Eigen::Index p = spec.backbone.param_count();
  if (init.size() != p) throw ContractViolation("train: initial parameters have the wrong size");

  TrainLog log;
  log.optimizer = cfg.optimizer.kind;
  ParamVector theta = init;
  ParamVector adam_m = ParamVector::Zero(p), adam_v = ParamVector::Zero(p);
  std::vector<double> ema(static_cast<std::size_t>(std::max(spec.T - 1, 0)), 0.0);
  std::vector<bool> ema_seen(ema.size(), false);
  double sq_sum = 0.0;
  const std::size_t W = static_cast<std::size_t>(std::max(cfg.collapse_window, 1));

  for (long long k = 0; k <= K; ++k) {
    TrainRecord rec;
    rec.iter = static_cast<int>(k);
    log.snapshots.push_back(theta);

    EstimatorConfig est = cfg.estimator;
    if (est.kind == EstimatorKind::Rlr && est.sampler.policy == JPolicy::SoftmaxGradNorm) {
      // No history before the first iteration: uniform.
      if (k == 0) est.sampler.policy = JPolicy::Uniform;
      else est.sampler.norm_history = ema;
    }

    ParamVector g = ParamVector::Zero(p);
    bool diverged = false;
    try {
      rec.reward_mean = NAN;
      rec.reward_mean = eval_reward(spec, theta, cfg.eval_samples, cfg.eval_seed);
      const auto draws = parallel_map<GradientEstimate>(cfg.batch, cfg.workers, [&](long long b) {
        return estimate(spec, theta, est,
                        derive_seed(cfg.seed, std::uint64_t(k * cfg.batch + b), stream::kBatch),
                        cfg.budget);
      });
      std::vector<double> obs(ema.size(), 0.0);
      std::vector<int> obs_n(ema.size(), 0);
      for (const auto& d : draws) {
        g += d.grad;
        for (std::size_t i = 0; i < ema.size() && i + 1 < d.step_norms.size(); ++i) {
          if (d.step_norms[i + 1] > 0.0) {
            obs[i] += d.step_norms[i + 1];
            ++obs_n[i];
          }
        }
      }
      g /= double(cfg.batch);
      rec.j = draws.front().j;
      rec.cost_units = draws.front().cost_units;
      for (std::size_t i = 0; i < ema.size(); ++i) {
        if (obs_n[i] == 0) continue;
        const double o = obs[i] / obs_n[i];
        ema[i] = ema_seen[i] ? cfg.ema_decay * ema[i] + (1.0 - cfg.ema_decay) * o : o;
        ema_seen[i] = true;
      }
    } catch (const DivergenceError&) {
      diverged = true;
    }

    if (diverged) {
      rec.grad_sq_norm = NAN;
    } else {
      rec.grad_sq_norm = g.squaredNorm();
      sq_sum += rec.grad_sq_norm;
      switch (cfg.optimizer.kind) {
        case OptimizerKind::Sgd:
          rec.step_size = cfg.optimizer.lr;
          theta += rec.step_size * g;
          break;
        case OptimizerKind::SgdTheorem2:
          rec.step_size = theorem2_step_size(cfg.optimizer.L, cfg.optimizer.delta0,
                                             cfg.optimizer.sigma2, K);
          theta += rec.step_size * g;
          break;
        case OptimizerKind::Adam: {
          const auto& o = cfg.optimizer;
          adam_m = o.beta1 * adam_m + (1.0 - o.beta1) * g;
          adam_v = o.beta2 * adam_v + (1.0 - o.beta2) * g.cwiseProduct(g);
          const double c1 = 1.0 - std::pow(o.beta1, double(k + 1));
          const double c2 = 1.0 - std::pow(o.beta2, double(k + 1));
          rec.step_size = o.lr;
          theta.array() += o.lr * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + o.eps);
          break;
        }
      }
      diverged = !theta.allFinite();
    }

    // Collapse is sticky: divergence, or the trailing reward window falling
    // below the first window by collapse_drop of its magnitude.
    rec.collapsed = diverged || log.collapsed;
    log.records.push_back(rec);
    const std::size_t n = log.records.size();
    if (!rec.collapsed && n >= 2 * W) {
      const double first = detail::window_mean(log.records, 0, W);
      const double last = detail::window_mean(log.records, n - W, W);
      log.records.back().collapsed = last < first - cfg.collapse_drop * std::abs(first);
    }
    log.collapsed = log.records.back().collapsed;
    if (diverged) break;
  }

  log.final_params = theta;
  log.avg_sq_grad_norm = log.records.empty() ? 0.0 : sq_sum / double(log.records.size());
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

// ---------------------------------------------------------------------------
// Convergence
// ---------------------------------------------------------------------------

/// Curvature, variance and optimality-gap estimates feeding the step-size rule.
struct ConvergenceConstants {
  double L = 0.0;
  double delta0 = 0.0;
  double sigma2 = 0.0;
  double max_curvature = 0.0;
};

/// L_est: 2x the largest |directional second difference| of the mean reward
/// (over `draws` fixed noise draws) across `probes` random unit directions.
inline double estimate_smoothness(const ChainSpec& spec, const ParamVector& params, int probes,
                                  int draws, std::uint64_t seed, double step = 1e-3) {
  const EstimatorPlan plan = full_bp_plan(spec.T);
  std::vector<NoiseDraw> fixed;
  fixed.reserve(static_cast<std::size_t>(draws));
  for (int s = 0; s < draws; ++s)
    fixed.push_back(draw_noise(spec, plan, derive_seed(seed, std::uint64_t(s), stream::kEval)));
  auto objective = [&](const ParamVector& th) {
    double total = 0.0;
    for (const auto& nd : fixed) total += forward_chain(spec, plan, th, nd).reward_value;
    return total / draws;
  };
  const double centre = objective(params);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    Engine eng = make_engine(seed, std::uint64_t(k), stream::kProbe);
    ParamVector u = normal_vector(eng, params.size());
    u.normalize();
    const double c = (objective(params + step * u) - 2.0 * centre + objective(params - step * u)) /
                     (step * step);
    worst = std::max(worst, std::abs(c));
  }
  return worst;
}

struct ConvergenceReport {
  double observed = 0.0;  // (1/(K+1)) sum ||grad E[R](theta_k)||^2
  double bound = 0.0;
  bool pass = false;
  bool step_rule_applies = true;
};

/// Measures E[R] gradients at every logged snapshot by full-BP Monte Carlo
/// means and checks them against the convergence bound.
inline ConvergenceReport convergence_report(const ChainSpec& spec, const TrainLog& log, double L,
                                            double delta0, double sigma2, long long grad_samples,
                                            std::uint64_t seed, int workers = 1) {
  if (log.snapshots.empty() || log.snapshots.size() != log.records.size())
    throw ContractViolation("convergence_report: log has no parameter snapshots");
  const long long K = static_cast<long long>(log.snapshots.size()) - 1;
  const EstimatorConfig full = EstimatorConfig::of(EstimatorKind::FullBp);
  double total = 0.0;
  for (std::size_t k = 0; k < log.snapshots.size(); ++k) {
    const MCStats st = estimator_stats(spec, log.snapshots[k], full, grad_samples,
                                       derive_seed(seed, k, stream::kEval), workers);
    total += st.mean.squaredNorm();
  }
  ConvergenceReport r;
  r.observed = total / double(K + 1);
  r.bound = theorem2_bound(L, delta0, sigma2, K);
  r.pass = r.observed <= r.bound;
  r.step_rule_applies = log.optimizer != OptimizerKind::Adam;
  return r;
}

}  // namespace rlr

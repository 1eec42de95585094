#pragma once

// The canned experiments behind rlrlab, and the acceptance criteria run by
// `rlrlab selftest` and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "rlr/config.hpp"
#include "rlr/estimators.hpp"
#include "rlr/linear_oracle.hpp"
#include "rlr/montecarlo.hpp"
#include "rlr/param_io.hpp"
#include "rlr/planner.hpp"
#include "rlr/trainer.hpp"

namespace rlr {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunOptions {
  std::uint64_t seed_offset = 0;
  int workers = 1;
};

struct OutputFile {
  std::string name;
  std::string contents;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::vector<OutputFile> files;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  std::string summary() const {
    std::ostringstream os;
    os << "experiment " << experiment << '\n';
    for (const auto& n : notes) os << n << '\n';
    for (const auto& c : checks)
      os << (c.pass ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  " + c.detail) << '\n';
    os << (passed() ? "all checks passed" : "some checks failed") << " (" << checks.size() << " checks)\n";
    return os.str();
  }
};

/// Writes every output file plus summary.txt into dir.
inline void write_result(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    os << text;
  };
  for (const auto& f : r.files) put(f.name, f.contents);
  put("summary.txt", r.summary());
}

// ---------------------------------------------------------------------------
// Built-in setups
// ---------------------------------------------------------------------------

/// mlp-tanh d=2 m=4, T=5, sigma_t = 0.1, sigma_param = 1e-2, R = -|x - (0.5, -0.5)|^2.
inline ExperimentConfig reference_setup() {
  ExperimentConfig c;
  c.experiment = Experiment::Selftest;
  c.output = "out/selftest";
  c.sections = {"chain", "run"};
  return c;
}

/// Minimal plan config at the recommended budget.
inline ExperimentConfig planner_setup() {
  ExperimentConfig c;
  c.experiment = Experiment::Plan;
  c.output = "out/plan";
  c.chain.T = 50;
  c.budget.model = BudgetModel{8.0, 0.24, 30.0};
  c.sections = {"chain", "budget"};
  return c;
}

/// Long-range reward: a time-conditioned scalar chain started near the
/// identity map, with a target two units away from where x_T is centred.
inline ExperimentConfig long_range_setup() {
  ExperimentConfig c;
  c.experiment = Experiment::Truncation;
  c.output = "out/truncation";
  ChainConfig& ch = c.chain;
  ch.T = 10;
  ch.d = 1;
  ch.backbone = BackboneKind::LinearAffine;
  ch.time_conditioning = true;
  ch.sigma = 0.1;
  ch.sigma_param = 0.1;
  ch.target = {2.0};
  ch.init = InitKind::Identity;
  ch.init_gain = 0.9;
  c.estimator.kinds = {EstimatorKind::Rlr, EstimatorKind::TruncatedBp};
  c.estimator.h = 2;
  c.estimator.T_prime = {1, 5};
  RunSection& r = c.run;
  r.seeds = {0, 1, 2, 3, 4};
  r.iterations = 200;
  r.batch = 256;
  r.optimizer = OptimizerKind::Sgd;
  r.lr = 5e-4;
  r.eval_samples = 128;
  c.sections = {"chain", "estimator", "run"};
  return c;
}

/// Sample-efficiency comparison on a linear-beta schedule whose last step is
/// nearly noiseless.
inline ExperimentConfig efficiency_setup() {
  ExperimentConfig c;
  c.experiment = Experiment::Train;
  c.output = "out/efficiency";
  ChainConfig& ch = c.chain;
  ch.T = 10;
  ch.schedule = Schedule::LinearBeta;
  ch.beta_start = 1e-5;
  ch.beta_end = 0.02;
  ch.sigma_param = 0.5;
  c.estimator.kinds = {EstimatorKind::FullBp, EstimatorKind::Rlr, EstimatorKind::ScoreRl};
  c.estimator.h = 2;
  RunSection& r = c.run;
  r.seeds = {0, 1, 2, 3, 4};
  r.iterations = 600;
  r.batch = 16;
  r.optimizer = OptimizerKind::Adam;
  r.lr = 0.003;
  r.eval_samples = 128;
  r.threshold = 0.9;
  c.sections = {"chain", "estimator", "run"};
  return c;
}

/// RLR(h=2) on the reference chain with the step-size rule.
inline ExperimentConfig convergence_setup() {
  ExperimentConfig c;
  c.experiment = Experiment::Train;
  c.output = "out/convergence";
  c.estimator.kinds = {EstimatorKind::Rlr};
  c.estimator.h = 2;
  RunSection& r = c.run;
  r.seeds = {0};
  r.n_samples = 20000;
  r.iterations = 50;
  r.batch = 8;
  r.optimizer = OptimizerKind::SgdTheorem2;
  r.eval_samples = 64;
  r.probes = 100;
  r.grad_samples = 1000;
  c.sections = {"chain", "estimator", "run"};
  return c;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline std::string fmt(double v) { return format_double(v); }

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Trailing moving average over complete windows.
inline std::vector<double> smooth(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out;
  if (window == 0 || v.size() < window) return out;
  for (std::size_t i = 0; i + window <= v.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + window; ++k) s += v[k];
    out.push_back(s / double(window));
  }
  return out;
}

inline bool non_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] >= v[i - 1])) return false;
  return true;
}

inline std::string label(const EstimatorConfig& e) {
  switch (e.kind) {
    case EstimatorKind::Rlr: return "rlr-h" + std::to_string(e.h);
    case EstimatorKind::TruncatedBp: return "truncated-bp-T" + std::to_string(e.T_prime);
    default: return to_string(e.kind);
  }
}

inline std::vector<std::uint64_t> seeds(const ExperimentConfig& c, const RunOptions& o) {
  std::vector<std::uint64_t> s;
  for (auto v : c.run.seeds) s.push_back(v + o.seed_offset);
  return s;
}

/// Seed for the i-th Monte Carlo stream of an experiment.
inline std::uint64_t mc_seed(const ExperimentConfig& c, const RunOptions& o, std::uint64_t i) {
  return derive_seed(c.run.seeds.front() + o.seed_offset, i, stream::kReplicate);
}

/// Reward curve padded to `length` records; records lost to divergence count as -inf.
inline std::vector<double> padded_rewards(const TrainLog& log, std::size_t length) {
  std::vector<double> r(length, kNegInf);
  for (std::size_t i = 0; i < std::min(length, log.records.size()); ++i) {
    const double v = log.records[i].reward_mean;
    r[i] = std::isfinite(v) ? v : kNegInf;
  }
  return r;
}

inline double final_reward(const TrainLog& log, std::size_t length) {
  return padded_rewards(log, length).back();
}

inline std::string train_csv(const TrainLog& log) {
  std::ostringstream os;
  write_train_csv(os, log);
  return os.str();
}

inline std::string params_blob(const Backbone& bb, const ParamVector& p) {
  std::ostringstream os(std::ios::binary);
  write_params_binary(os, bb, p);
  return os.str();
}

}  // namespace detail

inline TrainConfig train_config(const ExperimentConfig& c, const EstimatorConfig& est,
                                std::uint64_t seed, const RunOptions& o) {
  TrainConfig t;
  t.estimator = est;
  t.optimizer.kind = c.run.optimizer;
  t.optimizer.lr = c.run.lr;
  t.iterations = c.run.iterations;
  t.batch = c.run.batch;
  t.seed = seed;
  if (c.sections.count("budget")) t.budget = c.budget.model;
  t.eval_samples = c.run.eval_samples;
  t.eval_seed = o.seed_offset;
  t.collapse_window = c.run.collapse_window;
  t.collapse_drop = c.run.collapse_drop;
  t.workers = o.workers;
  return t;
}

/// Constants for the step-size rule, estimated at theta_0:
/// L = 2x the largest probed curvature, sigma^2 = trace variance of the
/// estimator divided by the batch size, Delta_0 = best reward of a full-BP
/// reference run minus R(theta_0).
inline ConvergenceConstants estimate_constants(const ChainSpec& spec, const ParamVector& theta0,
                                               const ExperimentConfig& c, const EstimatorConfig& est,
                                               std::uint64_t seed, const RunOptions& o) {
  constexpr int kCurvatureDraws = 256;
  ConvergenceConstants k;
  k.max_curvature = estimate_smoothness(spec, theta0, c.run.probes, kCurvatureDraws, seed);
  k.L = 2.0 * k.max_curvature;
  k.sigma2 = estimator_stats(spec, theta0, est, c.run.n_samples, seed, o.workers).trace_variance() /
             double(c.run.batch);

  TrainConfig ref = train_config(c, EstimatorConfig::of(EstimatorKind::FullBp), seed, o);
  ref.optimizer.kind = OptimizerKind::Adam;
  ref.optimizer.lr = 0.01;
  ref.iterations = 200;
  ref.batch = 16;
  const TrainLog log = train(spec, theta0, ref);
  double best = detail::kNegInf;
  for (const auto& r : log.records)
    if (std::isfinite(r.reward_mean)) best = std::max(best, r.reward_mean);
  const double r0 = eval_reward(spec, theta0, ref.eval_samples, ref.eval_seed);
  k.delta0 = std::max(0.0, best - r0);
  return k;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

inline ExperimentResult run_plan(const ExperimentConfig& c, const RunOptions&) {
  ExperimentResult res;
  res.experiment = "plan";
  const int T = c.chain.T;
  const BudgetModel& bm = c.budget.model;
  bm.validate(T);
  const HStar hs = solve_h_star(bm, T, c.budget.variance);
  res.notes.push_back("h*=" + std::to_string(hs.h));
  res.notes.push_back(std::string("binding=") + to_string(hs.binding));
  res.notes.push_back("budget_term=" + detail::fmt(hs.budget_term));
  res.notes.push_back("variance_term=" + detail::fmt(hs.variance_term));
  res.notes.push_back("vertex=" + detail::fmt(hs.vertex));
  for (const auto& w : hs.warnings) res.notes.push_back("warning: " + w);

  std::ostringstream plan;
  plan << "h,Q,cost\n";
  for (int h = 0; h <= T - 2; ++h)
    plan << h << ',' << detail::fmt(variance_bound_q(h, T, c.budget.variance)) << ','
         << detail::fmt(plan_cost(rlr_plan(T, 2, h), bm)) << '\n';
  res.files.push_back({"plan.csv", plan.str()});

  std::ostringstream sweep;
  sweep << "B,h_star,binding,cost\n";
  constexpr int kSweep = 20;
  const double lo = bm.B_z * T, hi = bm.B_h * T;
  for (int i = 1; i < kSweep; ++i) {
    BudgetModel b = bm;
    b.B = lo + (hi - lo) * i / kSweep;
    const HStar s = solve_h_star(b, T, c.budget.variance);
    const int h = std::min(s.h, T - 2);
    sweep << detail::fmt(b.B) << ',' << s.h << ',' << to_string(s.binding) << ','
          << detail::fmt(plan_cost(rlr_plan(T, 2, h), b)) << '\n';
  }
  res.files.push_back({"budget_sweep.csv", sweep.str()});

  const int h = std::min(hs.h, T - 2);
  const double cost = plan_cost(rlr_plan(T, 2, h), bm);
  res.checks.push_back({"planned cost within budget", cost <= bm.B,
                        "cost=" + detail::fmt(cost) + " B=" + detail::fmt(bm.B)});
  return res;
}

inline ExperimentResult run_bias(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult res;
  res.experiment = "bias";
  const ChainSpec spec = build_chain(c.chain);
  const ParamVector theta = initial_params(c.chain, spec.backbone);
  const long long n = c.run.n_samples;
  const MCStats full = estimator_stats(spec, theta, EstimatorConfig::of(EstimatorKind::FullBp), n,
                                       detail::mc_seed(c, o, 0), o.workers);

  std::vector<EstimatorConfig> rows{estimator_config(c, EstimatorKind::Rlr),
                                    EstimatorConfig::of(EstimatorKind::ScoreRl)};
  for (int tp : c.estimator.T_prime) rows.push_back(EstimatorConfig::of(EstimatorKind::TruncatedBp, tp));
  rows.push_back(EstimatorConfig::of(EstimatorKind::PureZo));

  std::ostringstream csv;
  csv << "estimator,n,flags,expected_flags,max_abs_z,biased\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const EstimatorConfig& e = rows[i];
    const MCStats st = estimator_stats(spec, theta, e, n, detail::mc_seed(c, o, i + 1), o.workers);
    const UnbiasednessReport rep = compare_means(st, full, c.run.k_sigma);
    const bool biased = !rep.pass;
    csv << detail::label(e) << ',' << n << ',' << rep.flags << ',' << detail::fmt(rep.expected_flags)
        << ',' << detail::fmt(rep.max_abs_z) << ',' << (biased ? "true" : "false") << '\n';
    const std::string info = "flags=" + std::to_string(rep.flags) +
                               " max|z|=" + detail::fmt(rep.max_abs_z);
    switch (e.kind) {
      case EstimatorKind::Rlr:
      case EstimatorKind::ScoreRl:
        res.checks.push_back({detail::label(e) + " unbiased", !biased, info});
        break;
      case EstimatorKind::TruncatedBp:
        if (e.T_prime < spec.T) res.checks.push_back({detail::label(e) + " flagged biased", biased, info});
        else res.checks.push_back({detail::label(e) + " unbiased", !biased, info});
        break;
      default:
        res.notes.push_back(detail::label(e) + " (perturbed process, not asserted): " + info +
                            (biased ? " biased" : " unbiased"));
    }
  }
  res.files.push_back({"bias.csv", csv.str()});
  return res;
}

struct VarianceRow {
  std::string label;
  int h = -1;
  double trace = 0.0;
  double cost = 0.0;
};

inline std::vector<VarianceRow> variance_table(const ChainSpec& spec, const ParamVector& theta,
                                               const BudgetModel& bm, long long n,
                                               const std::function<std::uint64_t(std::uint64_t)>& seed,
                                               int workers) {
  std::vector<std::pair<EstimatorConfig, EstimatorPlan>> rows;
  rows.push_back({EstimatorConfig::of(EstimatorKind::FullBp), full_bp_plan(spec.T)});
  for (int h = 0; h <= std::min(3, spec.T - 2); ++h) rows.push_back({EstimatorConfig::rlr(h), rlr_plan(spec.T, 2, h)});
  rows.push_back({EstimatorConfig::of(EstimatorKind::ScoreRl), score_rl_plan(spec.T)});
  rows.push_back({EstimatorConfig::of(EstimatorKind::PureZo), pure_zo_plan(spec.T)});
  std::vector<VarianceRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [e, plan] = rows[i];
    const MCStats st = estimator_stats(spec, theta, e, n, seed(i), workers);
    out.push_back({detail::label(e), e.kind == EstimatorKind::Rlr ? e.h : -1, st.trace_variance(),
                   plan_cost(plan, bm)});
  }
  return out;
}

/// full-BP <= RLR(h=2) <= RLR(h=0) <= pure-ZO, each by a 5% margin, and a 2x
/// gap between the ends.
inline std::vector<Check> variance_ordering_checks(const std::vector<VarianceRow>& rows) {
  auto find = [&](const std::string& l) -> const VarianceRow* {
    for (const auto& r : rows)
      if (r.label == l) return &r;
    return nullptr;
  };
  std::vector<Check> out;
  const std::vector<std::string> order{"full-bp", "rlr-h2", "rlr-h0", "pure-zo"};
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const VarianceRow* a = find(order[i]);
    const VarianceRow* b = find(order[i + 1]);
    const std::string name = order[i] + " <= " + order[i + 1] + " (5% margin)";
    if (!a || !b) {
      out.push_back({name, false, "row missing"});
      continue;
    }
    out.push_back({name, 1.05 * a->trace <= b->trace,
                   detail::fmt(a->trace) + " vs " + detail::fmt(b->trace)});
  }
  const VarianceRow* f = find("full-bp");
  const VarianceRow* z = find("pure-zo");
  if (f && z)
    out.push_back({"pure-zo >= 2x full-bp", z->trace >= 2.0 * f->trace,
                   "ratio=" + detail::fmt(z->trace / f->trace)});
  return out;
}

inline ExperimentResult run_variance(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult res;
  res.experiment = "variance";
  const ChainSpec spec = build_chain(c.chain);
  const ParamVector theta = initial_params(c.chain, spec.backbone);
  const auto rows = variance_table(spec, theta, c.budget.model, c.run.n_samples,
                                   [&](std::uint64_t i) { return detail::mc_seed(c, o, i); }, o.workers);
  std::ostringstream csv;
  csv << "estimator,h,n,trace_variance,cost_units\n";
  for (const auto& r : rows)
    csv << r.label << ',' << (r.h >= 0 ? std::to_string(r.h) : "") << ',' << c.run.n_samples << ','
        << detail::fmt(r.trace) << ',' << detail::fmt(r.cost) << '\n';
  res.files.push_back({"variance.csv", csv.str()});
  res.checks = variance_ordering_checks(rows);
  return res;
}

struct CurveSet {
  std::string label;
  std::vector<TrainLog> logs;
  std::vector<double> median_curve;
  double median_final = 0.0;
  int collapsed_runs = 0;
};

inline CurveSet train_seeds(const ChainSpec& spec, const ParamVector& theta0, const ExperimentConfig& c,
                            const EstimatorConfig& est, const RunOptions& o) {
  CurveSet cs;
  cs.label = detail::label(est);
  const std::size_t len = static_cast<std::size_t>(c.run.iterations);
  std::vector<std::vector<double>> curves;
  std::vector<double> finals;
  for (auto s : detail::seeds(c, o)) {
    cs.logs.push_back(train(spec, theta0, train_config(c, est, s, o)));
    curves.push_back(detail::padded_rewards(cs.logs.back(), len));
    finals.push_back(curves.back().back());
    cs.collapsed_runs += cs.logs.back().collapsed ? 1 : 0;
  }
  for (std::size_t k = 0; k < len; ++k) {
    std::vector<double> at;
    for (const auto& cv : curves) at.push_back(cv[k]);
    cs.median_curve.push_back(detail::median(at));
  }
  cs.median_final = detail::median(finals);
  return cs;
}

inline void add_run_rows(std::ostringstream& os, const CurveSet& cs, const ExperimentConfig& c,
                         const RunOptions& o) {
  const auto seeds = detail::seeds(c, o);
  for (std::size_t i = 0; i < cs.logs.size(); ++i)
    os << cs.label << ',' << seeds[i] << ','
       << detail::fmt(detail::final_reward(cs.logs[i], std::size_t(c.run.iterations))) << ','
       << cs.logs[i].records.size() << ',' << (cs.logs[i].collapsed ? "true" : "false") << '\n';
}

inline ExperimentResult run_truncation(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult res;
  res.experiment = "truncation";
  const ChainSpec spec = build_chain(c.chain);
  const ParamVector theta0 = initial_params(c.chain, spec.backbone);

  std::vector<CurveSet> sets;
  sets.push_back(train_seeds(spec, theta0, c, estimator_config(c, EstimatorKind::Rlr), o));
  for (int tp : c.estimator.T_prime)
    sets.push_back(train_seeds(spec, theta0, c, EstimatorConfig::of(EstimatorKind::TruncatedBp, tp), o));

  std::ostringstream curves, runs;
  curves << "iter";
  for (const auto& s : sets) curves << ',' << s.label << "_median";
  curves << '\n';
  for (std::size_t k = 0; k < sets.front().median_curve.size(); ++k) {
    curves << k;
    for (const auto& s : sets) curves << ',' << detail::fmt(s.median_curve[k]);
    curves << '\n';
  }
  runs << "estimator,seed,final_reward,records,collapsed\n";
  for (const auto& s : sets) add_run_rows(runs, s, c, o);
  res.files.push_back({"curves.csv", curves.str()});
  res.files.push_back({"runs.csv", runs.str()});

  const CurveSet& rlr = sets.front();
  for (const auto& s : sets)
    res.notes.push_back(s.label + ": median final reward " + detail::fmt(s.median_final) + ", collapsed runs " +
                        std::to_string(s.collapsed_runs) + "/" + std::to_string(s.logs.size()));
  for (std::size_t i = 1; i < sets.size(); ++i) {
    if (c.estimator.T_prime[i - 1] != 1) continue;
    const CurveSet& tr = sets[i];
    const double gap_line = rlr.median_final - 0.2 * std::abs(rlr.median_final);
    const bool below = tr.median_final <= gap_line;
    const bool flagged = 2 * tr.collapsed_runs > int(tr.logs.size());
    res.checks.push_back({tr.label + " 20% below rlr or collapsed", below || flagged,
                          "median final " + detail::fmt(tr.median_final) + " vs rlr " +
                              detail::fmt(rlr.median_final) + ", collapsed " +
                              std::to_string(tr.collapsed_runs)});
  }
  const auto smooth = detail::smooth(rlr.median_curve, 10);
  res.checks.push_back({rlr.label + " median curve non-decreasing (window 10)",
                        !smooth.empty() && detail::non_decreasing(smooth),
                        "from " + detail::fmt(smooth.empty() ? 0.0 : smooth.front()) + " to " +
                            detail::fmt(smooth.empty() ? 0.0 : smooth.back())});
  return res;
}

/// First iteration whose logged reward reaches the threshold; `censor` when none does.
inline int iterations_to_threshold(const TrainLog& log, double threshold, int censor) {
  for (const auto& r : log.records)
    if (std::isfinite(r.reward_mean) && r.reward_mean >= threshold) return r.iter;
  return censor;
}

inline ExperimentResult run_train(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult res;
  res.experiment = "train";
  const ChainSpec spec = build_chain(c.chain);
  const ParamVector theta0 = initial_params(c.chain, spec.backbone);
  const auto seeds = detail::seeds(c, o);

  std::vector<CurveSet> sets;
  std::ostringstream conv;
  conv << "estimator,seed,L,delta0,sigma2,step_size,observed,bound,pass\n";
  bool any_conv = false;
  for (EstimatorKind kind : c.estimator.kinds) {
    const EstimatorConfig est = estimator_config(c, kind, c.estimator.T_prime.front());
    CurveSet cs;
    cs.label = detail::label(est);
    for (auto s : seeds) {
      TrainConfig tc = train_config(c, est, s, o);
      ConvergenceConstants k;
      if (c.run.optimizer == OptimizerKind::SgdTheorem2) {
        k = estimate_constants(spec, theta0, c, est, s, o);
        tc.optimizer.L = k.L;
        tc.optimizer.delta0 = k.delta0;
        tc.optimizer.sigma2 = k.sigma2;
      }
      TrainLog log = train(spec, theta0, tc);
      const std::string stem = cs.label + "_seed" + std::to_string(s);
      res.files.push_back({"train_" + stem + ".csv", detail::train_csv(log)});
      res.files.push_back({"params_" + stem + ".bin", detail::params_blob(spec.backbone, log.final_params)});
      if (c.run.optimizer == OptimizerKind::SgdTheorem2) {
        any_conv = true;
        const ConvergenceReport rep = convergence_report(spec, log, k.L, k.delta0, k.sigma2, c.run.grad_samples,
                                                         s, o.workers);
        const double gamma = theorem2_step_size(k.L, k.delta0, k.sigma2, c.run.iterations - 1);
        conv << cs.label << ',' << s << ',' << detail::fmt(k.L) << ',' << detail::fmt(k.delta0) << ','
             << detail::fmt(k.sigma2) << ',' << detail::fmt(gamma) << ',' << detail::fmt(rep.observed) << ','
             << detail::fmt(rep.bound) << ',' << (rep.pass ? "true" : "false") << '\n';
        res.checks.push_back({"convergence bound " + stem, rep.pass,
                              "observed=" + detail::fmt(rep.observed) + " bound=" + detail::fmt(rep.bound)});
        bool step_ok = true;
        for (const auto& r : log.records) step_ok = step_ok && r.step_size <= 1.0 / k.L;
        res.checks.push_back({"step size <= 1/L " + stem, step_ok, "gamma=" + detail::fmt(gamma)});
      }
      cs.collapsed_runs += log.collapsed ? 1 : 0;
      cs.logs.push_back(std::move(log));
    }
    res.notes.push_back(cs.label + ": collapsed runs " + std::to_string(cs.collapsed_runs) + "/" +
                        std::to_string(cs.logs.size()));
    sets.push_back(std::move(cs));
  }
  if (any_conv) res.files.push_back({"convergence.csv", conv.str()});

  auto find = [&](const std::string& l) -> const CurveSet* {
    for (const auto& s : sets)
      if (s.label == l) return &s;
    return nullptr;
  };
  const CurveSet* full = find("full-bp");
  const CurveSet* score = find("score-rl");
  const CurveSet* rlr = nullptr;
  for (const auto& s : sets)
    if (s.label.rfind("rlr", 0) == 0) rlr = &s;
  if (full && score && rlr) {
    const std::size_t len = std::size_t(c.run.iterations);
    std::vector<double> finals;
    for (const auto& l : full->logs) finals.push_back(detail::final_reward(l, len));
    const double r0 = full->logs.front().records.front().reward_mean;
    const double threshold = r0 + c.run.threshold * (detail::median(finals) - r0);
    std::ostringstream eff;
    eff << "estimator,seed,iterations_to_threshold,reached,final_reward\n";
    auto med_iters = [&](const CurveSet& cs) {
      std::vector<double> its;
      for (std::size_t i = 0; i < cs.logs.size(); ++i) {
        const int it = iterations_to_threshold(cs.logs[i], threshold, c.run.iterations);
        its.push_back(it);
        eff << cs.label << ',' << seeds[i] << ',' << it << ',' << (it < c.run.iterations ? "true" : "false") << ','
            << detail::fmt(detail::final_reward(cs.logs[i], len)) << '\n';
      }
      return detail::median(its);
    };
    med_iters(*full);
    const double m_rlr = med_iters(*rlr);
    const double m_score = med_iters(*score);
    res.files.push_back({"efficiency.csv", eff.str()});
    res.notes.push_back("threshold=" + detail::fmt(threshold) + " (R0=" + detail::fmt(r0) + ")");
    res.checks.push_back({rlr->label + " reaches threshold in <= 0.5x score-rl iterations",
                          m_rlr <= 0.5 * m_score,
                          "median " + detail::fmt(m_rlr) + " vs " + detail::fmt(m_score) +
                              " (unreached runs count as " + std::to_string(c.run.iterations) + ")"});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

struct Criterion {
  int id = 0;
  std::string name;
  double time_limit_s = 0.0;
  std::function<Check(const ExperimentConfig& reference, const RunOptions&)> run;
};

namespace criteria {

inline Check vjp_probes(const ExperimentConfig&, const RunOptions& o) {
  double worst = 0.0;
  for (BackboneKind kind : {BackboneKind::LinearAffine, BackboneKind::MlpTanh}) {
    for (int k = 0; k < 100; ++k) {
      Engine eng = make_engine(o.seed_offset, std::uint64_t(k), stream::kProbe + std::uint64_t(kind));
      std::uniform_int_distribution<int> dim(1, 3), hid(1, 5), step(1, 5), coin(0, 1);
      const int d = dim(eng);
      const bool tc = coin(eng) == 1;
      const Backbone bb = kind == BackboneKind::LinearAffine ? Backbone::linear(d, tc, 5)
                                                             : Backbone::mlp(d, hid(eng), tc, 5);
      const ParamVector p = init_params(bb, eng(), 1.0);
      const Vector x = normal_vector(eng, d);
      const Vector v = normal_vector(eng, d);
      const int t = step(eng);
      const BackboneVjp vjp = backbone_vjp(bb, p, x, t, v);
      const Vector fx = fd_gradient([&](const Vector& xx) { return v.dot(backbone_forward(bb, p, xx, t)); }, x, 1e-5);
      const Vector fp = fd_gradient([&](const Vector& pp) { return v.dot(backbone_forward(bb, pp, x, t)); }, p, 1e-5);
      worst = std::max({worst, max_rel_error(vjp.dx, fx), max_rel_error(vjp.dtheta, fp)});
    }
  }
  return {"", worst < 1e-6, "max rel err " + detail::fmt(worst)};
}

inline Check pathwise_oracle(const ExperimentConfig&, const RunOptions& o) {
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Engine eng = make_engine(o.seed_offset, std::uint64_t(k), stream::kProbe);
    std::uniform_int_distribution<int> horizon(3, 6), dim(1, 3), hid(2, 4);
    std::uniform_real_distribution<double> sig(0.05, 0.3);
    const int T = horizon(eng), d = dim(eng);
    const Backbone bb = k % 2 ? Backbone::mlp(d, hid(eng), k % 4 == 1, T) : Backbone::linear(d, k % 4 == 0, T);
    const RewardFn reward = k % 3 == 2 ? RewardFn::random_mlp(eng(), d) : RewardFn::neg_quadratic(normal_vector(eng, d));
    const ChainSpec spec = ChainSpec::make(T, constant_schedule(T, sig(eng)), 1e-2, bb, reward);
    const ParamVector theta = init_params(spec.backbone, eng(), 0.5);
    const EstimatorPlan plan = full_bp_plan(T);
    const NoiseDraw noise = draw_noise(spec, plan, eng());
    const Vector g = grad_full_bp(spec, theta, noise).grad;
    const Vector fd = fd_gradient([&](const Vector& p) { return forward_chain(spec, plan, p, noise).reward_value; },
                                  theta, 1e-5);
    worst = std::max(worst, max_rel_error(g, fd));
  }
  return {"", worst < 1e-5, "max rel err " + detail::fmt(worst)};
}

inline Check unbiasedness(const ExperimentConfig& ref, const RunOptions& o) {
  const ChainSpec spec = build_chain(ref.chain);
  const ParamVector theta = initial_params(ref.chain, spec.backbone);
  const UnbiasednessReport r = unbiasedness_report(
      spec, theta, EstimatorConfig::rlr(2), EstimatorConfig::of(EstimatorKind::FullBp), 200000, 4.0,
      derive_seed(o.seed_offset, 1, stream::kReplicate), derive_seed(o.seed_offset, 2, stream::kReplicate),
      o.workers);
  return {"", r.pass,
          "flags " + std::to_string(r.flags) + " (allowed " + detail::fmt(r.expected_flags) + "), max|z| " +
              detail::fmt(r.max_abs_z)};
}

inline Check structural_bias(const ExperimentConfig&, const RunOptions& o) {
  const int T = 4;
  const std::vector<double> sig{0.3, 0.2, 0.25, 0.15};
  const double w = 0.8, b = 0.1, c0 = 0.7, target = 1.5;
  const ChainSpec spec = ChainSpec::make(T, sig, 1e-2, Backbone::linear(1),
                                         RewardFn::neg_quadratic(Vector::Constant(1, target)), Vector::Constant(1, c0));
  ParamVector theta(2);
  theta << w, b;
  const oracle::ScalarLinearChain lin{T, w, b, c0, target, sig};
  const EstimatorPlan plan = full_bp_plan(T);

  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const NoiseDraw noise = draw_noise(spec, plan, derive_seed(o.seed_offset, std::uint64_t(k), stream::kProbe));
    std::vector<double> z;
    for (int t = 1; t <= T; ++t) z.push_back(noise.latent_noise.at(t)[0]);
    const Vector full = grad_full_bp(spec, theta, noise).grad;
    const Vector trunc = grad_truncated_bp(spec, theta, noise, 2).grad;
    const Eigen::Vector2d bias = lin.contributions(z, 3, 4);
    worst = std::max(worst, (full - trunc - bias).cwiseAbs().maxCoeff());
    worst = std::max(worst, (full - lin.contributions(z, 1, 4)).cwiseAbs().maxCoeff());
  }

  const MCStats st = truncation_bias_stats(spec, theta, 2, 100000, derive_seed(o.seed_offset, 3, stream::kReplicate),
                                           o.workers);
  const Eigen::Vector2d expect = lin.expected_contributions(3, 4);
  const Vector zs = ((st.mean - expect).array() / st.standard_error().array()).abs();
  const bool ok = worst < 1e-8 && zs.maxCoeff() <= 3.0;
  return {"", ok, "max abs err " + detail::fmt(worst) + ", MC max|z| " + detail::fmt(zs.maxCoeff())};
}

inline Check variance_ordering(const ExperimentConfig& ref, const RunOptions& o) {
  const ChainSpec spec = build_chain(ref.chain);
  const ParamVector theta = initial_params(ref.chain, spec.backbone);
  const auto rows = variance_table(spec, theta, ref.budget.model, 50000,
                                   [&](std::uint64_t i) { return derive_seed(o.seed_offset, 10 + i, stream::kReplicate); },
                                   o.workers);
  const auto checks = variance_ordering_checks(rows);
  Check out{"", true, ""};
  for (const auto& c : checks) {
    out.pass = out.pass && c.pass;
    out.detail += (out.detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  return out;
}

inline Check planner(const ExperimentConfig&, const RunOptions&) {
  const BudgetModel bm{8.0, 0.24, 30.0};
  const HStar hs = solve_h_star(bm, 50, VarianceProfile{0.01, 1.0});
  const HStar lim = solve_h_star(bm, 50, VarianceProfile{0.0, 1.0});
  const bool ok = hs.h == 2 && std::abs(lim.variance_term - 24.0) < 1e-12;
  return {"", ok, "h*=" + std::to_string(hs.h) + ", variance term at V_h=0 " + detail::fmt(lim.variance_term)};
}

inline Check cost_model(const ExperimentConfig&, const RunOptions&) {
  const BudgetModel bm{8.0, 0.24, 30.0};
  const double rlr = plan_cost(rlr_plan(50, 2, 2), bm);
  const double full = plan_cost(full_bp_plan(50), bm);
  const bool ok = std::abs(rlr - 27.28) < 1e-12 && rlr <= bm.B && full == 400.0 && full > bm.B;
  return {"", ok, "rlr " + detail::fmt(rlr) + ", full-bp " + detail::fmt(full)};
}

inline Check fold(const ExperimentResult& r) {
  Check out{"", r.passed(), ""};
  for (const auto& c : r.checks)
    out.detail += (out.detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
  return out;
}

inline Check truncation_collapse(const ExperimentConfig&, const RunOptions& o) {
  return fold(run_truncation(long_range_setup(), o));
}

inline Check sample_efficiency(const ExperimentConfig&, const RunOptions& o) {
  return fold(run_train(efficiency_setup(), o));
}

inline Check convergence_bound(const ExperimentConfig& ref, const RunOptions& o) {
  ExperimentConfig c = convergence_setup();
  c.chain = ref.chain;
  return fold(run_train(c, o));
}

inline Check dcot_window(const ExperimentConfig&, const RunOptions& o) {
  JSampler s;
  s.policy = JPolicy::Windowed;
  s.window_a = 30;
  s.window_b = 40;
  constexpr int kDraws = 10000, kBins = 11;
  std::vector<int> counts(kBins, 0);
  int outside = 0;
  for (int i = 0; i < kDraws; ++i) {
    const int j = sample_j(s, 2, 50, derive_seed(o.seed_offset, std::uint64_t(i), stream::kReplicate));
    if (j < 30 || j > 40) ++outside;
    else ++counts[std::size_t(j - 30)];
  }
  const double expect = double(kDraws) / kBins;
  double chi2 = 0.0;
  for (int n : counts) chi2 += (n - expect) * (n - expect) / expect;
  const double crit = boost::math::quantile(boost::math::chi_squared(kBins - 1), 0.99);
  return {"", outside == 0 && chi2 < crit,
          "outside " + std::to_string(outside) + ", chi2 " + detail::fmt(chi2) + " < " + detail::fmt(crit)};
}

}  // namespace criteria

inline std::vector<Criterion> acceptance_criteria() {
  return {
      {1, "VJP agrees with central differences", 5, criteria::vjp_probes},
      {2, "full-BP gradient matches frozen-noise FD", 10, criteria::pathwise_oracle},
      {3, "RLR(h=2) unbiased against full BP", 180, criteria::unbiasedness},
      {4, "truncation bias closed form", 30, criteria::structural_bias},
      {5, "trace variance ordering", 120, criteria::variance_ordering},
      {6, "planner h* and variance term", 1, criteria::planner},
      {7, "cost model", 1, criteria::cost_model},
      {8, "truncated BP collapses on the long-range reward", 300, criteria::truncation_collapse},
      {9, "RLR sample efficiency against score-RL", 300, criteria::sample_efficiency},
      {10, "convergence bound holds", 180, criteria::convergence_bound},
      {11, "windowed j sampler", 5, criteria::dcot_window},
  };
}

inline ExperimentResult run_selftest(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult res;
  res.experiment = "selftest";
  std::ostringstream csv;
  csv << "criterion,name,pass\n";
  for (const auto& cr : acceptance_criteria()) {
    Check ch;
    try {
      ch = cr.run(c, o);
    } catch (const std::exception& e) {
      ch = {"", false, std::string("error: ") + e.what()};
    }
    ch.name = "[" + std::to_string(cr.id) + "] " + cr.name;
    csv << cr.id << ',' << cr.name << ',' << (ch.pass ? "true" : "false") << '\n';
    res.checks.push_back(std::move(ch));
  }
  res.files.push_back({"selftest.csv", csv.str()});
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& o = {}) {
  switch (c.experiment) {
    case Experiment::Plan: return run_plan(c, o);
    case Experiment::Bias: return run_bias(c, o);
    case Experiment::Variance: return run_variance(c, o);
    case Experiment::Truncation: return run_truncation(c, o);
    case Experiment::Train: return run_train(c, o);
    case Experiment::Selftest: return run_selftest(c, o);
  }
  throw ContractViolation("run_experiment: unknown experiment");
}

}  // namespace rlr

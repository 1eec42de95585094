#pragma once

// Experiment configuration in a flat line format:
//
//   # comment
//   experiment = bias
//   chain.T = 5
//   chain.target = 0.5, -0.5
//
// Parsing is strict. Every problem found (unknown key, duplicate, bad value,
// missing section, violated invariant) is collected with its line number and
// reported together.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rlr/chain.hpp"
#include "rlr/diffcore.hpp"
#include "rlr/errors.hpp"
#include "rlr/param_io.hpp"
#include "rlr/planner.hpp"
#include "rlr/trainer.hpp"

namespace rlr {

enum class Experiment { Plan, Bias, Variance, Truncation, Train, Selftest };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::Plan: return "plan";
    case Experiment::Bias: return "bias";
    case Experiment::Variance: return "variance";
    case Experiment::Truncation: return "truncation";
    case Experiment::Train: return "train";
    case Experiment::Selftest: return "selftest";
  }
  return "?";
}

enum class Schedule { Constant, Geometric, LinearBeta };
enum class RewardKind { NegQuadratic, Rosenbrock, RandomMlp };
enum class InitKind { Random, Identity };

struct ChainConfig {
  int T = 5;
  int d = 2;
  int m = 4;
  BackboneKind backbone = BackboneKind::MlpTanh;
  bool time_conditioning = false;
  Schedule schedule = Schedule::Constant;
  double sigma = 0.1;
  double sigma_start = 0.5;  // geometric: sigma_T
  double sigma_end = 0.01;   // geometric: sigma_1
  double beta_start = 1e-4;  // linear-beta: beta_1
  double beta_end = 0.02;    // linear-beta: beta_T
  double sigma_param = 1e-2;
  RewardKind reward = RewardKind::NegQuadratic;
  std::vector<double> target{0.5, -0.5};
  std::uint64_t reward_seed = 0;
  std::vector<double> x_T;  // empty: x_T ~ N(0, I)
  InitKind init = InitKind::Random;
  std::uint64_t init_seed = 0;
  double init_scale = 1.0;
  double init_gain = 1.0;
};

struct EstimatorSection {
  std::vector<EstimatorKind> kinds{EstimatorKind::Rlr};
  std::optional<int> h = 2;  // nullopt: h* from the planner
  JPolicy policy = JPolicy::Uniform;
  int window_a = 0;
  int window_b = 0;
  double temperature = 1.0;
  std::vector<int> T_prime{1};
  bool allow_j1 = false;
};

struct BudgetSection {
  BudgetModel model;
  VarianceProfile variance;
};

struct RunSection {
  std::vector<std::uint64_t> seeds{0};
  long long n_samples = 20000;
  int iterations = 100;
  int batch = 8;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 5e-4;
  double k_sigma = 4.0;
  int eval_samples = 64;
  double threshold = 0.9;
  int collapse_window = 10;
  double collapse_drop = 0.5;
  int probes = 100;
  long long grad_samples = 1000;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Selftest;
  std::string output = "out";
  ChainConfig chain;
  EstimatorSection estimator;
  BudgetSection budget;
  RunSection run;
  std::set<std::string> sections;  // sections with at least one key
};

struct ConfigIssue {
  int line = 0;  // 0 when the issue has no single source line
  std::string message;

  std::string str() const {
    return line > 0 ? "line " + std::to_string(line) + ": " + message : message;
  }
};

class ConfigParseError : public ConfigError {
 public:
  explicit ConfigParseError(std::vector<ConfigIssue> issues)
      : ConfigError(join(issues)), issues_(std::move(issues)) {}

  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<ConfigIssue>& issues) {
    std::string s;
    for (const auto& i : issues) {
      if (!s.empty()) s += "; ";
      s += i.str();
    }
    return s;
  }

  std::vector<ConfigIssue> issues_;
};

namespace detail {

struct BadValue {
  std::string message;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_integer(std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw BadValue{"expected an integer, got '" + std::string(v) + "'"};
  return out;
}

inline double parse_real(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    throw BadValue{"expected a real number, got '" + std::string(v) + "'"};
  return out;
}

inline bool parse_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw BadValue{"expected true or false, got '" + std::string(v) + "'"};
}

template <class E>
E parse_choice(std::string_view v, std::initializer_list<std::pair<const char*, E>> choices) {
  std::string names;
  for (const auto& [name, e] : choices) {
    if (v == name) return e;
    names += names.empty() ? "" : ", ";
    names += name;
  }
  throw BadValue{"expected one of {" + names + "}, got '" + std::string(v) + "'"};
}

template <class Fn>
auto parse_list(std::string_view v, Fn&& item) {
  std::vector<decltype(item(std::string_view{}))> out;
  if (trim(v).empty()) throw BadValue{"expected a non-empty list"};
  std::size_t pos = 0;
  for (;;) {
    const auto comma = v.find(',', pos);
    const auto piece = trim(v.substr(pos, comma == std::string_view::npos ? v.npos : comma - pos));
    if (piece.empty()) throw BadValue{"empty list element"};
    out.push_back(item(piece));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline EstimatorKind parse_estimator_kind(std::string_view v) {
  return parse_choice<EstimatorKind>(v, {{"rlr", EstimatorKind::Rlr},
                                         {"full-bp", EstimatorKind::FullBp},
                                         {"truncated-bp", EstimatorKind::TruncatedBp},
                                         {"score-rl", EstimatorKind::ScoreRl},
                                         {"pure-zo", EstimatorKind::PureZo}});
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

inline const std::map<std::string, Setter, std::less<>>& key_table() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto integer = [](auto member) {
      return [member](ExperimentConfig& c, std::string_view v) {
        using T = std::decay_t<decltype(member(c))>;
        member(c) = parse_integer<T>(v);
      };
    };
    auto real = [](auto member) {
      return [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_real(v); };
    };
    auto boolean = [](auto member) {
      return [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_bool(v); };
    };

    t["experiment"] = [](ExperimentConfig& c, std::string_view v) {
      c.experiment = parse_choice<Experiment>(
          v, {{"plan", Experiment::Plan}, {"bias", Experiment::Bias},
              {"variance", Experiment::Variance}, {"truncation", Experiment::Truncation},
              {"train", Experiment::Train}, {"selftest", Experiment::Selftest}});
    };
    t["output"] = [](ExperimentConfig& c, std::string_view v) {
      if (v.empty()) throw BadValue{"expected a path"};
      c.output = std::string(v);
    };

    t["chain.T"] = integer([](ExperimentConfig& c) -> int& { return c.chain.T; });
    t["chain.d"] = integer([](ExperimentConfig& c) -> int& { return c.chain.d; });
    t["chain.m"] = integer([](ExperimentConfig& c) -> int& { return c.chain.m; });
    t["chain.backbone"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.backbone = parse_choice<BackboneKind>(
          v, {{"linear", BackboneKind::LinearAffine}, {"mlp-tanh", BackboneKind::MlpTanh}});
    };
    t["chain.time_conditioning"] = boolean([](ExperimentConfig& c) -> bool& { return c.chain.time_conditioning; });
    t["chain.schedule"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.schedule = parse_choice<Schedule>(
          v, {{"constant", Schedule::Constant}, {"geometric", Schedule::Geometric},
              {"linear-beta", Schedule::LinearBeta}});
    };
    t["chain.sigma"] = real([](ExperimentConfig& c) -> double& { return c.chain.sigma; });
    t["chain.sigma_start"] = real([](ExperimentConfig& c) -> double& { return c.chain.sigma_start; });
    t["chain.sigma_end"] = real([](ExperimentConfig& c) -> double& { return c.chain.sigma_end; });
    t["chain.beta_start"] = real([](ExperimentConfig& c) -> double& { return c.chain.beta_start; });
    t["chain.beta_end"] = real([](ExperimentConfig& c) -> double& { return c.chain.beta_end; });
    t["chain.sigma_param"] = real([](ExperimentConfig& c) -> double& { return c.chain.sigma_param; });
    t["chain.reward"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.reward = parse_choice<RewardKind>(
          v, {{"neg-quadratic", RewardKind::NegQuadratic}, {"rosenbrock", RewardKind::Rosenbrock},
              {"random-mlp", RewardKind::RandomMlp}});
    };
    t["chain.target"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.target = parse_list(v, parse_real);
    };
    t["chain.reward_seed"] = integer([](ExperimentConfig& c) -> std::uint64_t& { return c.chain.reward_seed; });
    t["chain.x_T"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.x_T = parse_list(v, parse_real);
    };
    t["chain.init"] = [](ExperimentConfig& c, std::string_view v) {
      c.chain.init = parse_choice<InitKind>(v, {{"random", InitKind::Random}, {"identity", InitKind::Identity}});
    };
    t["chain.init_seed"] = integer([](ExperimentConfig& c) -> std::uint64_t& { return c.chain.init_seed; });
    t["chain.init_scale"] = real([](ExperimentConfig& c) -> double& { return c.chain.init_scale; });
    t["chain.init_gain"] = real([](ExperimentConfig& c) -> double& { return c.chain.init_gain; });

    t["estimator.kind"] = [](ExperimentConfig& c, std::string_view v) {
      c.estimator.kinds = parse_list(v, parse_estimator_kind);
    };
    t["estimator.h"] = [](ExperimentConfig& c, std::string_view v) {
      if (v == "auto") c.estimator.h.reset();
      else c.estimator.h = parse_integer<int>(v);
    };
    t["estimator.j_policy"] = [](ExperimentConfig& c, std::string_view v) {
      c.estimator.policy = parse_choice<JPolicy>(
          v, {{"uniform", JPolicy::Uniform}, {"softmax-gradnorm", JPolicy::SoftmaxGradNorm},
              {"windowed", JPolicy::Windowed}});
    };
    t["estimator.window_a"] = integer([](ExperimentConfig& c) -> int& { return c.estimator.window_a; });
    t["estimator.window_b"] = integer([](ExperimentConfig& c) -> int& { return c.estimator.window_b; });
    t["estimator.temperature"] = real([](ExperimentConfig& c) -> double& { return c.estimator.temperature; });
    t["estimator.T_prime"] = [](ExperimentConfig& c, std::string_view v) {
      c.estimator.T_prime = parse_list(v, parse_integer<int>);
    };
    t["estimator.allow_j1"] = boolean([](ExperimentConfig& c) -> bool& { return c.estimator.allow_j1; });

    t["budget.B"] = real([](ExperimentConfig& c) -> double& { return c.budget.model.B; });
    t["budget.B_h"] = real([](ExperimentConfig& c) -> double& { return c.budget.model.B_h; });
    t["budget.B_z"] = real([](ExperimentConfig& c) -> double& { return c.budget.model.B_z; });
    t["budget.V_h"] = real([](ExperimentConfig& c) -> double& { return c.budget.variance.V_h; });
    t["budget.V_z"] = real([](ExperimentConfig& c) -> double& { return c.budget.variance.V_z; });

    t["run.seeds"] = [](ExperimentConfig& c, std::string_view v) {
      c.run.seeds = parse_list(v, parse_integer<std::uint64_t>);
    };
    t["run.n_samples"] = integer([](ExperimentConfig& c) -> long long& { return c.run.n_samples; });
    t["run.iterations"] = integer([](ExperimentConfig& c) -> int& { return c.run.iterations; });
    t["run.batch"] = integer([](ExperimentConfig& c) -> int& { return c.run.batch; });
    t["run.optimizer"] = [](ExperimentConfig& c, std::string_view v) {
      c.run.optimizer = parse_choice<OptimizerKind>(
          v, {{"sgd", OptimizerKind::Sgd}, {"sgd-theorem2", OptimizerKind::SgdTheorem2},
              {"adam", OptimizerKind::Adam}});
    };
    t["run.lr"] = real([](ExperimentConfig& c) -> double& { return c.run.lr; });
    t["run.k_sigma"] = real([](ExperimentConfig& c) -> double& { return c.run.k_sigma; });
    t["run.eval_samples"] = integer([](ExperimentConfig& c) -> int& { return c.run.eval_samples; });
    t["run.threshold"] = real([](ExperimentConfig& c) -> double& { return c.run.threshold; });
    t["run.collapse_window"] = integer([](ExperimentConfig& c) -> int& { return c.run.collapse_window; });
    t["run.collapse_drop"] = real([](ExperimentConfig& c) -> double& { return c.run.collapse_drop; });
    t["run.probes"] = integer([](ExperimentConfig& c) -> int& { return c.run.probes; });
    t["run.grad_samples"] = integer([](ExperimentConfig& c) -> long long& { return c.run.grad_samples; });
    return t;
  }();
  return table;
}

inline std::vector<std::string> required_sections(Experiment e) {
  switch (e) {
    case Experiment::Plan: return {"chain", "budget"};
    case Experiment::Bias:
    case Experiment::Variance:
    case Experiment::Selftest: return {"chain", "run"};
    case Experiment::Truncation:
    case Experiment::Train: return {"chain", "estimator", "run"};
  }
  return {};
}

}  // namespace detail

/// Noise schedule of the configured chain.
inline std::vector<double> build_schedule(const ChainConfig& c) {
  switch (c.schedule) {
    case Schedule::Constant: return constant_schedule(c.T, c.sigma);
    case Schedule::Geometric: return geometric_schedule(c.T, c.sigma_start, c.sigma_end);
    case Schedule::LinearBeta: return linear_beta_schedule(c.T, c.beta_start, c.beta_end);
  }
  return {};
}

inline ChainSpec build_chain(const ChainConfig& c) {
  const Backbone bb = c.backbone == BackboneKind::LinearAffine
                          ? Backbone::linear(c.d, c.time_conditioning, c.T)
                          : Backbone::mlp(c.d, c.m, c.time_conditioning, c.T);
  RewardFn reward;
  switch (c.reward) {
    case RewardKind::NegQuadratic:
      reward = RewardFn::neg_quadratic(Eigen::Map<const Vector>(c.target.data(), Eigen::Index(c.target.size())));
      break;
    case RewardKind::Rosenbrock: reward = RewardFn::rosenbrock(); break;
    case RewardKind::RandomMlp: reward = RewardFn::random_mlp(c.reward_seed, c.d); break;
  }
  std::optional<Vector> start;
  if (!c.x_T.empty()) start = Eigen::Map<const Vector>(c.x_T.data(), Eigen::Index(c.x_T.size()));
  return ChainSpec::make(c.T, build_schedule(c), c.sigma_param, bb, std::move(reward), std::move(start));
}

inline ParamVector initial_params(const ChainConfig& c, const Backbone& bb) {
  return c.init == InitKind::Identity ? identity_params(bb, c.init_gain)
                                      : init_params(bb, c.init_seed, c.init_scale);
}

/// The configured h, or h* from the planner capped at T-2.
inline int resolve_h(const ExperimentConfig& cfg) {
  if (cfg.estimator.h) return *cfg.estimator.h;
  return std::min(solve_h_star(cfg.budget.model, cfg.chain.T, cfg.budget.variance).h, cfg.chain.T - 2);
}

inline EstimatorConfig estimator_config(const ExperimentConfig& cfg, EstimatorKind kind, int T_prime = 1) {
  EstimatorConfig e = EstimatorConfig::of(kind, T_prime);
  if (kind == EstimatorKind::Rlr) {
    e.h = resolve_h(cfg);
    e.sampler.policy = cfg.estimator.policy;
    e.sampler.window_a = cfg.estimator.window_a;
    e.sampler.window_b = cfg.estimator.window_b;
    e.sampler.temperature = cfg.estimator.temperature;
    e.allow_j1 = cfg.estimator.allow_j1;
  }
  return e;
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::vector<ConfigIssue> issues;
  std::map<std::string, int, std::less<>> seen;  // key -> line
  const auto& table = detail::key_table();

  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      issues.push_back({lineno, "expected 'key = value'"});
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) {
      issues.push_back({lineno, "unknown key '" + key + "'"});
      continue;
    }
    if (const auto prev = seen.find(key); prev != seen.end()) {
      issues.push_back({lineno, "duplicate key '" + key + "' (first set on line " +
                                    std::to_string(prev->second) + ", again on line " +
                                    std::to_string(lineno) + ")"});
      continue;
    }
    seen.emplace(key, lineno);
    if (const auto dot = key.find('.'); dot != std::string::npos) cfg.sections.insert(key.substr(0, dot));
    try {
      it->second(cfg, value);
    } catch (const detail::BadValue& e) {
      issues.push_back({lineno, key + ": " + e.message});
    }
  }

  auto line_of = [&](std::string_view key) {
    const auto it = seen.find(key);
    return it == seen.end() ? 0 : it->second;
  };
  auto check = [&](bool ok, std::string_view key, std::string message) {
    if (!ok) issues.push_back({line_of(key), std::string(key) + ": " + std::move(message)});
  };

  if (!seen.count("experiment")) {
    issues.insert(issues.begin(), {0, "experiment missing"});
    throw ConfigParseError(std::move(issues));
  }
  for (const auto& sec : detail::required_sections(cfg.experiment))
    if (!cfg.sections.count(sec))
      issues.push_back({0, "section '" + sec + "' missing (required by experiment '" +
                               to_string(cfg.experiment) + "')"});

  const ChainConfig& ch = cfg.chain;
  check(ch.T >= 3, "chain.T", "must be at least 3");
  check(ch.d >= 1, "chain.d", "must be at least 1");
  check(ch.m >= 1, "chain.m", "must be at least 1");
  check(ch.sigma > 0.0, "chain.sigma", "must be positive");
  check(ch.sigma_start > 0.0 && ch.sigma_end > 0.0, "chain.sigma_start", "geometric endpoints must be positive");
  check(ch.beta_start > 0.0 && ch.beta_end > 0.0, "chain.beta_start", "beta endpoints must be positive");
  check(ch.sigma_param > 0.0, "chain.sigma_param", "must be positive");
  if (ch.reward == RewardKind::NegQuadratic)
    check(int(ch.target.size()) == ch.d, "chain.target", "needs chain.d = " + std::to_string(ch.d) + " entries");
  if (ch.reward == RewardKind::Rosenbrock) check(ch.d == 2, "chain.reward", "rosenbrock needs chain.d = 2");
  check(ch.x_T.empty() || int(ch.x_T.size()) == ch.d, "chain.x_T", "needs chain.d entries");
  check(ch.init != InitKind::Identity || ch.backbone == BackboneKind::LinearAffine, "chain.init",
        "identity initialisation needs a linear backbone");

  const BudgetSection& bu = cfg.budget;
  const bool budget_used = cfg.sections.count("budget") > 0 || cfg.experiment == Experiment::Plan;
  if (budget_used) {
    check(bu.model.B_h > bu.model.B_z && bu.model.B_z > 0.0, "budget.B_h", "need B_h > B_z > 0");
    check(bu.model.B_z * ch.T < bu.model.B && bu.model.B < bu.model.B_h * ch.T, "budget.B",
          "need B_z*T < B < B_h*T");
    check(bu.variance.V_h >= 0.0 && bu.variance.V_h < bu.variance.V_z, "budget.V_h", "need 0 <= V_h < V_z");
  }

  const EstimatorSection& es = cfg.estimator;
  const bool uses_rlr = std::find(es.kinds.begin(), es.kinds.end(), EstimatorKind::Rlr) != es.kinds.end() ||
                        cfg.experiment == Experiment::Bias || cfg.experiment == Experiment::Truncation;
  if (uses_rlr && es.h) {
    const int lo = es.allow_j1 ? 1 : 2;
    check(*es.h >= 0 && *es.h + lo <= ch.T, "estimator.h", "needs 0 <= h <= T-" + std::to_string(lo));
  }
  check(es.h || cfg.sections.count("budget"), "estimator.h", "h = auto needs a budget section");
  check(es.temperature > 0.0, "estimator.temperature", "must be positive");
  if (es.policy == JPolicy::Windowed && es.h) {
    const int a = es.window_a, b = es.window_b, h = *es.h;
    check(1 < a && a < b && b < ch.T - h && b - a > h, "estimator.window_b",
          "window needs 1 < a < b < T-h and b-a > h");
  }
  for (int tp : es.T_prime) check(tp >= 1 && tp <= ch.T, "estimator.T_prime", "entries need 1 <= T' <= T");

  const RunSection& r = cfg.run;
  check(r.n_samples >= 2, "run.n_samples", "must be at least 2");
  check(r.iterations >= 1, "run.iterations", "must be at least 1");
  check(r.batch >= 1, "run.batch", "must be at least 1");
  check(r.eval_samples >= 1, "run.eval_samples", "must be at least 1");
  check(r.k_sigma > 0.0, "run.k_sigma", "must be positive");
  check(r.threshold > 0.0 && r.threshold <= 1.0, "run.threshold", "must be in (0, 1]");
  check(r.collapse_window >= 1, "run.collapse_window", "must be at least 1");
  check(r.probes >= 1, "run.probes", "must be at least 1");
  check(r.grad_samples >= 2, "run.grad_samples", "must be at least 2");

  if (issues.empty()) {
    try {
      build_chain(ch);
    } catch (const ContractViolation& e) {
      issues.push_back({0, std::string("chain: ") + e.what()});
    }
  }
  if (!issues.empty()) throw ConfigParseError(std::move(issues));
  return cfg;
}

inline const char* to_string(Schedule s) {
  switch (s) {
    case Schedule::Constant: return "constant";
    case Schedule::Geometric: return "geometric";
    case Schedule::LinearBeta: return "linear-beta";
  }
  return "?";
}

inline const char* to_string(RewardKind r) {
  switch (r) {
    case RewardKind::NegQuadratic: return "neg-quadratic";
    case RewardKind::Rosenbrock: return "rosenbrock";
    case RewardKind::RandomMlp: return "random-mlp";
  }
  return "?";
}

/// Every key in canonical order; parse_config(format_config(c)) reproduces c.
inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  auto list = [](const auto& xs, auto fmt) {
    std::string s;
    for (const auto& x : xs) {
      if (!s.empty()) s += ", ";
      s += fmt(x);
    }
    return s;
  };
  auto real = [](double v) { return format_double(v); };
  auto num = [](auto v) { return std::to_string(v); };
  const ChainConfig& ch = c.chain;
  os << "experiment = " << to_string(c.experiment) << '\n'
     << "output = " << c.output << '\n'
     << "chain.T = " << ch.T << '\n'
     << "chain.d = " << ch.d << '\n'
     << "chain.m = " << ch.m << '\n'
     << "chain.backbone = " << (ch.backbone == BackboneKind::LinearAffine ? "linear" : "mlp-tanh") << '\n'
     << "chain.time_conditioning = " << (ch.time_conditioning ? "true" : "false") << '\n'
     << "chain.schedule = " << to_string(ch.schedule) << '\n'
     << "chain.sigma = " << real(ch.sigma) << '\n'
     << "chain.sigma_start = " << real(ch.sigma_start) << '\n'
     << "chain.sigma_end = " << real(ch.sigma_end) << '\n'
     << "chain.beta_start = " << real(ch.beta_start) << '\n'
     << "chain.beta_end = " << real(ch.beta_end) << '\n'
     << "chain.sigma_param = " << real(ch.sigma_param) << '\n'
     << "chain.reward = " << to_string(ch.reward) << '\n'
     << "chain.target = " << list(ch.target, real) << '\n'
     << "chain.reward_seed = " << ch.reward_seed << '\n';
  if (!ch.x_T.empty()) os << "chain.x_T = " << list(ch.x_T, real) << '\n';
  os << "chain.init = " << (ch.init == InitKind::Identity ? "identity" : "random") << '\n'
     << "chain.init_seed = " << ch.init_seed << '\n'
     << "chain.init_scale = " << real(ch.init_scale) << '\n'
     << "chain.init_gain = " << real(ch.init_gain) << '\n';
  const EstimatorSection& es = c.estimator;
  os << "estimator.kind = " << list(es.kinds, [](EstimatorKind k) { return std::string(to_string(k)); }) << '\n'
     << "estimator.h = " << (es.h ? std::to_string(*es.h) : std::string("auto")) << '\n'
     << "estimator.j_policy = " << to_string(es.policy) << '\n'
     << "estimator.window_a = " << es.window_a << '\n'
     << "estimator.window_b = " << es.window_b << '\n'
     << "estimator.temperature = " << real(es.temperature) << '\n'
     << "estimator.T_prime = " << list(es.T_prime, num) << '\n'
     << "estimator.allow_j1 = " << (es.allow_j1 ? "true" : "false") << '\n';
  os << "budget.B = " << real(c.budget.model.B) << '\n'
     << "budget.B_h = " << real(c.budget.model.B_h) << '\n'
     << "budget.B_z = " << real(c.budget.model.B_z) << '\n'
     << "budget.V_h = " << real(c.budget.variance.V_h) << '\n'
     << "budget.V_z = " << real(c.budget.variance.V_z) << '\n';
  const RunSection& r = c.run;
  os << "run.seeds = " << list(r.seeds, num) << '\n'
     << "run.n_samples = " << r.n_samples << '\n'
     << "run.iterations = " << r.iterations << '\n'
     << "run.batch = " << r.batch << '\n'
     << "run.optimizer = " << to_string(r.optimizer) << '\n'
     << "run.lr = " << real(r.lr) << '\n'
     << "run.k_sigma = " << real(r.k_sigma) << '\n'
     << "run.eval_samples = " << r.eval_samples << '\n'
     << "run.threshold = " << real(r.threshold) << '\n'
     << "run.collapse_window = " << r.collapse_window << '\n'
     << "run.collapse_drop = " << real(r.collapse_drop) << '\n'
     << "run.probes = " << r.probes << '\n'
     << "run.grad_samples = " << r.grad_samples << '\n';
  return os.str();
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace rlr

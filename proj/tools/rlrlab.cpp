// rlrlab <experiment> --config <path> [--out <dir>] [--seed-offset N] [--workers N]

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlr/config.hpp"
#include "rlr/experiments.hpp"

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kChecksFailed = 1, kConfig = 2, kRuntime = 3 };

int report(const std::string& kind, const std::string& message, int code, json extra = json::object()) {
  json rec = {{"error", kind}, {"message", message}};
  rec.update(extra);
  std::cerr << rec.dump() << '\n';
  return code;
}

int default_workers() {
  if (const char* env = std::getenv("RLRLAB_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw rlr::ConfigError(std::string("RLRLAB_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RLR gradient-estimator lab"};
  std::string experiment, config_path, out_dir;
  std::uint64_t seed_offset = 0;
  int workers = 0;
  app.add_option("experiment", experiment, "plan | bias | variance | truncation | train | selftest")
      ->required()
      ->check(CLI::IsMember({"plan", "bias", "variance", "truncation", "train", "selftest"}));
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--out", out_dir, "output directory (default: the config's output key)");
  app.add_option("--seed-offset", seed_offset, "added to every seed");
  app.add_option("--workers", workers, "worker threads (default: RLRLAB_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("usage", e.what(), kConfig);
  }

  try {
    const rlr::ExperimentConfig cfg = rlr::load_config(config_path);
    if (experiment != rlr::to_string(cfg.experiment))
      return report("config", "command asks for '" + experiment + "' but the config says '" +
                                  rlr::to_string(cfg.experiment) + "'",
                    kConfig);
    rlr::RunOptions opts;
    opts.seed_offset = seed_offset;
    opts.workers = workers > 0 ? workers : default_workers();

    const rlr::ExperimentResult res = rlr::run_experiment(cfg, opts);
    rlr::write_result(res, out_dir.empty() ? cfg.output : out_dir);
    std::cout << res.summary();
    if (!res.passed()) {
      json failed = json::array();
      for (const auto& c : res.checks)
        if (!c.pass) failed.push_back({{"check", c.name}, {"detail", c.detail}});
      return report("checks_failed", "one or more checks failed", kChecksFailed, {{"failed", failed}});
    }
    return kOk;
  } catch (const rlr::ConfigParseError& e) {
    json issues = json::array();
    for (const auto& i : e.issues()) issues.push_back({{"line", i.line}, {"message", i.message}});
    return report("config", "invalid config", kConfig, {{"issues", issues}});
  } catch (const rlr::ConfigError& e) {
    return report("config", e.what(), kConfig);
  } catch (const rlr::ContractViolation& e) {
    return report("contract", e.what(), kRuntime);
  } catch (const rlr::MeterFailure& e) {
    return report("meter", e.what(), kRuntime);
  } catch (const rlr::DivergenceError& e) {
    return report("divergence", e.what(), kRuntime, {{"step", e.step()}});
  } catch (const std::exception& e) {
    return report("runtime", e.what(), kRuntime);
  }
}

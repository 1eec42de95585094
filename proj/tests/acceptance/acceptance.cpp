// One PASS/FAIL line per acceptance criterion, each with its runtime limit.

#include <chrono>
#include <cstdio>
#include <exception>

#include "rlr/experiments.hpp"

int main() {
  const rlr::ExperimentConfig ref = rlr::reference_setup();
  const rlr::RunOptions opts;
  int failed = 0;
  for (const auto& cr : rlr::acceptance_criteria()) {
    const auto t0 = std::chrono::steady_clock::now();
    rlr::Check ch;
    try {
      ch = cr.run(ref, opts);
    } catch (const std::exception& e) {
      ch = {"", false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= cr.time_limit_s;
    const bool pass = ch.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s [%d] %s | %s | %.2fs (limit %.0fs%s)\n", pass ? "PASS" : "FAIL", cr.id, cr.name.c_str(),
                ch.detail.c_str(), secs, cr.time_limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, rlr::acceptance_criteria().size());
  return failed == 0 ? 0 : 1;
}

#pragma once

// Streaming Monte Carlo statistics with an associative merge, and a small
// worker pool that evaluates seeded replications in fixed-size chunks. Chunk
// results are merged in chunk order, so the output does not depend on the
// number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "rlr/diffcore.hpp"
#include "rlr/errors.hpp"
#include "rlr/rng.hpp"

namespace rlr {

struct MCStats {
  long long n = 0;
  Vector mean;
  Vector m2;  // sum of squared deviations from the mean
  long long divergent = 0;

  void add(const Vector& x) {
    if (n == 0) {
      mean = Vector::Zero(x.size());
      m2 = Vector::Zero(x.size());
    }
    ++n;
    const Vector delta = x - mean;
    mean += delta / double(n);
    m2 += (delta.array() * (x - mean).array()).matrix();
  }

  /// Chan et al. pairwise combination.
  void merge(const MCStats& o) {
    divergent += o.divergent;
    if (o.n == 0) return;
    if (n == 0) {
      const long long div = divergent;
      *this = o;
      divergent = div;
      return;
    }
    const double na = double(n), nb = double(o.n), nt = na + nb;
    const Vector delta = o.mean - mean;
    mean += delta * (nb / nt);
    m2 += o.m2 + (delta.array().square() * (na * nb / nt)).matrix();
    n += o.n;
  }

  /// Unbiased per-coordinate variance.
  Vector variance() const {
    if (n < 2) return Vector::Zero(mean.size());
    return m2 / double(n - 1);
  }
  double trace_variance() const { return variance().sum(); }
  Vector standard_error() const { return (variance() / double(std::max<long long>(n, 1))).cwiseSqrt(); }
};

/// Evaluation of one replication from its seed.
using SeededThunk = std::function<Vector(std::uint64_t)>;

inline constexpr long long kMcChunk = 512;

/// n independent evaluations, replication r seeded with derive_seed(seed, r).
/// Divergent evaluations are counted and excluded; more than 1% divergent is
/// a meter failure.
inline MCStats mc_stats(const SeededThunk& thunk, long long n, std::uint64_t seed,
                        int workers = 1) {
  if (n < 2) throw ContractViolation("mc_stats: need at least 2 samples");
  const long long chunks = (n + kMcChunk - 1) / kMcChunk;
  std::vector<MCStats> parts(static_cast<std::size_t>(chunks));
  std::atomic<long long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto run = [&] {
    for (;;) {
      const long long c = next.fetch_add(1);
      if (c >= chunks) return;
      MCStats& part = parts[static_cast<std::size_t>(c)];
      const long long lo = c * kMcChunk, hi = std::min(n, lo + kMcChunk);
      try {
        for (long long r = lo; r < hi; ++r) {
          try {
            part.add(thunk(derive_seed(seed, static_cast<std::uint64_t>(r), stream::kReplicate)));
          } catch (const DivergenceError&) {
            ++part.divergent;
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(chunks);
        return;
      }
    }
  };

  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(chunks)));
  if (nw == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int w = 0; w < nw; ++w) pool.emplace_back(run);
  }
  if (failure) std::rethrow_exception(failure);

  MCStats total;
  for (const MCStats& p : parts) total.merge(p);
  if (total.divergent * 100 > n)
    throw MeterFailure("mc_stats: " + std::to_string(total.divergent) + " of " +
                       std::to_string(n) + " evaluations diverged");
  if (total.n < 2) throw MeterFailure("mc_stats: fewer than 2 finite evaluations");
  return total;
}

/// Parallel map over seeds with deterministic output order.
template <class Result, class Fn>
std::vector<Result> parallel_map(long long count, int workers, Fn&& fn) {
  std::vector<Result> out(static_cast<std::size_t>(count));
  std::atomic<long long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto run = [&] {
    for (;;) {
      const long long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (nw == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(run);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace rlr

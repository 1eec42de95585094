#pragma once

// Counter-style seeding: every random stream is keyed by (seed, index, tag),
// so any single stream can be regenerated without replaying the others.

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace rlr {

using Engine = std::mt19937_64;

namespace stream {
inline constexpr std::uint64_t kLatent = 0x4c4154;     // latent noise z_t
inline constexpr std::uint64_t kParam = 0x50524d;      // parameter noise z_i
inline constexpr std::uint64_t kStart = 0x535452;      // x_T
inline constexpr std::uint64_t kJ = 0x4a4a4a;          // HO start index
inline constexpr std::uint64_t kReplicate = 0x524550;  // MC replication seeds
inline constexpr std::uint64_t kBatch = 0x424154;      // per-iteration batch draws
inline constexpr std::uint64_t kEval = 0x45564c;       // evaluation draws
inline constexpr std::uint64_t kInit = 0x494e49;       // parameter initialisation
inline constexpr std::uint64_t kProbe = 0x50524f;      // FD curvature probes
}  // namespace stream

namespace detail {
// splitmix64 finaliser, used only to mix keys into engine seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                                    std::uint64_t tag) noexcept {
  return detail::mix64(detail::mix64(detail::mix64(seed) ^ index) ^ tag);
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  return Engine(derive_seed(seed, index, tag));
}

inline Eigen::VectorXd normal_vector(Engine& eng, Eigen::Index n, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(eng);
  return v;
}

}  // namespace rlr

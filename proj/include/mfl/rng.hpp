#pragma once

// Counter-based noise: every (seed, task, path, step) tuple maps to its own
// short-lived generator, so draws never depend on evaluation order or thread
// assignment.

#include "mfl/core.hpp"

#include <cstdint>
#include <random>

namespace mfl {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 as a standard UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Standard-normal draws for one grid step. `dB` drives the process,
/// `dB_prime` is the independent companion used by couplings, `uniform` is
/// used for bridge-crossing tests. All three are always drawn.
struct StepNoise {
  Vec dB;
  Vec dB_prime;
  double uniform = 0.0;
};

class NoiseStream {
 public:
  NoiseStream(std::uint64_t master_seed, std::uint64_t task_id, std::uint64_t path_index) noexcept
      : master_seed_(master_seed), task_id_(task_id), path_index_(path_index),
        base_(mix64(mix64(mix64(master_seed) ^ task_id) ^ (path_index * 0xd1b54a32d192ed03ULL))) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t task_id() const noexcept { return task_id_; }
  std::uint64_t path_index() const noexcept { return path_index_; }

  /// Unit-variance draws for step `k` in dimension `dim`.
  StepNoise draw(std::uint64_t k, int dim) const {
    SplitMix64 engine(mix64(base_ ^ mix64(k + 0x632be59bd9b4e019ULL)));
    std::normal_distribution<double> normal(0.0, 1.0);
    StepNoise out;
    out.dB.resize(dim);
    out.dB_prime.resize(dim);
    for (int i = 0; i < dim; ++i) out.dB[i] = normal(engine);
    normal.reset();
    for (int i = 0; i < dim; ++i) out.dB_prime[i] = normal(engine);
    out.uniform = std::uniform_real_distribution<double>(0.0, 1.0)(engine);
    return out;
  }

  /// A derived stream, e.g. for nested inner paths.
  NoiseStream child(std::uint64_t tag) const noexcept {
    return NoiseStream(mix64(base_ ^ 0x5851f42d4c957f2dULL), mix64(tag), path_index_);
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t task_id_;
  std::uint64_t path_index_;
  std::uint64_t base_;
};

}  // namespace mfl

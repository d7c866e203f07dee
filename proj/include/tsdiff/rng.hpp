#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace tsdiff {

/// Seeded pseudo-random source.
///
/// Normal draws use Box-Muller without caching the second variate, so the
/// complete generator state is the engine state. That keeps `state()` /
/// `set_state()` sufficient for bit-exact resume.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream `stream` derived from `seed` (e.g. one per sample row).
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform();

  double normal();

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tsdiff

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace protocad {

/// Seeded generator with portable uniform/normal draws. Normals use
/// Box-Muller without a cached second value, so the whole state is the
/// engine state and round-trips through state()/set_state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  std::uint64_t next_u64() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

/// Stateless seed mixing (splitmix64 finalizer) for deriving child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace protocad

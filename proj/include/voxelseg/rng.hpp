#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace voxelseg {

/// Seeded random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; the uniform and normal draws below
/// are computed here rather than through std:: distributions (whose
/// algorithms are implementation-defined), so the integer stream and every
/// uniform draw are identical on all platforms. Normal draws use Box-Muller
/// and therefore inherit the platform's log/cos rounding.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer on [0, n); unbiased via rejection.
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  double normal();

  /// Mixes a parent seed with a path of indices (epoch, batch, slot, ...)
  /// into an independent child seed. Order of the indices matters.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace voxelseg

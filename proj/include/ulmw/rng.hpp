#pragma once

#include <cstdint>
#include <vector>

namespace ulmw {

// Counter-based pseudo-random generator (SplitMix64 output function applied
// to a keyed counter). Substreams are derived from (seed, stream) so that
// parallel trajectories get independent, reproducible streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(mix(seed ^ 0x9E3779B97F4A7C15ull) ^ mix(stream + 0xD1B54A32D192ED03ull))),
        counter_(0) {}

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ull;
    return mix(counter_ ^ key_);
  }

  // Uniform double in [0,1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Widening-multiply rejection-free mapping is fine here; sampling bias is
    // at most n / 2^64, far below any statistical resolution used in tests.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Inverse-CDF sample from a probability row, accumulating in index order.
  int sample_row(const std::vector<double>& probs) {
    double u = next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace ulmw

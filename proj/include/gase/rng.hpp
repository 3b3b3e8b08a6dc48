#pragma once

#include <cstdint>
#include <vector>

namespace gase {

// SplitMix64 stream. Deterministic across platforms, trivially seedable,
// cheap to fork into independent substreams. All randomness in the project
// flows through this so runs are bit-reproducible for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() %
                                 static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Inverse-CDF draw over an (unnormalized-tolerant) probability vector.
  // Returns the last index with positive mass if rounding runs past the end.
  std::size_t sample(const std::vector<double>& probs) {
    double u = next_double();
    double acc = 0.0;
    std::size_t last_positive = 0;
    bool seen = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) {
        last_positive = i;
        seen = true;
      }
      acc += probs[i];
      if (u < acc && probs[i] > 0.0) return i;
    }
    return seen ? last_positive : 0;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Mixes a seed with stream tags to derive independent substreams, so that
// e.g. (run seed, epoch, step, batch item) addresses a unique stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  Rng mix(seed ^ 0x5bf03635d4f2b4f1ULL);
  std::uint64_t h = mix.next_u64();
  h ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h = Rng(h).next_u64();
  h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h = Rng(h).next_u64();
  h ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return Rng(h).next_u64();
}

}  // namespace gase

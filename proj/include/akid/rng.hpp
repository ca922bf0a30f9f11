#pragma once

#include <cstdint>
#include <string_view>

namespace akid {

// PCG32 (XSH-RR output on a 64-bit LCG). Identical seed and stream give an
// identical sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  std::uint32_t next_u32();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, bound), unbiased.
  std::uint32_t below(std::uint32_t bound);
  bool bernoulli(double p);
  // Standard normal via Box-Muller.
  double normal();

  std::uint64_t state() const { return state_; }
  std::uint64_t increment() const { return inc_; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

// FNV-1a; used to derive per-name seeds.
std::uint64_t hash_name(std::string_view name);

// Derives a seed from several integers (splitmix64 chain).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace akid

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace qrec {

// splitmix64 finalizer; used to derive independent seed streams.
std::uint64_t mix_bits(std::uint64_t x);

// Combine a base seed with a stream tag / counter into a fresh seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t counter = 0);

// FNV-1a over a string, for tagging streams and hashing parameter names.
std::uint64_t fnv1a(std::string_view s);

// Deterministic random stream. All draws are implemented by hand on top of
// the raw mt19937_64 output so results are identical across platforms and
// standard libraries (std::uniform_*_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_raw() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
  int below(int n);

  // k distinct values from [0, n), in draw order (partial Fisher-Yates).
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 gen_;
};

}  // namespace qrec

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace emovec {

// Mixes a base seed with a list of keys into an independent substream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

// Stable 64-bit key for a string (FNV-1a); used to key substreams by id.
std::uint64_t string_key(const char* s);

// mt19937_64 has a standard-fixed output sequence, but the std
// distributions do not, so the conversions below are done by hand to keep
// generated data identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace emovec

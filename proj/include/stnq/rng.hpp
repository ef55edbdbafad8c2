#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace stnq {

// splitmix64 of (base, stream); used everywhere a child seed is derived from
// a parent seed so whole pipelines replay bit-identically.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

// mt19937_64 engine with hand-rolled distributions. The standard engine is
// bit-exact across platforms but std:: distributions are not, so all draws
// go through our own inversion/counting code.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // Box-Muller, mean 0 sd 1
  double normal();

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Knuth's product method; larger means are split into exact chunks.
  long long poisson(double mean);

  // index into probs by CDF inversion; probs must sum to ~1
  int categorical(const std::vector<double>& probs);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stnq

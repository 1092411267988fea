#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ckd {

// Derives an independent sub-stream seed from a master seed and a stream name
// ("data", "init", "sampling", ...).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

// mt19937_64 plus distribution code that does not depend on the standard
// library's (implementation-defined) distribution algorithms, so seeded
// outputs are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t index(std::uint64_t n);
  // Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t k = n; k > 1; --k) std::swap(first[k - 1], first[index(k)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ckd

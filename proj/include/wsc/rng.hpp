#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wsc::rng {

uint64_t fnv1a64(std::string_view bytes);
uint64_t splitmix64(uint64_t x);

// Stable per-component stream id. Runs derive every RNG they own from
// (seed, task_id, component) so adding a component never perturbs another
// component's draws.
uint64_t derive_stream(uint64_t seed, uint64_t task_id, std::string_view component);

// mt19937_64 with hand-rolled distributions. The engine is fully specified
// by the standard and the distributions below avoid the implementation-defined
// behavior of <random> distribution adaptors, so sequences are reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Uniform index in [0, n). Rejection sampling keeps the draw unbiased.
  std::size_t index(std::size_t n);

  double rademacher() { return (eng_() & 1u) ? 1.0 : -1.0; }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, n), in selection order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 eng_;
};

}  // namespace wsc::rng

#include "wsc/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace wsc::rng {

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_stream(uint64_t seed, uint64_t task_id, std::string_view component) {
  uint64_t h = fnv1a64(component);
  h = splitmix64(h ^ splitmix64(seed));
  h = splitmix64(h ^ splitmix64(task_id));
  return h;
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  const uint64_t limit = (UINT64_MAX / n) * n;
  uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) k = n;
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + index(n - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace wsc::rng

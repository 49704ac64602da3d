#include "safeeval/rng.hpp"

namespace safeeval {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(parent);
  for (std::uint64_t p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

} // namespace safeeval

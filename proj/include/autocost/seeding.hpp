#ifndef AUTOCOST_SEEDING_HPP_
#define AUTOCOST_SEEDING_HPP_

#include <cstdint>
#include <string_view>

namespace autocost {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed-derivation rule shared by every component:
//   derive_seed(master, name, index) =
//     splitmix64(splitmix64(master ^ fnv1a64(name)) + index)
// Each (experiment name, run index) pair therefore gets its own stream no
// matter which worker executes it or in what order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a64(name)) + index);
}

}  // namespace autocost

#endif  // AUTOCOST_SEEDING_HPP_

#include "gpvs/random.hpp"

namespace gpvs {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t chain_seed(std::uint64_t master, std::size_t index) {
  std::uint64_t state = master;
  std::uint64_t out = 0;
  for (std::size_t i = 0; i <= index; ++i) out = splitmix64(state);
  return out;
}

}  // namespace gpvs

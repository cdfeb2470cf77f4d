#include "align/random.hpp"

namespace align {

namespace {

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Seed derive_seed(Seed root, std::uint64_t stream, std::uint64_t index) noexcept {
  return mix(mix(mix(root) ^ stream) ^ index);
}

}  // namespace align

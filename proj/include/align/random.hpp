#pragma once

#include <cstdint>
#include <random>

namespace align {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

/// Derives an independent child seed from a root seed, a stream label and an
/// index. Replicate i of stream s always gets the same seed regardless of the
/// order (or thread) in which replicates are executed.
Seed derive_seed(Seed root, std::uint64_t stream, std::uint64_t index) noexcept;

}  // namespace align

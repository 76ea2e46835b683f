#pragma once

#include <cstdint>
#include <string_view>

namespace fedransom {

// Hierarchical seed derivation. Every stochastic component receives a seed
// derived from its parent's seed and a stable tag, so results do not depend
// on execution order or thread count.

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

}  // namespace fedransom

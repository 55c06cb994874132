#pragma once

#include <cstdint>

namespace advface {

/// One step of the splitmix64 generator, used as a 64-bit mixing function.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Child seed derivation: every randomized sub-task gets
/// splitmix64(splitmix64(parent ^ splitmix64(a)) ^ b), so results do not
/// depend on the order in which sub-tasks are executed.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return splitmix64(splitmix64(parent ^ splitmix64(a)) ^ b);
}

}  // namespace advface

#pragma once

#include <cstdint>

namespace brtr {

/// Counter-based generator: draw k of stream s under seed is a pure hash of
/// (seed, s, k), so separate streams can be consumed in any order.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t bits_at(std::uint64_t counter) const;
    /// Uniform on the open interval (0, 1).
    double uniform_at(std::uint64_t counter) const;
    /// Standard normal (Box-Muller over draws 2k and 2k+1).
    double normal_at(std::uint64_t counter) const;

    std::uint64_t next_bits() { return bits_at(counter_++); }
    double uniform() { return uniform_at(counter_++); }
    double normal() { return normal_at(counter_++); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Well-known stream identifiers.
namespace streams {
inline constexpr std::uint64_t kCores = 1;
inline constexpr std::uint64_t kMask = 2;
inline constexpr std::uint64_t kOutlierSupport = 3;
inline constexpr std::uint64_t kOutlierValue = 4;
inline constexpr std::uint64_t kNoise = 5;
inline constexpr std::uint64_t kInitCores = 6;
inline constexpr std::uint64_t kInitSparse = 7;
} // namespace streams

} // namespace brtr

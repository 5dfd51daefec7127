#include "brtr/random.hpp"

#include <cmath>
#include <numbers>

namespace brtr {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL))) {}

std::uint64_t CounterRng::bits_at(std::uint64_t counter) const {
    return splitmix64(key_ ^ splitmix64(counter));
}

double CounterRng::uniform_at(std::uint64_t counter) const {
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal_at(std::uint64_t counter) const {
    const double u1 = uniform_at(2 * counter);
    const double u2 = uniform_at(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace brtr

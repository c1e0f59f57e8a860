#include "lmlab/common/rng.hpp"

#include <cmath>
#include <numbers>

namespace lmlab {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t SeedSplitter::derive(std::string_view stream, std::uint64_t index) const {
    // FNV-1a over the stream name.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : stream) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(splitmix64(seed_ ^ h) + index);
}

double standard_normal(std::mt19937_64& gen) {
    double u1 = uniform01(gen);
    while (u1 <= 0.0) {
        u1 = uniform01(gen);
    }
    const double u2 = uniform01(gen);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lmlab

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lmlab {

// All randomness in a run flows from one seed. Each consumer asks for a
// named stream ("init", "data", "dropout", ...) and an optional index
// (step, row, epoch) and receives an independent generator.
class SeedSplitter {
public:
    explicit SeedSplitter(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t derive(std::string_view stream, std::uint64_t index = 0) const;

    std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const {
        return std::mt19937_64(derive(name, index));
    }

private:
    std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Uniform double in [0, 1) built from the top 53 bits; independent of the
// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Box-Muller normal sample; deterministic across standard libraries.
double standard_normal(std::mt19937_64& gen);

}  // namespace lmlab

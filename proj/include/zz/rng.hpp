#pragma once

#include <cstdint>
#include <random>

namespace zz {

/// Derive an independent, reproducible stream seed from a root seed and a
/// stream index (SplitMix64 finalizer).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

/// Random source used by every simulation. One instance per run; never shared.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard exponential.
    double exponential();

    double normal() { return normal_(engine_); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n)
    {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace zz

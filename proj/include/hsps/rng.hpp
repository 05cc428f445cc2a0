#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hsps {

/// SplitMix64 generator with keyed substreams. Each excitation pulse draws from
/// `PulseRng(seed, pulse_index)`, so a run is reproducible regardless of how pulses
/// are partitioned across threads.
///
/// The variate transforms below are written out rather than taken from <random>
/// because the standard distributions are implementation-defined, and streams must
/// be byte-identical across standard libraries.
class PulseRng {
  public:
    using result_type = std::uint64_t;

    PulseRng(std::uint64_t seed, std::uint64_t stream)
        : state_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) + stream * 0x9e3779b97f4a7c15ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    /// Box-Muller, one variate per call.
    double normal(double sigma) {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace hsps

#pragma once

#include <cstdint>
#include <random>

namespace u5apc {

// Deterministic random source. All transforms are written out explicitly so
// a fixed seed reproduces the same stream on any standard library; nothing
// here relies on implementation-defined std distributions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on [0, bound); bound > 0.
    std::uint64_t integer(std::uint64_t bound);

    // Standard normal via Box-Muller (no cached spare, stream is call-count
    // deterministic).
    double normal();

    double exponential(double rate) ;

    // Derives an independent stream seed from (seed, stream) via splitmix64.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  private:
    std::mt19937_64 gen_;
};

} // namespace u5apc

#ifndef CNCREG_RNG_HPP
#define CNCREG_RNG_HPP

#include <cstdint>
#include <random>

namespace cncreg {

// Deterministic random source. The engine is mt19937_64 (sequence pinned by
// the standard) and the uniform/normal transforms are spelled out here rather
// than taken from <random> distributions, so a given seed produces the same
// stream on every build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; draws are produced in pairs
    double normal();

    // decorrelated seed for a sub-stream (splitmix64 of seed ^ id)
    static std::uint64_t fork(std::uint64_t seed, std::uint64_t stream_id);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cncreg

#endif

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace epiwarn {

// splitmix64 step; mutates the state and returns the next output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// PCG32 (pcg_setseq_64_xsh_rr_32). The 64-bit seed is expanded into the
// (state, sequence) pair through splitmix64 so that nearby seeds give
// unrelated streams. All draw helpers are documented because serialized
// artifacts depend on the exact draw sequence.
class Pcg32 {
public:
    explicit Pcg32(std::uint64_t seed) {
        std::uint64_t s = seed;
        const std::uint64_t init_state = splitmix64(s);
        const std::uint64_t init_seq = splitmix64(s);
        state_ = 0;
        inc_ = (init_seq << 1) | 1u;
        next();
        state_ += init_state;
        next();
    }

    std::uint32_t next() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
        const auto rot = static_cast<std::uint32_t>(old >> 59);
        return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
    }

    // Unbiased integer in [0, bound) via rejection (pcg32_boundedrand).
    std::uint32_t bounded(std::uint32_t bound) {
        const std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            const std::uint32_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // [0,1) with 53-bit resolution; consumes two 32-bit draws (hi then lo).
    double uniform() {
        const std::uint64_t hi = next();
        const std::uint64_t lo = next();
        return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Index into probs by cumulative walk on one uniform() draw. The final
    // bucket absorbs rounding, so the result is always a valid index.
    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

    // Fisher-Yates from the back; one bounded() draw per position.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::uint32_t j = bounded(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

// Deterministic per-run seed for sweep position (value_index, seed_index).
// Keeps manifests re-derivable from the master seed alone.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = master;
    std::uint64_t x = splitmix64(s) ^ (0x9E3779B97F4A7C15ull * (a + 1));
    std::uint64_t y = splitmix64(x) ^ (0xBF58476D1CE4E5B9ull * (b + 1));
    return splitmix64(y);
}

} // namespace epiwarn

#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fedsim {

// splitmix64 finalizer; bijective, good avalanche.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Small deterministic generator (splitmix64). We roll our own distributions
// instead of <random> ones because the standard leaves distribution algorithms
// implementation-defined and we promise bit-identical runs everywhere.
struct Rng {
    uint64_t state = 0;

    Rng() = default;
    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ull;
        return mix64(state);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [0, n), unbiased via rejection
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo) + 1));
    }

    // standard normal; Box-Muller, two uniforms per draw, no cached spare
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }
};

// Independent stream labels. Values are part of the reproducibility contract:
// changing them changes every seeded run.
enum class StreamPurpose : uint64_t {
    Init = 1,
    DataGen = 2,
    Partition = 3,
    DeviceSampling = 4,
    RoundPlan = 5,
    LocalTraining = 6,
    Trial = 7,
};

// Counter-based derivation: every (seed, round, slot, purpose) tuple gets its
// own statistically independent stream, so per-slot work can run in any order
// or thread without changing results.
inline Rng derive_stream(uint64_t master_seed, uint64_t round, uint64_t slot, StreamPurpose purpose) {
    uint64_t h = mix64(master_seed + 0x9e3779b97f4a7c15ull);
    h = mix64(h ^ (round + 0xc2b2ae3d27d4eb4full));
    h = mix64(h ^ (slot + 0x165667b19e3779f9ull));
    h = mix64(h ^ static_cast<uint64_t>(purpose));
    return Rng(h);
}

}  // namespace fedsim

#pragma once
// Deterministic PRNG used wherever the pipeline needs randomness: xoshiro256**
// state-seeded through splitmix64. Pinned here instead of <random> because
// std::uniform_int_distribution is not reproducible across standard library
// implementations, and split/anonymize/training results must be bit-identical
// for a given seed on every platform.
//
// Stream discipline: Xoshiro256(seed, stream) yields independent sequences for
// distinct stream ids. Consumers and their streams:
//   anonymize, dataset split    stream 0
//   model parameter init        stream 0
//   dropout masks               stream 1
//   training batch shuffle      stream 2

#include <cstdint>
#include <cstddef>
#include <bit>
#include <vector>

namespace pktwin {

struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

class Xoshiro256 {
public:
    explicit Xoshiro256(uint64_t seed, uint64_t stream = 0) {
        SplitMix64 sm(seed ^ (0xA0761D6478BD642FULL * (stream + 1)));
        for (auto& s : s_) s = sm.next();
    }

    uint64_t next() {
        const uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = std::rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, n); unbiased via rejection of the short remainder range.
    uint64_t bounded(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    uint64_t s_[4];
};

// Fisher-Yates, high index downward.
template <class T>
void shuffle(std::vector<T>& v, Xoshiro256& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = size_t(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace pktwin

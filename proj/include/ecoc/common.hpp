#pragma once
// Shared plumbing: error taxonomy, deterministic RNG, hashing.

#include <array>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ecoc {

// Exit-code-1 family: bad input, bad config, violated preconditions.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Parse failures carry the 1-based line number of the offending record.
struct ParseError : ValidationError {
    ParseError(const std::string& what, std::size_t line_no)
        : ValidationError(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

// Exit-code-2 family: non-finite losses and other numerical breakdowns.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double u01_from_bits(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;  // [0, 1)
}

/// xoshiro256** generator. Self-contained so that every draw is
/// bit-reproducible across platforms and standard-library versions;
/// the four-word state serializes into checkpoints.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform01() { return u01_from_bits(next()); }

    // Unbiased draw in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ValidationError("Rng::below: n must be positive");
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller without caching so the state stays four words.
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Derive an independent stream; does not disturb this generator.
    Rng split(std::uint64_t stream) const {
        std::uint64_t h = mix64(state_[0] ^ mix64(state_[2] + stream));
        return Rng(h ^ mix64(stream + 0x1234567));
    }

    std::array<std::uint64_t, 4> serialize() const { return state_; }
    static Rng deserialize(const std::array<std::uint64_t, 4>& words) {
        Rng r(0);
        r.state_ = words;
        return r;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

// Deterministic hash-to-uniform used by the synthetic oracle: the draw for a
// (user, position, item) triple never depends on visit order.
inline double hash_u01(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ mix64(a));
    h = mix64(h ^ mix64(b));
    h = mix64(h ^ mix64(c));
    return u01_from_bits(h);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -ln sigmoid(x) = ln(1 + exp(-x)), stable on both tails.
inline double softplus_neg(double x) {
    if (x > 0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

}  // namespace ecoc

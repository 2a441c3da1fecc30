#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace rnas {

// FNV-1a, 64 bit. std::hash is not stable across implementations; this is,
// which matters because digests end up in cache keys and checkpoint files.
class Fnv1a {
public:
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;

    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            hash_ ^= c;
            hash_ *= kPrime;
        }
    }

    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = kOffset;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
    Fnv1a h;
    h.update(bytes);
    return h.digest();
}

std::string to_hex(std::uint64_t value);

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent per-purpose seeds from one run seed, e.g.
// derive_seed(seed, {kTournamentStream, generation}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed);
    for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

using Rng = std::mt19937_64;

// Uniform integer in [0, n). std::uniform_int_distribution is
// implementation-defined, so draws are done by rejection on the raw engine
// output to keep seeded runs identical across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1).
inline double uniform_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

template <typename Container>
const auto& pick(Rng& rng, const Container& c) {
    return c[uniform_index(rng, c.size())];
}

}  // namespace rnas

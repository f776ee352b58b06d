#pragma once
#include <cmath>
#include <cstdint>
#include <limits>

namespace kpz {

// Counter-based streams: every draw is a pure function of (seed, replica, purpose, counter).

enum class Purpose : std::uint64_t {
    noise = 1,
    kick = 2,
    paths = 3,
    functional = 4,
    toy = 5,
    quadrature = 6,
};

inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    Purpose purpose = Purpose::noise;

    std::uint64_t hash() const
    {
        std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
        h = mix64(h ^ replica);
        return mix64(h ^ static_cast<std::uint64_t>(purpose));
    }
    StreamKey with_replica(std::uint64_t r) const { return {seed, r, purpose}; }
    StreamKey with_purpose(Purpose p) const { return {seed, replica, p}; }
};

inline std::uint64_t draw_bits(std::uint64_t key, std::uint64_t counter)
{
    return mix64(key ^ mix64(counter + 0x3c6ef372fe94f82bULL));
}

// uniform in (0,1), never exactly 0 or 1
inline double draw_uniform(std::uint64_t key, std::uint64_t counter)
{
    return (static_cast<double>(draw_bits(key, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// one standard normal per counter (Box-Muller, cosine branch)
inline double draw_gauss(std::uint64_t key, std::uint64_t counter)
{
    const double u1 = draw_uniform(key, 2 * counter);
    const double u2 = draw_uniform(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Sequential view of one stream; satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;
    explicit CounterRng(const StreamKey& k, std::uint64_t start = 0) : key_(k.hash()), ctr_(start) {}
    CounterRng(std::uint64_t raw_key, std::uint64_t start) : key_(raw_key), ctr_(start) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return draw_bits(key_, ctr_++); }

    double uniform() { return draw_uniform(key_, ctr_++); }
    double gauss() { return draw_gauss(key_, ctr_++); }
    std::uint64_t counter() const { return ctr_; }

private:
    std::uint64_t key_;
    std::uint64_t ctr_;
};

} // namespace kpz

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace prefplan::rng {

// splitmix64, used to turn arbitrary integers into well-mixed seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hashBytes(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic child seed for a (base, path...) tuple. Used so that
// parallel workers draw from independent streams that do not depend on
// scheduling order.
template <typename... Parts>
std::uint64_t deriveSeed(std::uint64_t base, Parts... parts) {
    std::uint64_t h = splitmix64(base);
    ((h = splitmix64(h ^ parts)), ...);
    return h;
}

// mt19937_64 with portable uniform/normal mappings. The standard
// distributions are implementation-defined, so the bit-to-double mapping
// is done by hand to keep outputs reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t next() { return gen_(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) {
        return gen_() % n;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace prefplan::rng

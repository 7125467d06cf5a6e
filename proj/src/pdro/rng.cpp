#include "pdro/rng.hpp"

#include <cmath>

namespace pdro {

uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t hash_combine(uint64_t h, uint64_t v) {
    uint64_t x = h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
    return splitmix64(x);
}

uint64_t hash_combine(uint64_t h, std::string_view s) {
    // FNV-1a over the bytes, then mixed into the running hash.
    uint64_t f = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        f ^= c;
        f *= 0x100000001b3ull;
    }
    return hash_combine(h, f);
}

Rng::Rng(uint64_t seed) {
    for (auto& s : state_)
        s = splitmix64(seed);
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53-bit mantissa, shifted off zero so log() stays finite.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_normal_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

double Rng::normal(double mean, double sd) {
    return mean + sd * normal();
}

double Rng::exponential(double lambda) {
    return -std::log(uniform()) / lambda;
}

double Rng::gamma(double shape) {
    // Marsaglia & Tsang (2000); valid for shape >= 1.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x)
            return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

double Rng::beta(double a, double b) {
    const double ga = gamma(a);
    const double gb = gamma(b);
    return ga / (ga + gb);
}

} // namespace pdro

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace pdro {

/// xoshiro256++ generator seeded through splitmix64.
///
/// All samplers are implemented on top of raw 64-bit draws so that streams
/// are bit-identical across platforms and standard-library versions
/// (std::normal_distribution and friends make no such promise).
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform on (0, 1), never returns an exact endpoint.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; the spare draw is cached.
    double normal();
    double normal(double mean, double sd);

    /// Exponential with rate lambda.
    double exponential(double lambda);

    /// Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang squeeze.
    double gamma(double shape);

    /// Beta(a, b) through the two-Gamma ratio.
    double beta(double a, double b);

private:
    uint64_t state_[4];
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

uint64_t splitmix64(uint64_t& x);

/// Order-sensitive seed derivation for independent substreams:
/// hash_seed(master, "scenario", method_id, n, k) and any permutation of the
/// same components give unrelated streams.
uint64_t hash_combine(uint64_t h, uint64_t v);
uint64_t hash_combine(uint64_t h, std::string_view s);

template <typename... Parts>
uint64_t hash_seed(uint64_t master, Parts... parts) {
    uint64_t h = master ^ 0x9e3779b97f4a7c15ull;
    ((h = hash_combine(h, parts)), ...);
    return h;
}

} // namespace pdro
